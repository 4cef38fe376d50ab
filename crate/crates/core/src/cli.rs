//! Command-line front end. Every relative path is resolved against
//! `--root`; input files are only read.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::bench::{Grid, KeyKind, Op};
use crate::error::{invalid, Error, Result};
use crate::geometry::voxel_downsample;
use crate::hashmap::Backend;
use crate::io::dataset::{self, read_camera, read_trajectory, scene_frames, Dataset, Mode, PipelineConfig, Scene};
use crate::io::image::write_depth;
use crate::io::{read_ply, write_mesh, write_point_cloud, PlyEncoding};
use crate::tsdf::synthetic::fill_sphere;
use crate::tsdf::{RaycastMode, VoxelBlockGrid};

#[derive(Debug, Parser)]
#[command(name = "spatialhash", version, about = "Spatial hashing, voxelization and TSDF reconstruction")]
pub struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub root: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time hash map operations over a workload grid and write CSV.
    Bench(BenchArgs),
    /// Keep one point per occupied voxel of a PLY point cloud.
    Voxelize(VoxelizeArgs),
    /// Fuse depth frames into a volume snapshot.
    Integrate(IntegrateArgs),
    /// Render a depth image from a volume snapshot.
    Raycast(RaycastArgs),
    /// Extract a surface mesh or point set from a volume snapshot.
    Mesh(MeshArgs),
    /// Write a synthetic RGB-D dataset with a matching config file.
    Synth(SynthArgs),
}

fn parse_rho(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("uniqueness must be in (0, 1], got {v}"))
    }
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "generic", value_parser = parse_from_str::<Backend>)]
    pub backends: Vec<Backend>,
    #[arg(long, value_delimiter = ',', default_value = "insert,activate,find,erase", value_parser = parse_from_str::<Op>)]
    pub ops: Vec<Op>,
    #[arg(long, value_delimiter = ',', default_value = "3d", value_parser = parse_from_str::<KeyKind>)]
    pub key_kinds: Vec<KeyKind>,
    /// Value sizes in bytes (default 4·2^j for j = 0..12).
    #[arg(long, value_delimiter = ',')]
    pub value_bytes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000,1000000")]
    pub capacities: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.99", value_parser = parse_rho)]
    pub uniqueness: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip cells whose estimated memory exceeds this many bytes.
    #[arg(long, default_value_t = 1 << 30)]
    pub max_bytes: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long)]
    pub voxel_size: f64,
    #[arg(long, default_value = "generic", value_parser = parse_from_str::<Backend>)]
    pub backend: Backend,
    /// Write ASCII instead of binary PLY.
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    /// Pipeline config (key = value) describing a dataset under the root.
    #[arg(long, conflicts_with = "synthetic")]
    pub config: Option<PathBuf>,
    /// Use a built-in scene instead of a dataset.
    #[arg(long, value_parser = parse_from_str::<Scene>)]
    pub synthetic: Option<Scene>,
    /// Defaults for a synthetic run; a config file sets its own mode.
    #[arg(long, default_value = "fast", value_parser = parse_from_str::<Mode>)]
    pub mode: Mode,
    /// Frames of a synthetic plane, or a cap on dataset frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Override the voxel size of the chosen mode or config.
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Snapshot destination (default: the config's output, or volume.bin).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RaycastArgs {
    pub snapshot: PathBuf,
    pub output: PathBuf,
    /// Trajectory file holding the viewing pose.
    #[arg(long)]
    pub pose: PathBuf,
    /// Which pose of the trajectory file to use, by position.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Intrinsics JSON; its depth_scale encodes the output image.
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long, default_value = "global", value_parser = parse_from_str::<RaycastMode>)]
    pub mode: RaycastMode,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    pub snapshot: PathBuf,
    pub output: PathBuf,
    /// Write zero-crossing points with normals instead of a mesh.
    #[arg(long)]
    pub points: bool,
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory, created if missing.
    pub dir: PathBuf,
    #[arg(long, default_value = "plane", value_parser = parse_from_str::<Scene>)]
    pub scene: Scene,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value = "fast", value_parser = parse_from_str::<Mode>)]
    pub mode: Mode,
}

fn encoding(ascii: bool) -> PlyEncoding {
    if ascii {
        PlyEncoding::Ascii
    } else {
        PlyEncoding::Binary
    }
}

fn read_grid(path: &Path) -> Result<VoxelBlockGrid> {
    let f = File::open(path).map_err(|e| Error::from(e).at(path))?;
    VoxelBlockGrid::read_snapshot(BufReader::new(f)).map_err(|e| e.at(path))
}

fn write_grid(grid: &VoxelBlockGrid, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::from(e).at(path))?;
    let mut w = BufWriter::new(f);
    grid.write_snapshot(&mut w).and_then(|_| Ok(w.flush()?)).map_err(|e| e.at(path))
}

fn bench(root: &Path, a: &BenchArgs) -> Result<()> {
    let grid = Grid {
        backends: a.backends.clone(),
        ops: a.ops.clone(),
        key_kinds: a.key_kinds.clone(),
        value_bytes: a.value_bytes.clone().unwrap_or_else(|| Grid::standard().value_bytes),
        capacities: a.capacities.clone(),
        uniqueness: a.uniqueness.clone(),
        trials: a.trials,
        threads: rayon::current_num_threads(),
        seed: a.seed,
        max_bytes: a.max_bytes,
    };
    let records = match &a.out {
        Some(p) => {
            let path = root.join(p);
            let f = File::create(&path).map_err(|e| Error::from(e).at(&path))?;
            let mut w = BufWriter::new(f);
            grid.run(&mut w)?
        }
        None => grid.run(&mut io::stdout().lock())?,
    };
    eprintln!("ran {} of {} workloads", records.len(), grid.specs().len());
    Ok(())
}

fn voxelize(root: &Path, a: &VoxelizeArgs) -> Result<()> {
    let input = root.join(&a.input);
    let cloud = read_ply(&input)?.cloud;
    let t0 = Instant::now();
    let v = voxel_downsample(&cloud.positions, a.voxel_size, a.backend)?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    write_point_cloud(&root.join(&a.output), &cloud.select(&v.indices), encoding(a.ascii))?;
    println!("{} points -> {} voxels in {ms:.1} ms", cloud.len(), v.coords.len());
    Ok(())
}

fn integrate(root: &Path, a: &IntegrateArgs) -> Result<()> {
    let t0 = Instant::now();
    let (grid, frames, out) = match (&a.config, a.synthetic) {
        (Some(cfg), _) => {
            let mut config = PipelineConfig::read(&root.join(cfg))?;
            if let Some(s) = a.voxel_size {
                config.tsdf.voxel_size = s;
            }
            let ds = Dataset::open(root, &config)?;
            let n = a.frames.map_or(ds.len(), |f| f.min(ds.len()));
            let mut grid = VoxelBlockGrid::new(config.tsdf, config.capacity)?;
            for k in 0..n {
                grid.integrate_frame(&ds.frame(k)?)?;
            }
            (grid, n, a.out.clone().unwrap_or(config.output))
        }
        (None, Some(scene)) => {
            let mut tsdf = a.mode.defaults();
            if let Some(s) = a.voxel_size {
                tsdf.voxel_size = s;
            }
            let mut grid = VoxelBlockGrid::new(tsdf, 1 << 12)?;
            let n = match scene {
                Scene::Plane => {
                    let frames = scene_frames(scene, a.frames.unwrap_or(10));
                    for f in &frames {
                        grid.integrate_frame(f)?;
                    }
                    frames.len()
                }
                // A closed surface needs views from all sides; fill the
                // band analytically instead.
                Scene::Sphere => {
                    fill_sphere(&mut grid, dataset::SPHERE_CENTER, dataset::SPHERE_RADIUS)?;
                    0
                }
            };
            (grid, n, a.out.clone().unwrap_or_else(|| "volume.bin".into()))
        }
        (None, None) => return invalid("integrate needs --config or --synthetic"),
    };
    let path = root.join(out);
    write_grid(&grid, &path)?;
    println!(
        "integrated {frames} frames into {} blocks in {:.1} ms -> {}",
        grid.block_count(),
        t0.elapsed().as_secs_f64() * 1e3,
        path.display()
    );
    Ok(())
}

fn raycast(root: &Path, a: &RaycastArgs) -> Result<()> {
    let mut grid = read_grid(&root.join(&a.snapshot))?;
    let cam = read_camera(&root.join(&a.intrinsics))?;
    let pose_path = root.join(&a.pose);
    let poses = read_trajectory(&pose_path)?;
    let Some(&(_, pose)) = poses.get(a.frame) else {
        return Err(Error::InvalidArgument(format!("no pose at position {} ({} poses)", a.frame, poses.len()))
            .at(&pose_path));
    };
    let intr = cam.intrinsics();
    if a.mode == RaycastMode::Local {
        grid.select_view_blocks(&intr, &pose)?;
    }
    let r = grid.raycast(&intr, &pose, a.mode)?;
    let mut depth = crate::tsdf::DepthImage::new(r.width, r.height);
    for (d, (&z, &m)) in depth.data.iter_mut().zip(r.depth.iter().zip(&r.mask)) {
        *d = if m { z } else { 0.0 };
    }
    write_depth(&root.join(&a.output), &depth, cam.depth_scale)?;
    println!("{} of {} pixels hit", r.hits(), r.width * r.height);
    Ok(())
}

fn mesh(root: &Path, a: &MeshArgs) -> Result<()> {
    let grid = read_grid(&root.join(&a.snapshot))?;
    let out = root.join(&a.output);
    if a.points {
        let pc = grid.extract_points();
        write_point_cloud(&out, &pc, encoding(a.ascii))?;
        println!("{} points", pc.len());
    } else {
        let m = grid.extract_mesh();
        write_mesh(&out, &m, encoding(a.ascii))?;
        println!("{} vertices, {} triangles", m.vertices.len(), m.triangles.len());
    }
    Ok(())
}

fn synth(root: &Path, a: &SynthArgs) -> Result<()> {
    let dir = root.join(&a.dir);
    dataset::write_synthetic(&dir, a.scene, a.frames, a.mode)?;
    println!("wrote {} frames to {}", a.frames, dir.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return invalid("--threads must be at least 1");
        }
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let root = &cli.root;
    match &cli.command {
        Command::Bench(a) => bench(root, a),
        Command::Voxelize(a) => voxelize(root, a),
        Command::Integrate(a) => integrate(root, a),
        Command::Raycast(a) => raycast(root, a),
        Command::Mesh(a) => mesh(root, a),
        Command::Synth(a) => synth(root, a),
    }
}

/// Parses arguments and runs; returns the process exit code. Failures print
/// one line to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
