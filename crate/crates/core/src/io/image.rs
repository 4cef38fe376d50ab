//! Netpbm depth and color images.
//!
//! Depth is 16-bit binary PGM with maxval 65535; a sample `k` means
//! `k / depth_scale` meters and 0 means no measurement. Color is 8-bit PPM.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{GraymapHeader, PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageDecoder};

use crate::error::{format_err, invalid, Error, Result};
use crate::tsdf::DepthImage;

/// Units per meter used when no scale is given.
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        invalid(format!("depth scale must be positive, got {scale}"))
    }
}

fn decode<R: BufRead>(input: R, want: ColorType, maxval: u32) -> Result<(usize, usize, Vec<u8>)> {
    let dec = PnmDecoder::new(input).map_err(|e| format_err(format!("bad netpbm header: {e}")))?;
    let found = dec.header().maximal_sample();
    if dec.color_type() != want || found != maxval {
        return Err(format_err(format!(
            "expected {want:?} with maxval {maxval}, found {:?} with maxval {found}",
            dec.color_type()
        )));
    }
    let (w, h) = dec.dimensions();
    let mut buf = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut buf).map_err(|e| format_err(format!("bad netpbm data: {e}")))?;
    Ok((w as usize, h as usize, buf))
}

pub fn read_depth_from<R: BufRead>(input: R, depth_scale: f64) -> Result<DepthImage> {
    check_scale(depth_scale)?;
    let (w, h, buf) = decode(input, ColorType::L16, 65535)?;
    let data = buf
        .chunks_exact(2)
        .map(|c| (u16::from_ne_bytes([c[0], c[1]]) as f64 / depth_scale) as f32)
        .collect();
    Ok(DepthImage { width: w, height: h, data })
}

pub fn write_depth_to<W: Write>(out: W, depth: &DepthImage, depth_scale: f64) -> Result<()> {
    check_scale(depth_scale)?;
    if depth.data.len() != depth.width * depth.height {
        return invalid("depth buffer does not match its size");
    }
    let mut samples = Vec::with_capacity(depth.data.len());
    for &d in &depth.data {
        let k = if d.is_finite() && d > 0.0 { (d as f64 * depth_scale).round() } else { 0.0 };
        if k > u16::MAX as f64 {
            return invalid(format!("depth {d} m does not fit 16 bits at scale {depth_scale}"));
        }
        samples.push(k as u16);
    }
    let header = GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: depth.width as u32,
        height: depth.height as u32,
        maxwhite: 65535,
    };
    PnmEncoder::new(out)
        .with_header(header.into())
        .encode(&samples[..], depth.width as u32, depth.height as u32, ExtendedColorType::L16)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

pub fn read_color_from<R: BufRead>(input: R) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let (w, h, buf) = decode(input, ColorType::Rgb8, 255)?;
    Ok((w, h, buf.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

pub fn write_color_to<W: Write>(out: W, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    if rgb.len() != width * height {
        return invalid("color buffer does not match its size");
    }
    PnmEncoder::new(out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .encode(rgb.as_flattened(), width as u32, height as u32, ExtendedColorType::Rgb8)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::from(e).at(path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::from(e).at(path))?))
}

pub fn read_depth(path: &Path, depth_scale: f64) -> Result<DepthImage> {
    read_depth_from(open(path)?, depth_scale).map_err(|e| e.at(path))
}

pub fn write_depth(path: &Path, depth: &DepthImage, depth_scale: f64) -> Result<()> {
    let mut out = create(path)?;
    write_depth_to(&mut out, depth, depth_scale).and_then(|_| Ok(out.flush()?)).map_err(|e| e.at(path))
}

pub fn read_color(path: &Path) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    read_color_from(open(path)?).map_err(|e| e.at(path))
}

pub fn write_color(path: &Path, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    let mut out = create(path)?;
    write_color_to(&mut out, width, height, rgb).and_then(|_| Ok(out.flush()?)).map_err(|e| e.at(path))
}
