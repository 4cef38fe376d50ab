fn main() {
    std::process::exit(spatialhash::cli::main_with_args(std::env::args_os()));
}
