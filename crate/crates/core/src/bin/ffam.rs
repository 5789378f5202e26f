fn main() {
    std::process::exit(ffam::cli::run(std::env::args_os()));
}
