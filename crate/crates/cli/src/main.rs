fn main() {
    std::process::exit(lmminfer_cli::run(std::env::args().collect()));
}
