fn main() {
    std::process::exit(sicm::cli::run(std::env::args_os()));
}
