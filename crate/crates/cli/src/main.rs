fn main() {
    std::process::exit(reachkit_cli::run(std::env::args_os()));
}
