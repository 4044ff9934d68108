fn main() {
    std::process::exit(regionwise_cli::run(std::env::args_os()));
}
