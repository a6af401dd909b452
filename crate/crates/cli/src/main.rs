fn main() {
    std::process::exit(volmix_cli::run_cli(std::env::args_os()));
}
