fn main() {
    std::process::exit(binsd::cli::run_command(std::env::args_os()));
}
