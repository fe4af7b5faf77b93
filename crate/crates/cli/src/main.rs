fn main() {
    std::process::exit(biseld_cli::run(std::env::args_os()));
}
