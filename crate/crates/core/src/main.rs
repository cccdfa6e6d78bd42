fn main() {
    std::process::exit(schurss::cli::run_from(std::env::args_os()));
}
