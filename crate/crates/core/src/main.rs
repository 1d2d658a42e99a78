fn main() {
    std::process::exit(pathlse::cli::run_from(std::env::args_os()));
}
