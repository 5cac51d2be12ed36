fn main() {
    std::process::exit(healthguard::cli::run(std::env::args_os()));
}
