fn main() {
    std::process::exit(shopguard::cli::run(std::env::args_os()));
}
