fn main() {
    std::process::exit(renovor::cli::run(std::env::args_os()));
}
