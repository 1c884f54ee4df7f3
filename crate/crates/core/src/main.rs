fn main() {
    std::process::exit(hydrocyl::cli::run(std::env::args_os()));
}
