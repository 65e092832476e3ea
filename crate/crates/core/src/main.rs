fn main() {
    std::process::exit(normforge::cli::run(std::env::args_os()));
}
