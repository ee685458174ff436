fn main() {
    std::process::exit(flexmarket::cli::run(std::env::args_os()));
}
