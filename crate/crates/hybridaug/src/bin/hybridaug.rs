fn main() {
    let code = hybridaug::cli::run(std::env::args().collect());
    std::process::exit(code);
}
