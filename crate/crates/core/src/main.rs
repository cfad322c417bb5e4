fn main() {
    std::process::exit(shallow_ntc::cli::run(std::env::args_os()));
}
