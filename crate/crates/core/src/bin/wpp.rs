fn main() {
    std::process::exit(wpp::cli::run(std::env::args_os()));
}
