fn main() {
    std::process::exit(meniscus::cli::args::run(std::env::args_os()));
}
