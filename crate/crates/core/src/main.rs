fn main() {
    std::process::exit(armd::cli::run(std::env::args_os()));
}
