fn main() {
    std::process::exit(ulra::cli::run(std::env::args_os()));
}
