fn main() {
    std::process::exit(layplan::cli::run(std::env::args_os()));
}
