fn main() {
    std::process::exit(daa::cli::run(std::env::args_os()));
}
