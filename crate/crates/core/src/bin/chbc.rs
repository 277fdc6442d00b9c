fn main() {
    std::process::exit(chbc::cli::run(std::env::args_os()));
}
