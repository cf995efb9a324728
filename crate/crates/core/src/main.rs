fn main() {
    std::process::exit(navier_wall::cli::run(std::env::args_os()));
}
