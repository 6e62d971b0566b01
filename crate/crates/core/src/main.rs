fn main() {
    std::process::exit(cma::cli::run(std::env::args_os()));
}
