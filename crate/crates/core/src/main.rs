fn main() {
    std::process::exit(cvrlab::cli::main_with_args(std::env::args().collect()));
}
