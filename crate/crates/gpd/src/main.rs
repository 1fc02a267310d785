fn main() {
    std::process::exit(gpd::cli::main_with_args(std::env::args()));
}
