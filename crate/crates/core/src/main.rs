fn main() {
    std::process::exit(heatplan::cli::run(std::env::args_os()));
}
