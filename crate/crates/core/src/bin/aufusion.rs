fn main() {
    std::process::exit(aufusion::cli::dispatch(std::env::args_os()));
}
