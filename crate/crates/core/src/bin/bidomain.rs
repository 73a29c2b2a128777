fn main() {
    if let Err(e) = bidomain::cli::configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(bidomain::cli::EXIT_VALIDATION);
    }
    std::process::exit(bidomain::cli::main_with_args(std::env::args_os()));
}
