fn main() {
    std::process::exit(offeval_harness::cli::run(std::env::args_os()));
}
