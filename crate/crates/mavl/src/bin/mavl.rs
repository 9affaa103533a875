fn main() {
    std::process::exit(mavl::harness::cli::run(std::env::args_os()));
}
