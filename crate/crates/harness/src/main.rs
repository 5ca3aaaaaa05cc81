fn main() {
    std::process::exit(proscan_harness::cli::main_with_args(std::env::args_os()));
}
