fn main() {
    std::process::exit(coinfer_core::cli::main_with_args(std::env::args_os()));
}
