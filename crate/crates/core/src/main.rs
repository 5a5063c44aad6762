fn main() {
    std::process::exit(bqc::cli::main_with_args(std::env::args_os()));
}
