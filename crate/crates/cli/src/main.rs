fn main() {
    std::process::exit(ndtt_cli::main_with_args(std::env::args_os()));
}
