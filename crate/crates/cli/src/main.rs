fn main() {
    std::process::exit(dynkin_cli::main_with_args(std::env::args_os()));
}
