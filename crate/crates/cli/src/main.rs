fn main() {
    std::process::exit(effbound_cli::main_with_args(std::env::args_os()));
}
