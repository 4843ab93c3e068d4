fn main() {
    std::process::exit(qanneal::cli::main_with_args(std::env::args_os()));
}
