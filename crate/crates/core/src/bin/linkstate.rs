fn main() {
    std::process::exit(linkstate::cli::main_with_args(std::env::args_os()));
}
