fn main() {
    std::process::exit(permconf::cli::main_with_args(std::env::args_os()));
}
