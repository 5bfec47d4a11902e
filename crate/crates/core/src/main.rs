fn main() {
    std::process::exit(wskde::cli::main_with_args(std::env::args_os()));
}
