fn main() {
    std::process::exit(aprox::cli::main_with_args(std::env::args_os()));
}
