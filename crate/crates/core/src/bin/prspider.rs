fn main() {
    std::process::exit(prspider::cli::main_with_args(std::env::args_os()));
}
