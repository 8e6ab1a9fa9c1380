fn main() {
    std::process::exit(ncd::cli::main_with_args(std::env::args_os()));
}
