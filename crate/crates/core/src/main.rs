fn main() {
    std::process::exit(superfock::cli::main_with_args(std::env::args_os()));
}
