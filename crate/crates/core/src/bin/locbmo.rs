fn main() {
    std::process::exit(locbmo::cli::main_with_args(std::env::args_os()));
}
