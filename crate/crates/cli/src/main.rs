fn main() {
    std::process::exit(dictstereo_cli::main_with_args(std::env::args_os()));
}
