fn main() {
    std::process::exit(gva_cli::main_with_args(std::env::args_os()));
}
