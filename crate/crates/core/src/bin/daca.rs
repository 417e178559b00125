fn main() {
    std::process::exit(daca::cli::main_with_args(std::env::args_os()));
}
