fn main() {
    std::process::exit(fuseforge::cli::main_with_args(std::env::args_os()));
}
