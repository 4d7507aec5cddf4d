fn main() {
    std::process::exit(spikeid_cli::cli::main_with_args(std::env::args_os()));
}
