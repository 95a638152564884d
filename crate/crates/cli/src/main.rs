fn main() {
    std::process::exit(mhscale_cli::main_with_args(std::env::args_os()));
}
