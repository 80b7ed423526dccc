fn main() {
    std::process::exit(bagbound::cli::main_with_args(std::env::args_os()));
}
