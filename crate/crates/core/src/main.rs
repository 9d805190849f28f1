fn main() {
    std::process::exit(chemobound::cli::main_with_args(std::env::args_os()));
}
