fn main() {
    std::process::exit(structdrive::cli::main_with_args(std::env::args_os()));
}
