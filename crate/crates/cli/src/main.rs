fn main() {
    std::process::exit(kppwave_cli::main_with(std::env::args_os()));
}
