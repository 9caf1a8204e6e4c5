fn main() {
    std::process::exit(gas_cli::run(std::env::args_os()));
}
