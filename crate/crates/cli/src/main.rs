fn main() {
    std::process::exit(bcwave_cli::run(std::env::args_os()));
}
