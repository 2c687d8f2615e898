fn main() {
    std::process::exit(acia_cli::run(std::env::args_os()));
}
