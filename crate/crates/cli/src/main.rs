fn main() {
    std::process::exit(misdirection_cli::run(std::env::args_os()));
}
