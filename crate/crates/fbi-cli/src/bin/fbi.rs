fn main() {
    std::process::exit(fbi_cli::run(std::env::args_os(), std::env::vars()));
}
