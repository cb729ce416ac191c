fn main() {
    std::process::exit(masque_cli::run(std::env::args_os()));
}
