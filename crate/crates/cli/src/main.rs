fn main() {
    std::process::exit(kpcadon_cli::run_cli(std::env::args_os()));
}
