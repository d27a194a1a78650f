fn main() {
    std::process::exit(lagrl_cli::run(std::env::args_os()));
}
