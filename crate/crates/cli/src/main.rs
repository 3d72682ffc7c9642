fn main() {
    std::process::exit(ldg_cli::run(std::env::args_os()));
}
