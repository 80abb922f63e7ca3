fn main() {
    std::process::exit(ouu_cli::run(std::env::args_os()));
}
