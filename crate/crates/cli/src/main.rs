fn main() {
    std::process::exit(ferret_cli::run(std::env::args_os()));
}
