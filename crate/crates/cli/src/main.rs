fn main() {
    std::process::exit(levy_nested_cli::run(std::env::args_os()));
}
