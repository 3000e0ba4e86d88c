fn main() {
    std::process::exit(hesitancy_cli::run(std::env::args_os()));
}
