fn main() {
    std::process::exit(slatenet_cli::run(std::env::args_os()));
}
