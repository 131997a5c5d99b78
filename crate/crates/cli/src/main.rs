fn main() {
    std::process::exit(netdual_cli::run(std::env::args_os()));
}
