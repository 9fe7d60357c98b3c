fn main() {
    std::process::exit(randquant::harness::run_cli(std::env::args_os()));
}
