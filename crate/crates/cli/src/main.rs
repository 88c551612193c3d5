fn main() {
    std::process::exit(hyperimm_cli::run(std::env::args_os()));
}
