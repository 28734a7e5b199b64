fn main() {
    std::process::exit(ssm_gpo::cli::run(std::env::args_os()));
}
