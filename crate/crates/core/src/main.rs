fn main() {
    env_logger::init();
    std::process::exit(pairmde::cli::run_command(std::env::args_os()));
}
