fn main() {
    std::process::exit(smcal::cli::run_command(std::env::args_os()));
}
