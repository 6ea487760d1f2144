fn main() {
    std::process::exit(hetnet_core::cli::run_command(std::env::args()));
}
