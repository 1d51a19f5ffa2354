fn main() -> std::process::ExitCode {
    chiralfb::cli::run(std::env::args_os())
}
