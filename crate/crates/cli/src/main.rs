fn main() -> std::process::ExitCode {
    indemnity_cli::main_with_args(std::env::args_os())
}
