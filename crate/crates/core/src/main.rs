use std::process::ExitCode;

fn main() -> ExitCode {
    mindstone::cli::init_logging();
    mindstone::cli::main_with(std::env::args_os())
}
