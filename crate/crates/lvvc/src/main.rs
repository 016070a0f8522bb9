use std::process::ExitCode;

fn main() -> ExitCode {
    lvvc::cli::main_with(std::env::args_os())
}
