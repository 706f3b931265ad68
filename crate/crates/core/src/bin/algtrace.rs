use std::process::ExitCode;

fn main() -> ExitCode {
    algtrace::cli::main_from(std::env::args_os())
}
