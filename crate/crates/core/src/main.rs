use std::process::ExitCode;

fn main() -> ExitCode {
    robust_ps::cli::main_with(std::env::args_os())
}
