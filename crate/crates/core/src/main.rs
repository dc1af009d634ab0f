use std::process::ExitCode;

fn main() -> ExitCode {
    smartagg::cli::main_with_args(std::env::args_os())
}
