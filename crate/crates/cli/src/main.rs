use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(qsdlab_cli::run(std::env::args_os()))
}
