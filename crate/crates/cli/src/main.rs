use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dml_cli::run(std::env::args_os()))
}
