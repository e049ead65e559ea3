use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dfresid_cli::run(std::env::args_os()))
}
