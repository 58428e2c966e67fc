use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(promptlab_cli::run() as u8)
}
