use std::process::ExitCode;

fn main() -> ExitCode {
    ragraft_assistant::cli::init_tracing();
    ExitCode::from(ragraft_assistant::cli::run(std::env::args_os()) as u8)
}
