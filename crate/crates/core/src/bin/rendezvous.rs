use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rendezvous::cli::run(std::env::args_os()))
}
