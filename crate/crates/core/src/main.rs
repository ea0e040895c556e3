use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(adaptive_ssr::cli::run_from_args(std::env::args_os()))
}
