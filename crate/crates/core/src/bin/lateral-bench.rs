use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lateral_bench::cli::run(std::env::args_os()))
}
