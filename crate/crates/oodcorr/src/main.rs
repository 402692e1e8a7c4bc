use std::process::ExitCode;

fn main() -> ExitCode {
    oodcorr::cli::run()
}
