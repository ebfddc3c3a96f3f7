use std::process::ExitCode;

fn main() -> ExitCode {
    homog::cli::main()
}
