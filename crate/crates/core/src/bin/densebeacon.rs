use std::process::ExitCode;

fn main() -> ExitCode {
    densebeacon::cli::main()
}
