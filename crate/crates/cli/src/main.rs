use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = <foleygen_cli::Cli as clap::Parser>::parse();
    match foleygen_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
