use std::process::ExitCode;

fn main() -> ExitCode {
    let result = chainfis_cli::run_command(std::env::args_os());
    if result.exit_code == 0 {
        print!("{}", result.summary);
    } else {
        eprint!("{}", result.summary);
    }
    ExitCode::from(result.exit_code as u8)
}
