use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let stdout = std::io::stdout();
    let code = ctt_cli::run(&args, &mut stdout.lock());
    ExitCode::from(code as u8)
}
