use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let mut io = repolens_cli::Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    let code = repolens_cli::run(std::env::args_os(), &mut io);
    stdout.flush().ok();
    ExitCode::from(code as u8)
}
