use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    kronfold::cli::init_threads();
    let code = kronfold::cli::run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
