use std::io;
use std::process::ExitCode;

use psys::cli::{run, Io};

fn main() -> ExitCode {
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = run(std::env::args_os(), &mut Io { out: &mut out, err: &mut err });
    ExitCode::from(code as u8)
}
