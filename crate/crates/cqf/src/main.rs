use std::process::ExitCode;

fn main() -> ExitCode {
    let code = cqf::run(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code)
}
