use std::io::Write;

fn main() {
    let seed = std::env::var(mpglab::cli::SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    let code = mpglab::cli::main_with(std::env::args_os(), seed.as_deref(), &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
