use std::panic;

fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = panic::catch_unwind(|| {
        ppto::cli::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
    })
    .unwrap_or(ppto::cli::EXIT_SOLVER);
    std::process::exit(code);
}
