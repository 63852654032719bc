use clap::Parser;
use treeshap_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    if let Err(e) = execute(&cli, &mut stdout, &mut stderr) {
        use std::io::Write;
        let _ = stdout.flush();
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
