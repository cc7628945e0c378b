use clap::Parser;

fn main() {
    let cli = ocp_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match ocp_cli::run(&cli, &mut stdout) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
