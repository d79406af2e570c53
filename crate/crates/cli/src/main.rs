use clap::Parser;

fn main() {
    let cli = match cip_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { cip_cli::EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = cip_cli::run(&cli).and_then(|r| cip_cli::emit(&r)) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
