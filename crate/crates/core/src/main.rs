use clap::Parser;
use msgate::cli::{run, Cli, ErrorReport};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        let report = ErrorReport::from(&e);
        eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
        std::process::exit(report.exit_code);
    }
}
