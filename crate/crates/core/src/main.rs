use clap::Parser;

use pcrfle::cli::{error_record, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        let record = error_record(&err);
        eprintln!("{record}");
        if std::fs::create_dir_all(&cli.out).is_ok() {
            let _ = std::fs::write(cli.out.join("error.json"), format!("{record}\n"));
        }
        std::process::exit(err.exit_code());
    }
}
