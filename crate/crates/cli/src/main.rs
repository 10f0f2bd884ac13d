use clap::Parser;
use replica_mac_cli::args::{Cli, Command};
use replica_mac_cli::commands;

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Sumrate(a) => commands::cmd_sumrate(a).map(drop),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::RateRegion(a) => commands::cmd_rate_region(a).map(drop),
        Command::Optimize(a) => commands::cmd_optimize(a).map(drop),
        Command::Extrapolate(a) => commands::cmd_extrapolate(a).map(drop),
        Command::Validate(a) => commands::cmd_validate(a).map(drop),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            std::process::exit(3);
        }
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(commands::exit_code(&e));
    }
}
