mod cli;
mod commands;
mod output;
mod settings;

use clap::Parser;

use cli::{Cli, Command};
use settings::Settings;

fn run(cli: Cli) -> tailext::Result<()> {
    let o = &cli.overrides;
    if let Command::Report(args) = &cli.command {
        return commands::report(o, args);
    }
    let s = Settings::resolve(o)?;
    tailext::par::install(o.jobs, || match &cli.command {
        Command::Synth => commands::synth(o, &s),
        Command::Pilot => commands::pilot(o, &s),
        Command::Curate(args) => commands::curate_cmd(o, &s, args),
        Command::Train(args) => commands::train_cmd(o, &s, args),
        Command::Eval(args) => commands::eval(o, &s, args),
        Command::Sweep(args) => commands::sweep(o, &s, args),
        Command::Report(_) => unreachable!("handled above"),
    })
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
