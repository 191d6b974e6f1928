use clap::Parser;

use foldtrace_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let name = cli.command.name();
    match execute(name, cli.command.args()) {
        Ok(m) => {
            println!("{name} {}: done in {:.2} s", m.name, m.wall_clock_s);
            for (k, v) in &m.counters {
                println!("  {k} = {v}");
            }
            for n in &m.notes {
                println!("  note: {n}");
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            std::process::exit(e.exit_code());
        }
    }
}
