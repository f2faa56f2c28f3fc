use std::process::ExitCode;

use clap::Parser;
use partition_cde::cli::{run, Args};

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    let result = args.into_config().and_then(|cfg| {
        let out = run(&cfg)?;
        for o in &out {
            eprintln!(
                "{}: selected M={} ({} samples, birth/death/move/weight acceptance {:.3}/{:.3}/{:.3}/{:.3})",
                o.dir.display(),
                o.partition.m,
                o.chain.samples.len(),
                o.chain.moves[0].rate(),
                o.chain.moves[1].rate(),
                o.chain.moves[2].rate(),
                o.chain.moves[3].rate(),
            );
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
