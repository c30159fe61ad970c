mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Context, ProtocolArgs, Report};
use error::CliError;

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    let (ctx, report): (Context, Report) = match &cli.command {
        Command::KeyrateIso { common, grid, v } => {
            let ctx = Context::new(common)?;
            let r = commands::keyrate_iso(&ctx, grid, v.as_deref())?;
            (ctx, r)
        }
        Command::KeyrateTemporal { common, grid, noise } => {
            let ctx = Context::new(common)?;
            let r = commands::keyrate_temporal(&ctx, grid, noise)?;
            (ctx, r)
        }
        Command::KeyrateSpatial { common, grid, noise } => {
            let ctx = Context::new(common)?;
            let r = commands::keyrate_spatial(&ctx, grid, noise)?;
            (ctx, r)
        }
        Command::Sweep {
            common,
            grid,
            noise,
            model,
            v,
        } => {
            let ctx = Context::new(common)?;
            let r = commands::sweep(&ctx, grid, noise, *model, v.as_deref())?;
            (ctx, r)
        }
        Command::Figure {
            which,
            common,
            grid,
            noise,
            endpoints,
        } => {
            let ctx = Context::new(common)?;
            let r = commands::figure(&ctx, *which, grid, noise, *endpoints)?;
            (ctx, r)
        }
        Command::McValidate {
            common,
            grid,
            noise,
            model,
            n,
            z,
        } => {
            let ctx = Context::new(common)?;
            let r = commands::mc_validate(&ctx, grid, noise, *model, n.as_deref(), *z)?;
            (ctx, r)
        }
        Command::SdpVerify {
            common,
            k,
            w,
            restarts,
        } => {
            let ctx = Context::new(common)?;
            let r = commands::sdp_verify(&ctx, k.as_deref(), w.as_deref(), *restarts)?;
            (ctx, r)
        }
        Command::ProtocolSim {
            common,
            d,
            k,
            v,
            epsilon,
            n,
            rounds_out,
        } => {
            let ctx = Context::new(common)?;
            let a = ProtocolArgs {
                d: *d,
                k: *k,
                v: *v,
                epsilon: *epsilon,
                n: n.as_deref(),
                rounds_out: rounds_out.as_deref(),
            };
            let r = commands::protocol_sim(&ctx, &a)?;
            (ctx, r)
        }
    };
    output::emit(&report.table, ctx.format, ctx.out.as_deref())?;
    Ok(report.failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("subqkd: {failure}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("subqkd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
