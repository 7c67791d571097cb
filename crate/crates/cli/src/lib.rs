//! Command-line front end: data and dictionary generation, training,
//! evaluation, sweeps and diagnostics, all written as CSV with JSON sidecars.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use commands::Context;
use config::{ExperimentConfig, Profile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// A problem the user can fix by changing the invocation or configuration.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "nalista", version, about = "Classical and unrolled sparse recovery experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML file overlaid on the profile defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Built-in defaults to start from [default: desk].
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw the measurement matrix and the fixed test set.
    GenData,
    /// Optimize the analytic dictionary W for each dataset.
    ComputeDict,
    /// Train the configured learned models.
    Train {
        /// Train NA-ALISTA with inputs {r}, {u} and {r,u} instead.
        #[arg(long)]
        ablation: bool,
    },
    /// Report test NMSE of ISTA, FISTA and the trained models.
    Eval {
        /// Evaluate the input-ablation models.
        #[arg(long)]
        ablation: bool,
    },
    /// Train and evaluate along the configured sweep axis.
    Sweep,
    /// Proxy correlations, predicted parameters and assumption ratios.
    Diagnose,
}

/// Resolve the configuration from the profile, the TOML overlay and flags.
pub fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.profile.unwrap_or(Profile::Desk), cli.config.as_deref())?;
    if let Some(p) = cli.profile {
        if cfg.profile != p {
            anyhow::bail!("--profile {p:?} conflicts with `profile = {:?}` in the config file", cfg.profile);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

/// Record the resolved configuration in the output directory, refusing to
/// mix outputs of different configurations without `--force`.
fn record_config(ctx: &Context) -> anyhow::Result<()> {
    let path = ctx.out.path("config.json");
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": ctx.out.config_hash,
            "config": ctx.cfg,
        }))?
    );
    if let Ok(old) = std::fs::read_to_string(&path) {
        if old == text {
            return Ok(());
        }
        if !ctx.out.force {
            return Err(UsageError(format!(
                "{} holds outputs of a different configuration; pass --force or choose another --out",
                ctx.out.root.display()
            ))
            .into());
        }
    }
    std::fs::create_dir_all(&ctx.out.root).with_context(|| format!("creating {}", ctx.out.root.display()))?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Exit status for an error: usage/config problems map to 1, the rest to 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|c| {
        c.is::<UsageError>()
            || c.is::<output::Exists>()
            || matches!(c.downcast_ref::<nalista_core::Error>(), Some(nalista_core::Error::Config(_)))
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

/// Execute a parsed command line and return the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let ctx = Context::new(cfg.clone(), cfg.out_dir.clone(), cli.force);
    let result = record_config(&ctx).and_then(|()| match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::ComputeDict => commands::compute_dict(&ctx),
        Command::Train { ablation } => commands::train(&ctx, *ablation),
        Command::Eval { ablation } => commands::eval(&ctx, *ablation).map(|_| ()),
        Command::Diagnose => commands::diagnose(&ctx),
        Command::Sweep => commands::sweep(&ctx).and_then(|failures| {
            if failures.is_empty() {
                Ok(())
            } else {
                let values: Vec<String> = failures.iter().map(|f| f.value.to_string()).collect();
                anyhow::bail!("sweep points failed: {}", values.join(", "))
            }
        }),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Parse `args` (including the program name) and run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
