use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmaudit::pipeline::{self, PipelineError, RunConfig};

/// Work-order prediction with a streaming anomaly-detection audit stage.
///
/// Settings resolve as: built-in defaults, then the `--config` TOML file,
/// then `PMAUDIT_*` environment variables, then command-line flags.
#[derive(Debug, Parser)]
#[command(name = "pmaudit", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "PMAUDIT_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "PMAUDIT_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PMAUDIT_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "PMAUDIT_OUT")]
    out: Option<PathBuf>,
    /// Print the resolved config and exit without side effects.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args, Default)]
struct FleetArgs {
    /// Number of synthetic machines.
    #[arg(long)]
    machines: Option<usize>,
    /// Days per machine.
    #[arg(long)]
    days: Option<usize>,
    /// Alarm-rate inflation ahead of work orders.
    #[arg(long)]
    gain: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct InputArgs {
    /// Alarm CSV (default: <out>/alarms.csv).
    #[arg(long)]
    alarms: Option<PathBuf>,
    /// Work-order CSV (default: <out>/work_orders.csv).
    #[arg(long)]
    work_orders: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic fleet (alarm and work-order CSVs plus manifest).
    Fleetgen(FleetArgs),
    /// Filter, rebalance and train the forest; writes forest.model.
    Train(InputArgs),
    /// Stream-audit the test period of every machine; writes traces/.
    Audit {
        #[command(flatten)]
        inputs: InputArgs,
        /// Trained model (default: <out>/forest.model).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score the traces; writes report.csv, boxplot.csv, boxplot.svg, summary.json.
    Eval,
    /// Print the comparison table (also saved as report.txt).
    Report,
    /// fleetgen, train, audit and eval in one pass.
    Run(FleetArgs),
}

fn apply_fleet(cfg: &mut RunConfig, a: &FleetArgs) {
    if let Some(v) = a.machines {
        cfg.fleet.n_machines = v;
    }
    if let Some(v) = a.days {
        cfg.fleet.n_days = v;
    }
    if let Some(v) = a.gain {
        cfg.fleet.degradation_gain = v;
    }
}

fn apply_inputs(cfg: &mut RunConfig, a: &InputArgs) {
    if let Some(v) = &a.alarms {
        cfg.inputs.alarms = Some(v.clone());
    }
    if let Some(v) = &a.work_orders {
        cfg.inputs.work_orders = Some(v.clone());
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    match &cli.cmd {
        Cmd::Fleetgen(a) | Cmd::Run(a) => apply_fleet(&mut cfg, a),
        Cmd::Train(i) => apply_inputs(&mut cfg, i),
        Cmd::Audit { inputs, model } => {
            apply_inputs(&mut cfg, inputs);
            if let Some(m) = model {
                cfg.inputs.model = Some(m.clone());
            }
        }
        Cmd::Eval | Cmd::Report => {}
    }
    let cfg = cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = resolve(cli)?;
    if cli.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(PipelineError::ConfigInvalid("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Fleetgen(_) => pipeline::cmd_fleetgen(&cfg),
        Cmd::Train(_) => pipeline::cmd_train(&cfg).map(drop),
        Cmd::Audit { .. } => pipeline::cmd_audit(&cfg),
        Cmd::Eval => pipeline::cmd_eval(&cfg).map(drop),
        Cmd::Report => pipeline::cmd_report(&cfg).map(|text| print!("{text}")),
        Cmd::Run(_) => pipeline::cmd_run(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PMAUDIT_LOG", "info"))
        .format(|buf, rec| writeln!(buf, "{} {}", rec.level().as_str().to_lowercase(), rec.args()))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('"', "'");
            eprintln!("error kind={} code={} message=\"{msg}\"", e.kind(), e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
