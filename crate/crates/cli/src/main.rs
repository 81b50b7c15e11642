mod config;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdslab::harness::{export_summary_csv, export_table_csv, read_table_csv, replication_seeds, write_summary_csv, write_table_csv, ReplicationRow};
use rdslab::{estimate_all, generate_network, run_condition, run_rds, summarize, Condition, Network, ReplicationTable, Sample};

use config::RunConfig;

/// Respondent-driven sampling simulation lab.
#[derive(Debug, Parser)]
#[command(name = "rdslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; omitted keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `experiment`. Stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `replications`.
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    #[arg(long, global = true)]
    sample: Option<PathBuf>,
    /// Population size used by the SS estimator; defaults to `n_nodes`.
    #[arg(long, global = true)]
    pop_size: Option<usize>,
    /// Overrides `mean_cell_size` (default 12).
    #[arg(long, global = true)]
    mean_cell_size: Option<usize>,
    /// Replication table CSV read by `summarize`.
    #[arg(long, global = true)]
    table: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one network.
    Gen,
    /// Draw one sample from a network file.
    Sample,
    /// Estimate from a sample file.
    Estimate,
    /// Run all replications of the configured condition.
    Experiment,
    /// Summarize a replication table.
    Summarize,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (kind, message, code) = match self {
            Failure::Config(m) => ("config", m, 1),
            Failure::Runtime(m) => ("runtime", m, 2),
        };
        eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
        ExitCode::from(code)
    }
}

type Outcome = Result<(), Failure>;

fn runtime(context: &str) -> impl Fn(&dyn std::fmt::Display) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path, Failure> {
    path.as_deref().ok_or_else(|| Failure::Config(format!("{cmd} requires --{flag}")))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: &Option<PathBuf>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Outcome {
    let result = match out {
        Some(path) => File::create(path).and_then(|file| {
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()
        }),
        None => {
            let mut lock = io::stdout().lock();
            f(&mut lock).and_then(|_| lock.flush())
        }
    };
    let dest = out.as_ref().map_or("<stdout>".to_string(), |p| p.display().to_string());
    result.map_err(|e| Failure::Runtime(format!("{dest}: {e}")))
}

fn load_config(cli: &Cli) -> Result<(RunConfig, Condition), Failure> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = cli.reps {
        cfg.replications = reps;
    }
    if let Some(n_c) = cli.mean_cell_size {
        cfg.mean_cell_size = n_c;
    }
    let cond = cfg.validate().map_err(Failure::Config)?;
    Ok((cfg, cond))
}

fn gen(cli: &Cli, cond: &Condition) -> Outcome {
    let seeds = replication_seeds(cond.base_seed, 0);
    let spec = rdslab::NetworkSpec { rng_seed: seeds.network, ..cond.network.clone() };
    let net = generate_network(&spec).map_err(|e| Failure::Config(e.to_string()))?;
    emit(&cli.out, |w| net.write_to(w))
}

fn sample(cli: &Cli, cond: &Condition) -> Outcome {
    let path = required(&cli.network, "network", "sample")?;
    let net = Network::read_from(open(path)?).map_err(|e| runtime(&path.display().to_string())(&e))?;
    let cfg = rdslab::SamplingConfig { rng_seed: replication_seeds(cond.base_seed, 0).sampling, ..cond.sampling.clone() };
    let s = run_rds(&net, &cfg).map_err(|e| runtime("sampling")(&e))?;
    emit(&cli.out, |w| s.write_to(w))
}

fn estimate(cli: &Cli, cond: &Condition) -> Outcome {
    let path = required(&cli.sample, "sample", "estimate")?;
    let s = Sample::read_from(open(path)?).map_err(|e| runtime(&path.display().to_string())(&e))?;
    let pop_size = cli.pop_size.unwrap_or(cond.network.n_nodes);
    let ss = rdslab::SsOptions { rng_seed: replication_seeds(cond.base_seed, 0).ss, ..cond.ss.clone() };
    let row = ReplicationRow {
        replication: 0,
        estimates: estimate_all(&s, pop_size, cond.mean_cell_size, &ss),
        realized_n: s.len(),
        reseeds: s.reseeds(),
        exhausted: s.exhausted,
    };
    let table = ReplicationTable { label: cond.label.clone(), rows: vec![row] };
    let mut buf = Vec::new();
    write_table_csv(&[table], &mut buf).map_err(|e| runtime("estimate")(&e))?;
    emit(&cli.out, |w| w.write_all(&buf))
}

fn experiment(cli: &Cli, cfg: &RunConfig, cond: &Condition) -> Outcome {
    let dir = required(&cli.out, "out", "experiment")?;
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let table = run_condition(cond).map_err(|e| runtime("experiment")(&e))?;
    let summary = summarize(&table);
    export_table_csv(std::slice::from_ref(&table), &dir.join("table.csv")).map_err(|e| runtime("export")(&e))?;
    export_summary_csv(&[summary], &dir.join("summary.csv")).map_err(|e| runtime("export")(&e))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Failure::Runtime(format!("{}: {e}", cfg_path.display())))
}

fn summarize_table(cli: &Cli) -> Outcome {
    let path = required(&cli.table, "table", "summarize")?;
    let tables = read_table_csv(open(path)?).map_err(|e| runtime(&path.display().to_string())(&e))?;
    let summaries: Vec<_> = tables.iter().map(summarize).collect();
    let mut buf = Vec::new();
    write_summary_csv(&summaries, &mut buf).map_err(|e| runtime("summarize")(&e))?;
    emit(&cli.out, |w| w.write_all(&buf))
}

fn run(cli: &Cli) -> Outcome {
    let (cfg, cond) = load_config(cli)?;
    eprintln!("# effective configuration\n{}", cfg.to_toml());
    match cli.command {
        Command::Gen => gen(cli, &cond),
        Command::Sample => sample(cli, &cond),
        Command::Estimate => estimate(cli, &cond),
        Command::Experiment => experiment(cli, &cfg, &cond),
        Command::Summarize => summarize_table(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::Config(e.to_string().trim().to_string()).report(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
