use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use pbo_core::candidates::{tricands, tricands_plus, DEFAULT_FRINGE_FRAC};
use pbo_core::harness::{export_plotdata, run_experiment, ExperimentConfig};
use pbo_core::profile::{Method, SurrogateKind};
use pbo_core::testbed::{benchmark, linspace, true_profile, write_truth_csv, OracleSettings};
use pbo_core::{PboError, Result};

#[derive(Parser)]
#[command(name = "pbo", version, about = "Profile Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads for repetitions.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        function: Option<String>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long, value_parser = parse_surrogate)]
        surrogate: Option<SurrogateKind>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_init: Option<usize>,
        #[arg(long)]
        m_total: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override any config field: `--set key=<json value>`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write plot-ready CSV tables for a results directory.
    Export { results: PathBuf },
    /// Print the oracle profile `xstar,T` of a built-in function.
    Truth {
        function: String,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        control_index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print triangulation candidates for a design CSV (header row, numeric
    /// columns; a column named `y` is ignored).
    Candidates {
        design: PathBuf,
        /// Treat this column as the control input and expand over a control axis.
        #[arg(long)]
        control_index: Option<usize>,
        #[arg(long, default_value_t = 10)]
        axis_size: usize,
        #[arg(long, default_value_t = DEFAULT_FRINGE_FRAC)]
        fringe_frac: f64,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown method {s}"))
}

fn parse_surrogate(s: &str) -> std::result::Result<SurrogateKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown surrogate {s}"))
}

fn apply_overrides(cfg: ExperimentConfig, set: &[String]) -> Result<ExperimentConfig> {
    if set.is_empty() {
        return Ok(cfg);
    }
    let mut doc = serde_json::to_value(&cfg)?;
    for item in set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| PboError::Config(format!("--set expects KEY=VALUE, got {item}")))?;
        // Bare words are taken as strings.
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.into()));
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| PboError::Config("config is not an object".into()))?;
        if !obj.contains_key(key) {
            return Err(PboError::Config(format!("unknown config field {key}")));
        }
        obj.insert(key.to_string(), value);
    }
    serde_json::from_value(doc).map_err(|e| PboError::Config(format!("bad override: {e}")))
}

fn read_design(path: &PathBuf) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| PboError::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| PboError::Config(format!("bad header in {}: {e}", path.display())))?
        .clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim() != "y")
        .map(|(i, _)| i)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PboError::Config(format!("{}: {e}", path.display())))?;
        let row = keep
            .iter()
            .map(|&i| {
                rec[i].trim().parse::<f64>().map_err(|_| {
                    PboError::Config(format!("{}: non-numeric value on data row {}", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::Run {
            config,
            jobs,
            function,
            method,
            surrogate,
            reps,
            seed,
            n_init,
            m_total,
            output,
            set,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(v) = function {
                cfg.function = v;
            }
            if let Some(v) = method {
                cfg.method = v;
            }
            if let Some(v) = surrogate {
                cfg.surrogate = v;
            }
            if let Some(v) = reps {
                cfg.repetitions = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = n_init {
                cfg.n_init = v;
            }
            if let Some(v) = m_total {
                cfg.m_total = v;
            }
            if let Some(v) = output {
                cfg.output_dir = v;
            }
            let cfg = apply_overrides(cfg, &set)?;
            let result = run_experiment(&cfg, jobs)?;
            let failed = result.reps.iter().filter(|r| r.error.is_some()).count();
            let mut out = stdout.lock();
            writeln!(out, "{}", result.dir.display())?;
            for row in &result.summary {
                writeln!(out, "{} mean={} min={} max={}", row.metric, row.mean, row.min, row.max)?;
            }
            if failed > 0 {
                return Err(PboError::NumericalFailure(format!(
                    "{failed} of {} repetitions failed; see {}",
                    result.reps.len(),
                    result.dir.join("errors.jsonl").display()
                )));
            }
        }
        Command::Export { results } => {
            let report = export_plotdata(&results)?;
            let mut out = stdout.lock();
            writeln!(out, "{}", report.metrics_table.display())?;
            writeln!(out, "{}", report.scatter_table.display())?;
            for f in &report.curve_files {
                writeln!(out, "{}", f.display())?;
            }
        }
        Command::Truth {
            function,
            grid,
            control_index,
            out,
        } => {
            if grid == 0 {
                return Err(PboError::InvalidArgument("grid must be at least 1".into()));
            }
            let bb = benchmark(&function, control_index)?;
            let xs = linspace(grid);
            let t = true_profile(&bb, &xs, &OracleSettings::default())?;
            match out {
                Some(path) => write_truth_csv(BufWriter::new(std::fs::File::create(path)?), &xs, &t)?,
                None => write_truth_csv(BufWriter::new(stdout.lock()), &xs, &t)?,
            }
        }
        Command::Candidates {
            design,
            control_index,
            axis_size,
            fringe_frac,
        } => {
            let rows = read_design(&design)?;
            if rows.is_empty() {
                return Err(PboError::InvalidArgument(format!("{} has no rows", design.display())));
            }
            let mut out = BufWriter::new(stdout.lock());
            match control_index {
                Some(ci) => {
                    let d = rows[0].len();
                    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
                    let set = tricands_plus(&x, ci, &linspace(axis_size), fringe_frac)?;
                    set.write_csv(&mut out)?;
                }
                None => {
                    let tc = tricands(&rows, fringe_frac)?;
                    let k = rows[0].len();
                    let header: Vec<String> = (1..=k).map(|j| format!("x{j}")).collect();
                    writeln!(out, "{},tag", header.join(","))?;
                    for (p, tag) in tc.points.iter().zip(&tc.tags) {
                        let vals: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                        writeln!(out, "{},{}", vals.join(","), tag.label())?;
                    }
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}
