use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{PboError, Result};
use crate::profile::{run_method, LoopOutcome, ProfileEstimate};
use crate::rng::{split_seed, stream_rng};
use crate::testbed::{
    compute_metrics, eval_function, lhs_sample, linspace, read_truth_csv, true_profile, write_truth_csv, BlackBox,
    Dataset, MetricsReport,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const TRUTH_FILE: &str = "truth.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub initial_metrics: Option<MetricsReport>,
    pub acquisitions: usize,
    pub error: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub dir: PathBuf,
    pub reps: Vec<RepResult>,
    pub summary: Vec<SummaryRow>,
}

pub fn rep_dir(exp_dir: &Path, rep: usize) -> PathBuf {
    exp_dir.join(format!("rep_{rep:03}"))
}

/// Oracle profile on the final grid, cached under the output directory.
fn truth_for(cfg: &ExperimentConfig, bb: &dyn BlackBox) -> Result<Option<Vec<f64>>> {
    let grid = linspace(cfg.final_axis_size);
    if let Some(ext) = &cfg.external {
        let Some(path) = &ext.truth_csv else {
            return Ok(None);
        };
        let (xs, t) = read_truth_csv(std::io::BufReader::new(File::open(path)?))?;
        if xs.len() != grid.len() || xs.iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(PboError::Config(format!(
                "truth table {} does not match the {}-point final grid",
                path.display(),
                grid.len()
            )));
        }
        return Ok(Some(t));
    }
    let dir = cfg.output_dir.join("truth");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}_c{}_g{}.csv", cfg.function, cfg.control_index, grid.len()));
    if path.exists() {
        let (xs, t) = read_truth_csv(std::io::BufReader::new(File::open(&path)?))?;
        if xs.len() == grid.len() {
            return Ok(Some(t));
        }
    }
    let t = true_profile(bb, &grid, &cfg.oracle)?;
    let tmp = path.with_extension("tmp");
    write_truth_csv(BufWriter::new(File::create(&tmp)?), &grid, &t)?;
    fs::rename(&tmp, &path)?;
    Ok(Some(t))
}

/// Initial design of repetition `rep_seed`, shared by every method.
pub fn initial_design(bb: &dyn BlackBox, n: usize, control_index: usize, rep_seed: u64) -> Result<Dataset> {
    let x = lhs_sample(n, bb.dim(), &mut stream_rng(rep_seed, 0))?;
    let y = (0..n)
        .map(|i| eval_function(bb, &x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(x, DVector::from_vec(y), control_index)
}

fn write_estimate(path: &Path, est: &ProfileEstimate) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    est.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_outcome(dir: &Path, out: &LoopOutcome) -> Result<()> {
    write_estimate(&dir.join("estimate.csv"), &out.estimate)?;
    write_estimate(&dir.join("initial_estimate.csv"), &out.initial_estimate)?;
    let mut trace = BufWriter::new(File::create(dir.join("trace.jsonl"))?);
    for r in &out.records {
        writeln!(trace, "{}", serde_json::to_string(r)?)?;
    }
    trace.flush()?;
    let mut design = BufWriter::new(File::create(dir.join("design.csv"))?);
    let d = out.data.dim();
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(design, "{},y", header.join(","))?;
    for i in 0..out.data.n() {
        let row: Vec<String> = out.data.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(design, "{},{}", row.join(","), out.data.y[i])?;
    }
    design.flush()?;
    Ok(())
}

fn run_rep(cfg: &ExperimentConfig, exp_dir: &Path, truth: Option<&[f64]>, rep: usize) -> RepResult {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let mut result = RepResult {
        rep,
        seed,
        metrics: None,
        initial_metrics: None,
        acquisitions: 0,
        error: None,
    };
    let attempt = || -> Result<(Option<MetricsReport>, Option<MetricsReport>, usize)> {
        let dir = rep_dir(exp_dir, rep);
        fs::create_dir_all(&dir)?;
        let bb = cfg.black_box()?;
        let init = initial_design(bb.as_ref(), cfg.n_init, cfg.control_index, seed)?;
        let mut lc = cfg.loop_config(split_seed(seed, 17));
        lc.checkpoint = Some(dir.join("checkpoint.json"));
        let out = run_method(cfg.method, bb.as_ref(), &init, cfg.m_total, &lc)?;
        write_outcome(&dir, &out)?;
        let (m, m0) = match truth {
            Some(t) => (
                Some(compute_metrics(&out.estimate, t)?),
                Some(compute_metrics(&out.initial_estimate, t)?),
            ),
            None => (None, None),
        };
        Ok((m, m0, out.records.len()))
    };
    match attempt() {
        Ok((m, m0, k)) => {
            result.metrics = m;
            result.initial_metrics = m0;
            result.acquisitions = k;
        }
        Err(e) => result.error = Some((e.kind().to_string(), e.to_string())),
    }
    result
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn write_metrics(path: &Path, reps: &[RepResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "rep,seed,status,rmse,maxad,avgci,coverage,initial_rmse,initial_avgci,acquisitions"
    )?;
    for r in reps {
        let m = r.metrics.as_ref();
        let m0 = r.initial_metrics.as_ref();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.seed,
            if r.error.is_some() { "error" } else { "ok" },
            fmt_opt(m.map(|x| x.rmse)),
            fmt_opt(m.map(|x| x.maxad)),
            fmt_opt(m.map(|x| x.avgci)),
            fmt_opt(m.map(|x| x.coverage)),
            fmt_opt(m0.map(|x| x.rmse)),
            fmt_opt(m0.map(|x| x.avgci)),
            r.acquisitions
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Mean, min and max of every metric over successful repetitions.
pub fn summarize(reps: &[RepResult]) -> Vec<SummaryRow> {
    type Getter = fn(&RepResult) -> Option<f64>;
    let getters: [(&'static str, Getter); 6] = [
        ("rmse", |r| r.metrics.map(|m| m.rmse)),
        ("maxad", |r| r.metrics.map(|m| m.maxad)),
        ("avgci", |r| r.metrics.map(|m| m.avgci)),
        ("coverage", |r| r.metrics.map(|m| m.coverage)),
        ("initial_rmse", |r| r.initial_metrics.map(|m| m.rmse)),
        ("initial_avgci", |r| r.initial_metrics.map(|m| m.avgci)),
    ];
    getters
        .iter()
        .filter_map(|(name, get)| {
            let vals: Vec<f64> = reps.iter().filter_map(get).collect();
            if vals.is_empty() {
                return None;
            }
            Some(SummaryRow {
                metric: name,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                count: vals.len(),
            })
        })
        .collect()
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "metric,mean,min,max,count")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.metric, r.mean, r.min, r.max, r.count)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    rep: usize,
    seed: u64,
    kind: &'a str,
    message: &'a str,
}

/// Runs every repetition of `cfg` on up to `jobs` threads and writes the
/// experiment directory. Repetition failures are recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let exp_dir = cfg.experiment_dir();
    fs::create_dir_all(&exp_dir)?;
    fs::write(exp_dir.join(CONFIG_FILE), cfg.to_json()?)?;
    let truth = {
        let bb = cfg.black_box()?;
        truth_for(cfg, bb.as_ref())?
    };
    if let Some(t) = &truth {
        write_truth_csv(
            BufWriter::new(File::create(exp_dir.join(TRUTH_FILE))?),
            &linspace(cfg.final_axis_size),
            t,
        )?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PboError::Config(format!("cannot start worker pool: {e}")))?;
    let reps: Vec<RepResult> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| run_rep(cfg, &exp_dir, truth.as_deref(), rep))
            .collect()
    });

    write_metrics(&exp_dir.join(METRICS_FILE), &reps)?;
    let summary = summarize(&reps);
    write_summary(&exp_dir.join(SUMMARY_FILE), &summary)?;
    // Always written, empty when every repetition succeeded.
    let mut w = BufWriter::new(File::create(exp_dir.join(ERRORS_FILE))?);
    for r in &reps {
        if let Some((kind, message)) = &r.error {
            let line = ErrorLine {
                rep: r.rep,
                seed: r.seed,
                kind,
                message,
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
    }
    w.flush()?;
    Ok(ExperimentResult {
        dir: exp_dir,
        reps,
        summary,
    })
}
