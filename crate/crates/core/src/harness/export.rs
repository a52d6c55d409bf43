use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::run::{rep_dir, CONFIG_FILE, METRICS_FILE, TRUTH_FILE};
use crate::error::{PboError, Result};
use crate::profile::SurrogateKind;

/// Files written by [`export_plotdata`].
#[derive(Debug, Clone, Default)]
pub struct ExportReport {
    pub experiments: usize,
    pub curve_files: Vec<PathBuf>,
    pub metrics_rows: usize,
    pub metrics_table: PathBuf,
    pub scatter_table: PathBuf,
}

fn missing(dir: &Path) -> PboError {
    PboError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!(
            "no experiment found in {}; expected {CONFIG_FILE}, {METRICS_FILE} and rep_NNN/estimate.csv \
             either there or in its subdirectories",
            dir.display()
        ),
    ))
}

fn experiment_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(missing(root));
    }
    if root.join(CONFIG_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CONFIG_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(missing(root));
    }
    Ok(dirs)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| {
        PboError::Io(std::io::Error::new(e.kind(), format!("cannot open {}: {e}", path.display())))
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?.split(',').map(str::to_string).collect(),
        None => return Err(PboError::Config(format!("{} is empty", path.display()))),
    };
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if !line.is_empty() {
            rows.push(line.split(',').map(str::to_string).collect());
        }
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| PboError::Config(format!("{} has no column {name}", path.display())))
}

/// Writes plot-ready tables for every experiment under `root` into
/// `root/plotdata`: one profile curve per repetition, a combined metrics
/// table and a coverage-vs-AvgCI table.
pub fn export_plotdata(root: &Path) -> Result<ExportReport> {
    let dirs = experiment_dirs(root)?;
    let out = root.join("plotdata");
    let curves = out.join("curves");
    fs::create_dir_all(&curves)?;
    let mut report = ExportReport {
        experiments: dirs.len(),
        metrics_table: out.join("metrics.csv"),
        scatter_table: out.join("coverage_avgci.csv"),
        ..Default::default()
    };
    let mut metrics = BufWriter::new(File::create(&report.metrics_table)?);
    writeln!(metrics, "function,surrogate,method,rep,rmse,maxad,avgci,coverage")?;
    let mut scatter = BufWriter::new(File::create(&report.scatter_table)?);
    writeln!(scatter, "function,surrogate,method,rep,coverage,avgci")?;

    for dir in dirs {
        let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
        let surrogate = match cfg.surrogate {
            SurrogateKind::Gp => "gp",
            SurrogateKind::Dgp => "dgp",
        };
        let tag = format!("{},{},{}", cfg.function, surrogate, cfg.method.name());
        let truth_path = dir.join(TRUTH_FILE);
        let truth: Option<Vec<String>> = if truth_path.is_file() {
            let (h, rows) = read_table(&truth_path)?;
            let t = column(&h, "T", &truth_path)?;
            Some(rows.into_iter().map(|r| r[t].clone()).collect())
        } else {
            None
        };

        let mpath = dir.join(METRICS_FILE);
        let (header, rows) = read_table(&mpath)?;
        let idx: Vec<usize> = ["rep", "status", "rmse", "maxad", "avgci", "coverage"]
            .iter()
            .map(|c| column(&header, c, &mpath))
            .collect::<Result<_>>()?;
        for row in &rows {
            if row[idx[1]] != "ok" {
                continue;
            }
            let rep: usize = row[idx[0]]
                .parse()
                .map_err(|_| PboError::Config(format!("bad rep index in {}", mpath.display())))?;
            if !row[idx[2]].is_empty() {
                writeln!(
                    metrics,
                    "{tag},{rep},{},{},{},{}",
                    row[idx[2]], row[idx[3]], row[idx[4]], row[idx[5]]
                )?;
                writeln!(scatter, "{tag},{rep},{},{}", row[idx[5]], row[idx[4]])?;
                report.metrics_rows += 1;
            }

            let est_path = rep_dir(&dir, rep).join("estimate.csv");
            let (eh, erows) = read_table(&est_path)?;
            let cols: Vec<usize> = ["xstar", "mu_T", "ci_lo", "ci_hi"]
                .iter()
                .map(|c| column(&eh, c, &est_path))
                .collect::<Result<_>>()?;
            let curve = curves.join(format!("{}_rep{rep:03}.csv", cfg.label()));
            let mut w = BufWriter::new(File::create(&curve)?);
            writeln!(w, "xstar,mu_T,ci_lo,ci_hi,truth")?;
            for (k, r) in erows.iter().enumerate() {
                let t = truth.as_ref().and_then(|t| t.get(k)).map_or("", |s| s.as_str());
                writeln!(w, "{},{},{},{},{t}", r[cols[0]], r[cols[1]], r[cols[2]], r[cols[3]])?;
            }
            w.flush()?;
            report.curve_files.push(curve);
        }
    }
    metrics.flush()?;
    scatter.flush()?;
    Ok(report)
}
