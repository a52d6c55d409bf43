use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::design::to_native;
use crate::error::{invalid, PboError, Result};

/// An expensive deterministic simulator with one distinguished control input.
pub trait BlackBox: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn control_index(&self) -> usize;
    fn native_bounds(&self) -> &[(f64, f64)];
    /// Evaluates at a point given in native units.
    fn eval_native(&self, x: &[f64]) -> Result<f64>;
}

/// Evaluates `bb` at a unit-cube point.
pub fn eval_function(bb: &dyn BlackBox, x_unit: &[f64]) -> Result<f64> {
    if x_unit.len() != bb.dim() {
        return invalid(format!(
            "{} expects {} inputs, got {}",
            bb.name(),
            bb.dim(),
            x_unit.len()
        ));
    }
    if x_unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid(format!("input {x_unit:?} lies outside the unit cube"));
    }
    bb.eval_native(&to_native(x_unit, bb.native_bounds()))
}

pub const BENCHMARK_NAMES: [&str; 4] = ["branin", "kyger3d", "kyger2d", "squiggle"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Branin,
    Kyger3d,
    Kyger2d,
    Squiggle,
}

impl BenchmarkKind {
    fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            BenchmarkKind::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
            BenchmarkKind::Kyger3d => vec![(0.0, 1.0); 3],
            BenchmarkKind::Kyger2d => vec![(0.0, 2.0 * PI), (0.0, 2.5 * PI)],
            BenchmarkKind::Squiggle => vec![(0.1, 1.0); 4],
        }
    }

    fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Branin => "branin",
            BenchmarkKind::Kyger3d => "kyger3d",
            BenchmarkKind::Kyger2d => "kyger2d",
            BenchmarkKind::Squiggle => "squiggle",
        }
    }

    fn eval(self, x: &[f64]) -> f64 {
        match self {
            BenchmarkKind::Branin => branin(x[0], x[1]),
            BenchmarkKind::Kyger3d => kyger3d(x[0], x[1], x[2]),
            BenchmarkKind::Kyger2d => kyger2d(x[0], x[1]),
            BenchmarkKind::Squiggle => squiggle(x),
        }
    }
}

fn branin(x1: f64, x2: f64) -> f64 {
    let a = 1.0;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let r = 6.0;
    let s = 10.0;
    let t = 1.0 / (8.0 * PI);
    a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
}

fn kyger3d(x1: f64, x2: f64, x3: f64) -> f64 {
    let tau = 2.0 * PI;
    (-x1 - (tau * x1).cos()).exp() + (tau * x3).sin() + (-x3 * (tau * x1).sin()).exp()
        + (tau * x2).cos()
        - (-x2 * (tau * x1).cos()).exp()
}

fn kyger2d(x1: f64, x2: f64) -> f64 {
    let centered = (x1 - 0.5).powi(2) + (x2 - 0.5).powi(2);
    let squares = x1 * x1 + x2 * x2;
    ((x1 * x1).sin() + 1.0 + centered) * (x2.cos() + 1.5) * (4.0 - x1 / 3.0).exp()
        - (x1 - 0.1) * squares
}

fn squiggle(x: &[f64]) -> f64 {
    const SIGMA: f64 = 0.2;
    let x1 = x[0];
    let radius: f64 = x[1..].iter().map(|v| v * v).sum();
    let curve = (2.0 * PI * x1 * x1).sin() / 4.0 - x1 / 10.0 + 0.5;
    let z = (radius - curve) / SIGMA;
    x1 * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// One of the built-in synthetic test functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub control_index: usize,
    bounds: Vec<(f64, f64)>,
}

impl Benchmark {
    pub fn new(kind: BenchmarkKind, control_index: usize) -> Result<Self> {
        let bounds = kind.bounds();
        if control_index >= bounds.len() {
            return invalid(format!(
                "control index {control_index} out of range for {}",
                kind.name()
            ));
        }
        Ok(Self {
            kind,
            control_index,
            bounds,
        })
    }
}

impl BlackBox for Benchmark {
    fn name(&self) -> &str {
        self.kind.name()
    }
    fn dim(&self) -> usize {
        self.bounds.len()
    }
    fn control_index(&self) -> usize {
        self.control_index
    }
    fn native_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn eval_native(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return invalid(format!("{} expects {} inputs", self.name(), self.dim()));
        }
        Ok(self.kind.eval(x))
    }
}

/// Looks up a benchmark by name (case-insensitive).
pub fn benchmark(name: &str, control_index: usize) -> Result<Benchmark> {
    let kind = match name.to_ascii_lowercase().as_str() {
        "branin" => BenchmarkKind::Branin,
        "kyger3d" => BenchmarkKind::Kyger3d,
        "kyger2d" => BenchmarkKind::Kyger2d,
        "squiggle" => BenchmarkKind::Squiggle,
        other => {
            return Err(PboError::Config(format!(
                "unknown function '{other}', expected one of {BENCHMARK_NAMES:?}"
            )))
        }
    };
    Benchmark::new(kind, control_index)
}

/// External simulator driven over a line protocol: one whitespace-separated
/// native input vector per line on stdin, one scalar per line on stdout.
pub struct SubprocessBlackBox {
    name: String,
    control_index: usize,
    bounds: Vec<(f64, f64)>,
    io: Mutex<ChildIo>,
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessBlackBox {
    pub fn spawn(
        name: impl Into<String>,
        command: &str,
        args: &[String],
        bounds: Vec<(f64, f64)>,
        control_index: usize,
    ) -> Result<Self> {
        if control_index >= bounds.len() {
            return invalid("control index out of range for subprocess black box");
        }
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            name: name.into(),
            control_index,
            bounds,
            io: Mutex::new(ChildIo {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Drop for SubprocessBlackBox {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

impl BlackBox for SubprocessBlackBox {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.bounds.len()
    }
    fn control_index(&self) -> usize {
        self.control_index
    }
    fn native_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn eval_native(&self, x: &[f64]) -> Result<f64> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| PboError::BlackBox("simulator handle poisoned".into()))?;
        let line: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(io.stdin, "{}", line.join(" "))?;
        io.stdin.flush()?;
        let mut reply = String::new();
        if io.stdout.read_line(&mut reply)? == 0 {
            return Err(PboError::BlackBox(format!("{} closed its output", self.name)));
        }
        let value: f64 = reply.trim().parse().map_err(|_| {
            PboError::BlackBox(format!("{} replied with non-numeric '{}'", self.name, reply.trim()))
        })?;
        if !value.is_finite() {
            return Err(PboError::BlackBox(format!("{} returned {value}", self.name)));
        }
        Ok(value)
    }
}
