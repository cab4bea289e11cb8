//! Runtime and memory benchmark. Each cell runs in a child process so its
//! resident-set peak is isolated; the parent samples `VmRSS` at 20 Hz and
//! the child reports its own `VmHWM` on exit.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::args::{BenchArgs, BenchMethod, CellArgs};
use super::commands::{csv_writer, finish, fmt};
use crate::data::generate_ads_split;
use crate::error::{Error, Result};
use crate::extensions::{counting_fit, gd_full_fit, gd_minibatch_counting};
use crate::metrics::counting_concordance;
use crate::predictors::{FitConfig, Predictor};
use crate::seed;
use crate::spectral::AdmmConfig;

const SAMPLE_EVERY: Duration = Duration::from_millis(50);

/// `VmRSS` or `VmHWM` of a process in bytes, from `/proc`.
pub fn proc_memory(pid: &str, field: &str) -> Option<u64> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = text.lines().find(|l| l.starts_with(field))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn method_name(m: BenchMethod) -> &'static str {
    match m {
        BenchMethod::Spectral => "spectral",
        BenchMethod::GdFull => "gd-full",
        BenchMethod::GdMinibatch => "gd-minibatch",
    }
}

/// First epoch after which the loss moves by at most `1e-6` relative.
fn epochs_to_tol(history: &[f64]) -> usize {
    history
        .windows(2)
        .position(|w| (w[1] - w[0]).abs() <= 1e-6 * w[1].abs().max(1e-12))
        .map_or(history.len(), |k| k + 2)
}

/// Child side: fits one cell and prints
/// `epochs_to_tol,final_ci,converged,data_rss,peak_rss` on stdout.
pub fn run_cell(args: &CellArgs) -> Result<()> {
    let train = generate_ads_split(args.n, args.max_items, args.seed, "train")?;
    let test = generate_ads_split((args.n / 5).max(20), args.max_items, args.seed, "test")?;
    let data_rss = proc_memory("self", "VmRSS:").unwrap_or(0);
    let start = Predictor::linear(train.d());
    let (p, epochs, converged) = match args.method {
        BenchMethod::Spectral => {
            let r = counting_fit(&train, &start, &AdmmConfig::default())?;
            (r.predictor, r.diagnostics.len(), r.converged)
        }
        BenchMethod::GdFull => {
            let cfg = FitConfig {
                epochs: 20_000,
                tol: 1e-6,
                ..FitConfig::default()
            };
            let (p, h) = gd_full_fit(&train, &start, &cfg)?;
            let n = h.len();
            (p, n, n < cfg.epochs)
        }
        BenchMethod::GdMinibatch => {
            let anchors = train.n_events();
            let cfg = FitConfig {
                epochs: 200,
                step_size: 0.05,
                batch_size: ((anchors as f64) * args.batch_frac).ceil().max(1.0) as usize,
                seed: seed::derive(args.seed, "bench-minibatch"),
                tol: 0.0,
            };
            let (p, h) = gd_minibatch_counting(&train, &start, &cfg)?;
            let e = epochs_to_tol(&h);
            (p, e, e < h.len())
        }
    };
    let ci = counting_concordance(&test, &p.eta(test.item_features(), test.n_items()))?;
    let peak = proc_memory("self", "VmHWM:").unwrap_or(0);
    println!("{epochs},{ci},{converged},{data_rss},{peak}");
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub method: &'static str,
    pub n: usize,
    pub d: usize,
    pub wall_time_s: f64,
    pub peak_resident_bytes: u64,
    /// Resident set once the data is generated, before fitting.
    pub data_resident_bytes: u64,
    pub epochs_to_tol: Option<usize>,
    pub final_ci: f64,
    pub status: String,
}

fn run_child(args: &BenchArgs, method: BenchMethod, n: usize) -> Result<BenchRecord> {
    let exe = std::env::current_exe().map_err(|e| Error::io("current executable", e))?;
    let mut child = Command::new(&exe)
        .args([
            "bench-cell",
            "--method",
            method_name(method),
            "--n",
            &n.to_string(),
            "--max-items",
            &args.max_items.to_string(),
            "--seed",
            &args.seed.to_string(),
            "--batch-frac",
            &args.batch_frac.to_string(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::io(&exe, e))?;
    let pid = child.id().to_string();
    let started = Instant::now();
    let limit = Duration::from_secs_f64(args.timeout.max(0.0));
    let mut sampled = 0u64;
    let status = loop {
        if let Some(rss) = proc_memory(&pid, "VmRSS:") {
            sampled = sampled.max(rss);
        }
        match child.try_wait().map_err(|e| Error::io(&exe, e))? {
            Some(s) => break Some(s),
            None if started.elapsed() > limit => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            None => std::thread::sleep(SAMPLE_EVERY),
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let mut record = BenchRecord {
        method: method_name(method),
        n,
        d: crate::data::ADS_DIM,
        wall_time_s: wall,
        peak_resident_bytes: sampled,
        data_resident_bytes: 0,
        epochs_to_tol: None,
        final_ci: f64::NAN,
        status: "timeout".into(),
    };
    let Some(status) = status else {
        return Ok(record);
    };
    let mut out = String::new();
    let mut err = String::new();
    if let Some(mut s) = child.stdout.take() {
        let _ = s.read_to_string(&mut out);
    }
    if let Some(mut s) = child.stderr.take() {
        let _ = s.read_to_string(&mut err);
    }
    if !status.success() {
        record.status = format!(
            "failed: {}",
            err.lines().last().unwrap_or("").replace(',', " ")
        );
        return Ok(record);
    }
    let fields: Vec<&str> = out.trim().split(',').collect();
    if fields.len() != 5 {
        record.status = "failed: malformed cell output".into();
        return Ok(record);
    }
    record.epochs_to_tol = fields[0].parse().ok();
    record.final_ci = fields[1].parse().unwrap_or(f64::NAN);
    record.status = if fields[2] == "true" { "ok" } else { "cap" }.into();
    record.data_resident_bytes = fields[3].parse().unwrap_or(0);
    record.peak_resident_bytes = record
        .peak_resident_bytes
        .max(fields[4].parse().unwrap_or(0));
    Ok(record)
}

/// Sweeps every (n, method) cell sequentially. `bench.csv` holds the
/// deterministic columns; times and memory go to `measurements.csv`.
pub fn run_bench(args: &BenchArgs) -> Result<Vec<BenchRecord>> {
    if args.ns.is_empty() || args.methods.is_empty() {
        return Err(Error::Usage("--ns and --methods must be non-empty".into()));
    }
    if args.ns.contains(&0) || args.max_items == 0 {
        return Err(Error::Usage("--ns and --max-items must be positive".into()));
    }
    if !(args.batch_frac > 0.0 && args.batch_frac <= 1.0) {
        return Err(Error::Usage("--batch-frac must lie in (0, 1]".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut records = Vec::new();
    for &n in &args.ns {
        for &m in &args.methods {
            let r = run_child(args, m, n)?;
            eprintln!(
                "bench {} n={} status={} time={:.2}s peak={}B",
                r.method, r.n, r.status, r.wall_time_s, r.peak_resident_bytes
            );
            records.push(r);
        }
    }
    let path = args.out.join("bench.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "n", "d", "epochs_to_tol", "final_ci", "status"])?;
    for r in &records {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.epochs_to_tol.map_or("NaN".into(), |e| e.to_string()),
            fmt(r.final_ci),
            r.status.clone(),
        ])?;
    }
    finish(w, &path)?;
    let path = args.out.join("measurements.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "method",
        "n",
        "wall_time_s",
        "peak_resident_bytes",
        "data_resident_bytes",
    ])?;
    for r in &records {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.wall_time_s.to_string(),
            r.peak_resident_bytes.to_string(),
            r.data_resident_bytes.to_string(),
        ])?;
    }
    finish(w, &path)?;
    Ok(records)
}
