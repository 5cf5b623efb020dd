//! Parameter sweeps over one numeric key, run on a bounded worker pool.

use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use nonlocal_core::dynamics::fmt17;

use crate::config::{ConfigError, RunConfig};
use crate::error::CliError;
use crate::run;

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "NONLOCAL_WORKERS";

#[derive(Clone, Debug, PartialEq)]
pub struct Vary {
    pub key: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Vary {
    /// `key=start:stop:count`
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let invalid = |reason: &str| ConfigError::Value {
            key: "--vary".into(),
            reason: format!("`{text}`: {reason}"),
        };
        let (key, range) = text.split_once('=').ok_or_else(|| invalid("expected key=start:stop:count"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(invalid("expected start:stop:count"));
        };
        let number = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let start = number(start).ok_or_else(|| invalid("start is not a number"))?;
        let stop = number(stop).ok_or_else(|| invalid("stop is not a number"))?;
        let count: usize = count
            .trim()
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| invalid("count must be a positive integer"))?;
        Ok(Self {
            key: key.trim().to_owned(),
            start,
            stop,
            count,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / n)
            .collect()
    }
}

pub fn worker_count(jobs: usize) -> Result<usize, CliError> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => thread::available_parallelism().map_or(1, NonZeroUsize::get),
    };
    Ok(n.min(jobs).max(1))
}

/// One line of the sweep index.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub index: usize,
    pub parameter: f64,
    pub outcome: Result<RowData, String>,
}

#[derive(Clone, Debug)]
pub struct RowData {
    pub primary: Option<(f64, f64)>,
    pub energy_limit: Option<f64>,
    pub termination: String,
}

/// Per-point configurations, validated before anything runs.
pub fn grid(base: &RunConfig, vary: &Vary) -> Result<Vec<(f64, RunConfig)>, CliError> {
    let values = vary.values();
    let width = (values.len() - 1).to_string().len();
    values
        .into_iter()
        .enumerate()
        .map(|(k, x)| {
            let mut cfg = base.clone();
            cfg.set_numeric(&vary.key, x)?;
            if vary.count > 1 {
                cfg.output_base = format!("{}.{k:0width$}", base.output_base);
            }
            Ok((x, cfg))
        })
        .collect()
}

fn run_point(index: usize, parameter: f64, cfg: &RunConfig) -> SweepRow {
    let outcome = match run::simulate(cfg) {
        Ok((out, _)) => Ok(RowData {
            primary: out.primary(),
            energy_limit: out.energy_limit.as_ref().ok().map(|e| e.value),
            termination: out.trajectory.termination.to_string(),
        }),
        Err(e) => Err(e.to_string()),
    };
    SweepRow {
        index,
        parameter,
        outcome,
    }
}

/// Runs every grid point; results come back in grid order.
pub fn run_all(points: &[(f64, RunConfig)], workers: usize) -> Vec<SweepRow> {
    let next = AtomicUsize::new(0);
    let mut rows: Vec<SweepRow> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some((x, cfg)) = points.get(k) else { break };
                        done.push(run_point(k, *x, cfg));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    rows.sort_by_key(|r| r.index);
    rows
}

fn csv_field(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

pub fn index_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    let mut s = String::from("index,parameter,primary_value,primary_measure,energy_limit,termination,status\n");
    for r in rows {
        let _ = write!(s, "{},{},", r.index, fmt17(r.parameter));
        match &r.outcome {
            Ok(d) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},ok",
                    opt(d.primary.map(|p| p.0)),
                    opt(d.primary.map(|p| p.1)),
                    opt(d.energy_limit),
                    d.termination
                );
            }
            Err(e) => {
                let _ = writeln!(s, ",,,,{}", csv_field(&format!("failed: {e}")));
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let v = Vary::parse("initial.atoms.1=1.2:2.0:5").unwrap();
        assert_eq!(v.key, "initial.atoms.1");
        let xs = v.values();
        assert_eq!(xs.len(), 5);
        assert_eq!(xs[0], 1.2);
        assert_eq!(xs[4], 2.0);
        assert_eq!(Vary::parse("a=3:9:1").unwrap().values(), vec![3.0]);
        for bad in ["a", "a=1:2", "a=1:2:0", "a=x:2:3", "a=1:2:3:4", "a=1:inf:2"] {
            assert!(Vary::parse(bad).is_err(), "{bad}");
        }
    }
}
