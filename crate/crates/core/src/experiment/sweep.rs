use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::{ScenarioConfig, SweepParam};
use super::report::RunOutput;
use super::run;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub outcome: Result<RunOutput>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// Runs one independent simulation per value, in parallel. Every value is
/// validated before any simulation starts.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[String]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut configs = Vec::with_capacity(values.len());
    let mut errs = Vec::new();
    for v in values {
        match cfg.with_sweep_value(param, v) {
            Ok(c) => configs.push(c),
            Err(Error::Config(e)) => errs.extend(e.into_iter().map(|m| format!("value {v}: {m}"))),
            Err(e) => errs.push(format!("value {v}: {e}")),
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let points = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(c, v)| SweepPoint {
            value: v.clone(),
            outcome: run(c),
        })
        .collect();
    Ok(SweepTable { param, points })
}

impl SweepTable {
    /// Terminal error of `law` in `segment` (0-based) for each value.
    pub fn terminal(&self, law: crate::estimators::LawKind, segment: usize) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| {
                p.outcome
                    .as_ref()
                    .ok()
                    .and_then(|o| o.summary.terminal(law))
                    .and_then(|t| t.get(segment).copied())
            })
            .collect()
    }

    pub fn first_error(&self) -> Option<&Error> {
        self.points.iter().find_map(|p| p.outcome.as_ref().err())
    }

    /// `value,law,segment_1,...` with one line per value and law.
    pub fn to_csv(&self) -> String {
        let segs = self
            .points
            .iter()
            .find_map(|p| p.outcome.as_ref().ok().map(|o| o.summary.segments.len()))
            .unwrap_or(0);
        let mut out = String::from("value,law");
        for i in 1..=segs {
            let _ = write!(out, ",segment_{i}");
        }
        out.push_str(",status\n");
        for p in &self.points {
            match &p.outcome {
                Ok(o) => {
                    for law in &o.summary.laws {
                        let _ = write!(out, "{},{}", p.value, law.kind.tag());
                        for e in &law.terminal {
                            let _ = write!(out, ",{e:e}");
                        }
                        out.push_str(",ok\n");
                    }
                }
                Err(e) => {
                    let _ = write!(out, "{},", p.value);
                    for _ in 0..segs {
                        out.push(',');
                    }
                    let _ = writeln!(out, "\"{}\"", e.to_string().replace('"', "'"));
                }
            }
        }
        out
    }
}
