//! Trace, condition report and summary of a run.

use std::fmt::Write as _;
use std::path::Path;

use super::pipeline::{Pipeline, Snapshot};
use crate::annihilate::{check_conditions, ConditionReport, ConditionSeries};
use crate::error::Result;
use crate::estimators::LawKind;

/// Decimated time series with a fixed column layout:
/// `t, theta_hat_<law>_<i>..., theta_true_<i>..., err_<law>..., delta, omega,
/// kappa_<law>..., margin_C4`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RunTrace {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                if first {
                    let _ = write!(out, "{v}");
                } else {
                    let _ = write!(out, "{v:e}");
                }
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawSummary {
    pub kind: LawKind,
    /// Mean `|theta_hat - theta|` over the last 10% of each segment.
    pub terminal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    /// `(start, end)` of each constant-parameter segment.
    pub segments: Vec<(f64, f64)>,
    pub laws: Vec<LawSummary>,
    /// Mean `|W|` over each segment tail (truth only).
    pub w_tail: Vec<Option<f64>>,
    /// `|W| / alpha_low` over each segment tail (truth only).
    pub bound: Vec<Option<f64>>,
    /// Range of `omega` from one window after `t0` to the end.
    pub omega_range: Option<(f64, f64)>,
    /// Largest `|Delta_jacobi - det Phi|` relative to the largest `|det Phi|`.
    pub delta_jacobi_rel: f64,
}

impl Summary {
    pub fn terminal(&self, kind: LawKind) -> Option<&[f64]> {
        self.laws
            .iter()
            .find(|l| l.kind == kind)
            .map(|l| l.terminal.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "name = \"{}\"", self.name);
        let seg: Vec<String> = self
            .segments
            .iter()
            .map(|(a, b)| format!("[{a}, {b}]"))
            .collect();
        let _ = writeln!(out, "segments = [{}]", seg.join(", "));
        for law in &self.laws {
            let _ = writeln!(out, "\n[terminal_error.{}]", law.kind.tag());
            for (i, e) in law.terminal.iter().enumerate() {
                let _ = writeln!(out, "segment_{} = {e:e}", i + 1);
            }
        }
        if self.w_tail.iter().any(Option::is_some) {
            let _ = writeln!(out, "\n[perturbation_bound]");
            for (i, (w, b)) in self.w_tail.iter().zip(&self.bound).enumerate() {
                if let Some(w) = w {
                    let _ = writeln!(out, "segment_{}_w_tail = {w:e}", i + 1);
                }
                if let Some(b) = b {
                    let _ = writeln!(out, "segment_{}_bound = {b:e}", i + 1);
                }
            }
        }
        if let Some((lo, hi)) = self.omega_range {
            let _ = writeln!(out, "\n[omega]");
            let _ = writeln!(out, "min_after_window = {lo:e}");
            let _ = writeln!(out, "max_after_window = {hi:e}");
        }
        let _ = writeln!(out, "\n[checks]");
        let _ = writeln!(out, "delta_jacobi_rel = {:e}", self.delta_jacobi_rel);
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub conditions: ConditionReport,
    pub summary: Summary,
}

impl RunOutput {
    /// Writes `trace.csv`, `conditions.txt` and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.csv"), self.trace.to_csv())?;
        std::fs::write(dir.join("conditions.txt"), self.conditions.to_text())?;
        std::fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        Ok(())
    }
}

/// Collects rows, condition series and tail statistics while a run
/// progresses.
pub(crate) struct Recorder {
    decimation: u64,
    steps: u64,
    laws: Vec<LawKind>,
    segments: Vec<(f64, f64)>,
    omega_from: Option<f64>,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    series: ConditionSeries,
    tail_err: Vec<Vec<(f64, u64)>>,
    tail_w: Vec<(f64, u64)>,
    omega_range: Option<(f64, f64)>,
    delta_max: f64,
    jacobi_diff: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Recorder {
    pub(crate) fn new(p: &Pipeline) -> Self {
        let cfg = p.config();
        let laws = p.law_kinds();
        let n = cfg.n();
        let mut columns = vec!["t".to_string()];
        for k in &laws {
            for i in 1..=n {
                columns.push(format!("theta_hat_{}_{i}", k.tag()));
            }
        }
        for i in 1..=n {
            columns.push(format!("theta_true_{i}"));
        }
        for k in &laws {
            columns.push(format!("err_{}", k.tag()));
        }
        columns.push("delta".into());
        columns.push("omega".into());
        for k in laws.iter().filter(|k| k.has_kappa()) {
            columns.push(format!("kappa_{}", k.tag()));
        }
        columns.push("margin_C4".into());

        let segs = &cfg.plant.segments;
        let segments: Vec<(f64, f64)> = segs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.start, segs.get(i + 1).map_or(cfg.sim.t_end, |n| n.start)))
            .collect();
        let series = ConditionSeries {
            margins: laws
                .iter()
                .filter(|k| k.has_kappa())
                .map(|k| (k.tag().to_string(), Vec::new()))
                .collect(),
            ..Default::default()
        };

        Self {
            decimation: cfg.sim.decimation as u64,
            steps: p.steps(),
            tail_err: vec![vec![(0.0, 0); segments.len()]; laws.len()],
            tail_w: vec![(0.0, 0); segments.len()],
            laws,
            omega_from: if p.has_annihilation() {
                Some(p.t0() + p.window().unwrap_or(0.0))
            } else {
                None
            },
            segments,
            columns,
            rows: Vec::new(),
            series,
            omega_range: None,
            delta_max: 0.0,
            jacobi_diff: 0.0,
        }
    }

    pub(crate) fn observe(&mut self, p: &Pipeline, snap: &Snapshot) {
        let cfg = p.config();
        let exps = p.exponents();
        let t = snap.t;
        let seg = cfg.segment_at(t);
        let theta = &cfg.plant.segments[seg].theta;
        let errs: Vec<f64> = snap
            .estimates
            .iter()
            .map(|e| {
                let d: Vec<f64> = e.iter().zip(theta).map(|(a, b)| a - b).collect();
                norm(&d)
            })
            .collect();

        let (start, end) = self.segments[seg];
        let tail_start = end - 0.1 * (end - start);
        let eps = 1e-9 * p.h();
        let in_tail = t >= tail_start - eps;
        let w_norm = snap.ext_w.as_ref().map(|w| norm(w) * p.unscale(1.0, 2));
        if in_tail {
            for (acc, e) in self.tail_err.iter_mut().zip(&errs) {
                acc[seg].0 += e;
                acc[seg].1 += 1;
            }
            if let Some(w) = w_norm {
                self.tail_w[seg].0 += w;
                self.tail_w[seg].1 += 1;
            }
        }

        let omega = snap.scal.as_ref().map(|s| p.unscale(s.omega, exps.omega));
        if let (Some(from), Some(om)) = (self.omega_from, omega) {
            if t >= from - eps {
                self.omega_range = Some(match self.omega_range {
                    None => (om, om),
                    Some((lo, hi)) => (lo.min(om), hi.max(om)),
                });
            }
        }
        self.delta_max = self.delta_max.max(snap.mixed.delta.abs());
        self.jacobi_diff = self
            .jacobi_diff
            .max((snap.delta_jacobi - snap.mixed.delta).abs());

        if snap.step % self.decimation != 0 && snap.step != self.steps {
            return;
        }

        let delta = p.unscale(snap.mixed.delta, exps.delta);
        let mut row = Vec::with_capacity(self.columns.len());
        row.push(t);
        for e in &snap.estimates {
            row.extend_from_slice(e);
        }
        row.extend_from_slice(theta);
        row.extend_from_slice(&errs);
        row.push(delta);
        row.push(omega.unwrap_or(0.0));
        for (k, kappa) in self.laws.iter().zip(&snap.kappas) {
            match k {
                LawKind::CaseOne => row.push(p.unscale(*kappa, -exps.delta)),
                LawKind::Annihilator => row.push(p.unscale(*kappa, -exps.omega)),
                LawKind::Averaging => row.push(*kappa),
                LawKind::Gradient => {}
            }
        }
        let pick = [LawKind::Annihilator, LawKind::CaseOne, LawKind::Averaging]
            .iter()
            .find_map(|want| self.laws.iter().position(|k| k == want));
        row.push(pick.map_or(0.0, |i| snap.margins[i]));
        self.rows.push(row);

        self.series.t.push(t);
        self.series.gram_eigs.push(p.gram_extremes(&snap.ext.phi));
        if let Some(ann) = &snap.ann {
            self.series.m_abs.push(p.unscale(ann.m, exps.m).abs());
            self.series
                .beta_window
                .push(p.windowed_beta(&snap.ext.phi).unwrap_or(0.0));
        }
        let mut mi = 0;
        for (k, m) in self.laws.iter().zip(&snap.margins) {
            if k.has_kappa() {
                self.series.margins[mi].1.push(*m);
                mi += 1;
            }
        }
        if let Some(w) = &snap.ext_w {
            let k = p.unscale(1.0, 2);
            self.series.w_abs.push(w.iter().map(|x| (x * k).abs()).collect());
        }
    }

    pub(crate) fn finish(self, p: &Pipeline) -> RunOutput {
        let conditions = check_conditions(&self.series);
        let mean = |(s, c): (f64, u64)| if c > 0 { s / c as f64 } else { f64::NAN };
        let laws = self
            .laws
            .iter()
            .zip(&self.tail_err)
            .map(|(k, acc)| LawSummary {
                kind: *k,
                terminal: acc.iter().copied().map(mean).collect(),
            })
            .collect();
        let truth = p.config().sim.truth;
        let w_tail: Vec<Option<f64>> = self
            .tail_w
            .iter()
            .map(|&a| (truth && a.1 > 0).then(|| mean(a)))
            .collect();
        let alpha = conditions.excitation.alpha_low;
        let bound = w_tail
            .iter()
            .map(|w| w.and_then(|w| (alpha > 0.0).then(|| w / alpha)))
            .collect();
        let summary = Summary {
            name: p.config().name.clone(),
            segments: self.segments.clone(),
            laws,
            w_tail,
            bound,
            omega_range: self.omega_range,
            delta_jacobi_rel: if self.delta_max > 0.0 {
                self.jacobi_diff / self.delta_max
            } else {
                0.0
            },
        };
        RunOutput {
            trace: RunTrace {
                columns: self.columns,
                rows: self.rows,
            },
            conditions,
            summary,
        }
    }
}
