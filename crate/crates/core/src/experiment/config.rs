//! TOML scenario description.
//!
//! The regression comes either from the first-order test plant
//! `x' = theta_1 x + theta_2 u + delta`, `y = x + v` through the
//! `1/(s + alpha0)` parameterization, or, with a `[regressor]` table, directly
//! from prescribed signals: `z = phi^T theta + w`.
//!
//! Regressor channel indices are 1-based in the file.

use serde::{Deserialize, Serialize};

use crate::drem::ExtensionScheme;
use crate::error::{Error, Result};
use crate::estimators::LawKind;
use crate::matrix::{build_eliminators, EliminatorSet, Matrix};
use crate::sim::{whole_steps, SignalSpec, Sinusoid};

/// Bundled reproduction of the two-parameter experiment.
pub const PAPER_SEC4: &str = include_str!("../../configs/paper_sec4.toml");
/// Noise-free two-tone scenario for the uncorrelated-perturbation law.
pub const CASE_ONE: &str = include_str!("../../configs/case_one.toml");

/// Number of parameters of the test plant.
pub const PLANT_PARAMS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub sim: SimSpec,
    pub plant: PlantSpec,
    #[serde(default)]
    pub signals: SignalsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameterizer: Option<ParameterizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regressor: Option<RegressorSpec>,
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub eliminators: EliminatorSpec,
    pub laws: LawSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    /// Simulate the perturbation channels alongside the estimators.
    #[serde(default = "default_true")]
    pub truth: bool,
    /// Constant multiplying the duplicated regression before extension.
    #[serde(default = "default_one")]
    pub scaling: f64,
}

fn default_decimation() -> usize {
    100
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(default)]
    pub x0: f64,
    pub segments: Vec<SegmentSpec>,
}

/// `theta` holds from `start` (exclusive, except for the first segment) to
/// the next segment's start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSpec {
    #[serde(default)]
    pub u: SignalConfig,
    #[serde(default)]
    pub delta: SignalConfig,
    #[serde(default)]
    pub v: SignalConfig,
}

/// `offset + sum amplitude * sin(omega_pi * pi * t + phase_pi * pi)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<SineConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineConfig {
    pub amplitude: f64,
    pub omega_pi: f64,
    #[serde(default)]
    pub phase_pi: f64,
}

impl SignalConfig {
    pub fn to_spec(&self) -> SignalSpec {
        SignalSpec {
            offset: self.offset,
            terms: self
                .terms
                .iter()
                .map(|s| crate::sim::sine_pi(s.amplitude, s.omega_pi, s.phase_pi))
                .collect::<Vec<Sinusoid>>(),
        }
    }

    fn finite(&self) -> bool {
        self.offset.is_finite()
            && self
                .terms
                .iter()
                .all(|s| s.amplitude.is_finite() && s.omega_pi.is_finite() && s.phase_pi.is_finite())
    }
}

/// Prescribed regressor channels and perturbation, replacing the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSpec {
    pub phi: Vec<SignalConfig>,
    #[serde(default)]
    pub w: SignalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterizerSpec {
    /// Pole of `1/(s + alpha0)`.
    pub alpha0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Kreisselmeier,
    SlidingWindow,
    FilterBank,
    Sigma,
}

impl SchemeName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kreisselmeier" => Some(Self::Kreisselmeier),
            "sliding_window" => Some(Self::SlidingWindow),
            "filter_bank" => Some(Self::FilterBank),
            "sigma" => Some(Self::Sigma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    /// Duplication filter pole.
    pub alpha: f64,
    /// Pole of the filter applied to the annihilated regression.
    pub k: f64,
    pub scheme: SchemeName,
    /// Sliding window length.
    #[serde(default)]
    pub window: Option<f64>,
    /// Kreisselmeier forgetting rate when that scheme is selected.
    #[serde(default)]
    pub l: Option<f64>,
    /// Filter-bank poles; default `1, 2, ..., 2n`.
    #[serde(default)]
    pub poles: Option<Vec<f64>>,
    /// Gain of the sigma scheme; default identity.
    #[serde(default)]
    pub sigma_gain: Option<Vec<Vec<f64>>>,
    /// Forgetting rate of the un-duplicated Kreisselmeier path feeding the
    /// gradient and averaging laws.
    #[serde(default = "default_one")]
    pub baseline_l: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EliminatorSpec {
    /// 1-based regressor channels correlated with the perturbation.
    #[serde(default)]
    pub correlated: Vec<usize>,
    /// 1-based annihilator columns; default the first `2m`.
    #[serde(default)]
    pub h_columns: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub enabled: Vec<LawKind>,
    #[serde(default)]
    pub gamma13: Option<f64>,
    #[serde(default)]
    pub gamma20: Option<f64>,
    #[serde(default)]
    pub gamma_delta: Option<f64>,
    #[serde(default)]
    pub gamma_kappa: Option<f64>,
    #[serde(default)]
    pub f0: Option<f64>,
    #[serde(default)]
    pub kappa0: f64,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
}

/// Parameter that a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Window,
    Gamma,
    Step,
    Scheme,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "T" | "window" => Ok(Self::Window),
            "gamma" => Ok(Self::Gamma),
            "h" => Ok(Self::Step),
            "scheme" => Ok(Self::Scheme),
            other => Err(Error::config(format!(
                "parameter '{other}' is not sweepable (use T, gamma, h or scheme)"
            ))),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// A config shipped with the crate.
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "paper_sec4" => Self::from_toml(PAPER_SEC4),
            "case_one" => Self::from_toml(CASE_ONE),
            other => Err(Error::config(format!("no bundled config named '{other}'"))),
        }
    }

    /// Same scenario with `delta = v = 0` (and `w = 0` for a prescribed
    /// regressor).
    pub fn noise_free(&self) -> Self {
        let mut c = self.clone();
        c.signals.delta = SignalConfig::default();
        c.signals.v = SignalConfig::default();
        if let Some(r) = c.regressor.as_mut() {
            r.w = SignalConfig::default();
        }
        c
    }

    pub fn n(&self) -> usize {
        self.regressor.as_ref().map_or(PLANT_PARAMS, |r| r.phi.len())
    }

    pub fn steps(&self) -> u64 {
        whole_steps(self.sim.t_end - self.sim.t0, self.sim.h).unwrap_or(0)
    }

    /// Builds the main-path extension scheme.
    pub fn scheme(&self) -> Result<ExtensionScheme> {
        let dim = 2 * self.n();
        let p = &self.pipeline;
        Ok(match p.scheme {
            SchemeName::Kreisselmeier => ExtensionScheme::Kreisselmeier {
                l: p.l.ok_or_else(|| Error::config("pipeline.l is required for the kreisselmeier scheme"))?,
            },
            SchemeName::SlidingWindow => ExtensionScheme::SlidingWindow {
                window: p
                    .window
                    .ok_or_else(|| Error::config("pipeline.window is required for the sliding_window scheme"))?,
            },
            SchemeName::FilterBank => match &p.poles {
                Some(poles) => ExtensionScheme::FilterBank { poles: poles.clone() },
                None => ExtensionScheme::default_filter_bank(dim),
            },
            SchemeName::Sigma => {
                let gain = match &p.sigma_gain {
                    Some(rows) => {
                        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                        Matrix::from_rows(&refs).map_err(|e| Error::config(format!("pipeline.sigma_gain: {e}")))?
                    }
                    None => Matrix::identity(dim),
                };
                ExtensionScheme::Sigma { gain }
            }
        })
    }

    /// Eliminators with 0-based channel indices.
    pub fn eliminators(&self) -> Result<EliminatorSet> {
        let zero_based = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&i| {
                    i.checked_sub(1)
                        .ok_or_else(|| Error::config("channel indices are 1-based; 0 is invalid"))
                })
                .collect()
        };
        let correlated = zero_based(&self.eliminators.correlated)?;
        let h_cols = self.eliminators.h_columns.as_deref().map(zero_based).transpose()?;
        build_eliminators(self.n(), &correlated, h_cols.as_deref())
            .map_err(|e| Error::config(format!("eliminators: {e}")))
    }

    /// Index of the segment active at time `t`: segment `i` covers
    /// `(start_i, start_{i+1}]`, the first one also `t0`.
    pub fn segment_at(&self, t: f64) -> usize {
        let segs = &self.plant.segments;
        let mut idx = 0;
        for (i, s) in segs.iter().enumerate().skip(1) {
            if t > s.start {
                idx = i;
            }
        }
        idx
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let s = &self.sim;
        let pos = |v: f64| v > 0.0 && v.is_finite();

        if !pos(s.h) {
            errs.push(format!("sim.h must be positive, got {}", s.h));
        }
        if !s.t0.is_finite() || !s.t_end.is_finite() || s.t_end <= s.t0 {
            errs.push(format!("sim.t_end ({}) must exceed sim.t0 ({})", s.t_end, s.t0));
        } else if pos(s.h) && whole_steps(s.t_end - s.t0, s.h).is_none() {
            errs.push(format!(
                "sim.t_end - sim.t0 = {} is not a multiple of h = {}",
                s.t_end - s.t0,
                s.h
            ));
        }
        if s.decimation == 0 {
            errs.push("sim.decimation must be at least 1".into());
        }
        if !pos(s.scaling) {
            errs.push(format!("sim.scaling must be positive, got {}", s.scaling));
        }

        // plant
        let n = self.n();
        if n == 0 {
            errs.push("regressor.phi must list at least one channel".into());
        }
        if !self.plant.x0.is_finite() {
            errs.push("plant.x0 must be finite".into());
        }
        let segs = &self.plant.segments;
        if segs.is_empty() {
            errs.push("plant.segments must list at least one parameter segment".into());
        }
        for (i, seg) in segs.iter().enumerate() {
            if seg.theta.len() != n {
                errs.push(format!(
                    "plant.segments[{i}].theta must have {n} entries, got {}",
                    seg.theta.len()
                ));
            }
            if seg.theta.iter().any(|x| !x.is_finite()) {
                errs.push(format!("plant.segments[{i}].theta must be finite"));
            }
            if i == 0 {
                if seg.start != s.t0 {
                    errs.push(format!(
                        "plant.segments[0].start must equal sim.t0 ({}), got {}",
                        s.t0, seg.start
                    ));
                }
                continue;
            }
            if seg.start <= segs[i - 1].start {
                errs.push(format!("plant.segments[{i}].start must increase"));
            }
            if seg.start >= s.t_end {
                errs.push(format!("plant.segments[{i}].start must precede sim.t_end"));
            }
            if pos(s.h) && whole_steps(seg.start - s.t0, s.h).is_none() {
                errs.push(format!(
                    "plant.segments[{i}].start = {} is not on the step grid",
                    seg.start
                ));
            }
        }

        for (name, sig) in [
            ("u", &self.signals.u),
            ("delta", &self.signals.delta),
            ("v", &self.signals.v),
        ] {
            if !sig.finite() {
                errs.push(format!("signals.{name} must be finite"));
            }
        }

        match (&self.regressor, &self.parameterizer) {
            (None, None) => errs.push("parameterizer.alpha0 is required for the plant source".into()),
            (None, Some(p)) if !pos(p.alpha0) => {
                errs.push(format!("parameterizer.alpha0 must be positive, got {}", p.alpha0))
            }
            (Some(r), _) => {
                let plant_signals = [&self.signals.u, &self.signals.delta, &self.signals.v];
                if plant_signals.iter().any(|s| **s != SignalConfig::default()) {
                    errs.push("signals drive the plant and cannot be combined with [regressor]".into());
                }
                for (i, sig) in r.phi.iter().enumerate() {
                    if !sig.finite() {
                        errs.push(format!("regressor.phi[{i}] must be finite"));
                    }
                }
                if !r.w.finite() {
                    errs.push("regressor.w must be finite".into());
                }
            }
            _ => {}
        }

        // pipeline
        let p = &self.pipeline;
        if !pos(p.alpha) {
            errs.push(format!("pipeline.alpha must be positive, got {}", p.alpha));
        }
        if !pos(p.k) {
            errs.push(format!("pipeline.k must be positive, got {}", p.k));
        }
        if !pos(p.baseline_l) {
            errs.push(format!("pipeline.baseline_l must be positive, got {}", p.baseline_l));
        }
        match self.scheme() {
            Ok(scheme) => {
                let h = if pos(s.h) { s.h } else { 1.0 };
                errs.extend(scheme.validate(2 * self.n(), h).into_iter().map(|e| format!("pipeline: {e}")));
            }
            Err(Error::Config(e)) => errs.extend(e),
            Err(e) => errs.push(e.to_string()),
        }

        // eliminators
        let m = self.eliminators.correlated.len();
        match self.eliminators() {
            Ok(_) => {}
            Err(Error::Config(e)) => errs.extend(e),
            Err(e) => errs.push(e.to_string()),
        }

        // laws
        let l = &self.laws;
        if l.enabled.is_empty() {
            errs.push("laws.enabled must name at least one law".into());
        }
        let mut seen = Vec::new();
        for k in &l.enabled {
            if seen.contains(k) {
                errs.push(format!("laws.enabled lists {} twice", k.tag()));
            }
            seen.push(*k);
        }
        let need = |on: bool, v: Option<f64>, name: &str, errs: &mut Vec<String>| {
            if on {
                match v {
                    None => errs.push(format!("laws.{name} is required by an enabled law")),
                    Some(g) if !pos(g) => errs.push(format!("laws.{name} must be positive, got {g}")),
                    _ => {}
                }
            }
        };
        let on = |k: LawKind| l.enabled.contains(&k);
        need(on(LawKind::CaseOne), l.gamma13, "gamma13", &mut errs);
        need(on(LawKind::Annihilator), l.gamma20, "gamma20", &mut errs);
        need(on(LawKind::Gradient), l.gamma_delta, "gamma_delta", &mut errs);
        need(on(LawKind::Averaging), l.gamma_kappa, "gamma_kappa", &mut errs);
        if on(LawKind::Averaging) {
            match l.f0 {
                None => errs.push("laws.f0 is required by law29".into()),
                Some(f0) if !(f0.is_finite() && s.t0 + f0 > 0.0) => {
                    errs.push(format!("laws.f0 must give t0 + F0 > 0, got F0 = {f0}"))
                }
                _ => {}
            }
        }
        if on(LawKind::Annihilator) && m == 0 {
            errs.push("law20 needs at least one correlated channel in eliminators.correlated".into());
        }
        if !l.kappa0.is_finite() {
            errs.push("laws.kappa0 must be finite".into());
        }
        if let Some(t0) = &l.theta0 {
            if t0.len() != n {
                errs.push(format!(
                    "laws.theta0 must have {n} entries, got {}",
                    t0.len()
                ));
            } else if t0.iter().any(|x| !x.is_finite()) {
                errs.push("laws.theta0 must be finite".into());
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Applies one sweep value and revalidates.
    pub fn with_sweep_value(&self, param: SweepParam, value: &str) -> Result<Self> {
        let mut c = self.clone();
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::config(format!("sweep value '{value}' is not a number")))
        };
        match param {
            SweepParam::Window => {
                c.pipeline.window = Some(num()?);
                c.pipeline.scheme = SchemeName::SlidingWindow;
            }
            SweepParam::Gamma => {
                let g = num()?;
                if c.laws.enabled.contains(&LawKind::Annihilator) {
                    c.laws.gamma20 = Some(g);
                } else {
                    c.laws.gamma13 = Some(g);
                }
            }
            SweepParam::Step => {
                c.sim.h = num()?;
                // keep the output grid in time units
                let dt = self.sim.h * self.sim.decimation as f64;
                c.sim.decimation = whole_steps(dt, c.sim.h).map_or(1, |d| d.max(1) as usize);
            }
            SweepParam::Scheme => {
                c.pipeline.scheme = SchemeName::parse(value)
                    .ok_or_else(|| Error::config(format!("unknown scheme '{value}'")))?;
                if c.pipeline.scheme == SchemeName::Kreisselmeier && c.pipeline.l.is_none() {
                    c.pipeline.l = Some(1.0);
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}
