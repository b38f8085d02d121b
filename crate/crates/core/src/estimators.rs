//! Estimation laws driven by a scalar-regressor equation `y = r theta + e`.
//!
//! * [`Law::CaseOne`] and [`Law::Annihilator`]: `theta_hat = kappa y`, where
//!   `kappa' = -gamma r (r kappa - 1) - r' kappa^2` tracks `1/r`.
//! * [`Law::Gradient`]: `theta_hat' = -gamma r (r theta_hat - y)`.
//! * [`Law::Averaging`]: `theta_hat' = -(theta_hat - kappa y) / (t + F0)`
//!   with the same `kappa` dynamics.
//!
//! The caller supplies `y` already reduced to the `n` estimated parameters.

use serde::{Deserialize, Serialize};

use crate::annihilate::convergence_margin;
use crate::error::{Error, Result};
use crate::sim::{integrate_step, OdeState, SimClock, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LawKind {
    #[serde(rename = "law13")]
    CaseOne,
    #[serde(rename = "law20")]
    Annihilator,
    #[serde(rename = "law28")]
    Gradient,
    #[serde(rename = "law29")]
    Averaging,
}

impl LawKind {
    /// Column tag used in traces.
    pub fn tag(self) -> &'static str {
        match self {
            LawKind::CaseOne => "law13",
            LawKind::Annihilator => "law20",
            LawKind::Gradient => "law28",
            LawKind::Averaging => "law29",
        }
    }

    pub fn parse(tag: &str) -> Option<Self> {
        [Self::CaseOne, Self::Annihilator, Self::Gradient, Self::Averaging]
            .into_iter()
            .find(|k| k.tag() == tag)
    }

    /// Fixed evaluation order of the laws within a run.
    pub fn order(self) -> usize {
        self as usize
    }

    pub fn has_kappa(self) -> bool {
        !matches!(self, LawKind::Gradient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    CaseOne { gamma: f64 },
    Annihilator { gamma: f64 },
    Gradient { gamma: f64 },
    Averaging { gamma_kappa: f64, f0: f64 },
}

impl Law {
    pub fn kind(&self) -> LawKind {
        match self {
            Law::CaseOne { .. } => LawKind::CaseOne,
            Law::Annihilator { .. } => LawKind::Annihilator,
            Law::Gradient { .. } => LawKind::Gradient,
            Law::Averaging { .. } => LawKind::Averaging,
        }
    }

    /// Gain of the `kappa` (or gradient) dynamics.
    pub fn gain(&self) -> f64 {
        match *self {
            Law::CaseOne { gamma } | Law::Annihilator { gamma } | Law::Gradient { gamma } => gamma,
            Law::Averaging { gamma_kappa, .. } => gamma_kappa,
        }
    }

    pub fn with_gain(self, g: f64) -> Self {
        match self {
            Law::CaseOne { .. } => Law::CaseOne { gamma: g },
            Law::Annihilator { .. } => Law::Annihilator { gamma: g },
            Law::Gradient { .. } => Law::Gradient { gamma: g },
            Law::Averaging { f0, .. } => Law::Averaging { gamma_kappa: g, f0 },
        }
    }

    pub fn validate(&self, t0: f64) -> Vec<String> {
        let mut errs = Vec::new();
        let g = self.gain();
        if !(g > 0.0 && g.is_finite()) {
            errs.push(format!("{} gain must be positive and finite, got {g}", self.kind().tag()));
        }
        if let Law::Averaging { f0, .. } = *self {
            if !(t0 + f0 > 0.0) {
                errs.push(format!("law29 needs t0 + F0 > 0, got t0 = {t0}, F0 = {f0}"));
            }
        }
        errs
    }
}

/// Scalar-regressor equation fed to a law at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LawInput {
    pub t: f64,
    /// Per-parameter regressand, length `n`.
    pub y: Vec<f64>,
    /// Scalar regressor.
    pub r: f64,
    /// Its time derivative.
    pub r_dot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub kappa: f64,
    /// Integrated estimate (gradient and averaging laws); unused otherwise.
    pub theta: Vec<f64>,
}

impl OdeState for EstimatorState {
    fn axpy(&mut self, a: f64, o: &Self) {
        self.kappa += a * o.kappa;
        self.theta.axpy(a, &o.theta);
    }

    fn non_finite(&self) -> Option<String> {
        if !self.kappa.is_finite() {
            return Some("kappa".into());
        }
        self.theta.non_finite().map(|c| format!("theta_hat{c}"))
    }
}

impl EstimatorState {
    pub fn new(kappa0: f64, theta0: Vec<f64>) -> Self {
        Self {
            kappa: kappa0,
            theta: theta0,
        }
    }
}

/// Time derivative of the estimator state.
pub fn rate(law: &Law, state: &EstimatorState, input: &LawInput) -> EstimatorState {
    let kappa_rate = |gamma: f64| {
        -gamma * input.r * (input.r * state.kappa - 1.0) - input.r_dot * state.kappa * state.kappa
    };
    match *law {
        Law::CaseOne { gamma } | Law::Annihilator { gamma } => EstimatorState {
            kappa: kappa_rate(gamma),
            theta: vec![0.0; state.theta.len()],
        },
        Law::Gradient { gamma } => EstimatorState {
            kappa: 0.0,
            theta: state
                .theta
                .iter()
                .zip(&input.y)
                .map(|(th, y)| -gamma * input.r * (input.r * th - y))
                .collect(),
        },
        Law::Averaging { gamma_kappa, f0 } => {
            let inv = 1.0 / (input.t + f0);
            EstimatorState {
                kappa: kappa_rate(gamma_kappa),
                theta: state
                    .theta
                    .iter()
                    .zip(&input.y)
                    .map(|(th, y)| -inv * (th - state.kappa * y))
                    .collect(),
            }
        }
    }
}

/// Current estimate `theta_hat`.
pub fn output(law: &Law, state: &EstimatorState, input: &LawInput) -> Vec<f64> {
    match law {
        Law::CaseOne { .. } | Law::Annihilator { .. } => {
            input.y.iter().map(|y| state.kappa * y).collect()
        }
        Law::Gradient { .. } | Law::Averaging { .. } => state.theta.clone(),
    }
}

/// `kappa - 1/r`, or `None` when `r = 0`.
pub fn kappa_error(state: &EstimatorState, input: &LawInput) -> Option<f64> {
    (input.r != 0.0).then(|| state.kappa - 1.0 / input.r)
}

/// Decay rate of `kappa - 1/r` at this instant; zero for the gradient law.
pub fn margin(law: &Law, state: &EstimatorState, input: &LawInput) -> f64 {
    if law.kind().has_kappa() {
        convergence_margin(law.gain(), input.r, input.r_dot, state.kappa)
    } else {
        0.0
    }
}

/// Hint attached to an abort caused by `law`.
pub fn abort_hint(law: &Law) -> String {
    match law {
        Law::CaseOne { .. } | Law::Annihilator { .. } => {
            "reduce gamma or enable the regressor scaling mode".into()
        }
        Law::Gradient { .. } => "reduce gamma_delta".into(),
        Law::Averaging { .. } => "reduce gamma_kappa or increase F0".into(),
    }
}

/// Advances one law alone by one RK4 step, with `input(t)` supplying the
/// regression at each stage time.
pub fn step<F>(law: &Law, state: &EstimatorState, clock: &SimClock, mut input: F) -> Result<EstimatorState>
where
    F: FnMut(f64) -> LawInput,
{
    integrate_step(state, |stage: Stage, s: &EstimatorState| Ok(rate(law, s, &input(stage.t))), clock)
        .map_err(|e| match e {
            Error::NumericalAbort { t, signal, .. } => Error::NumericalAbort {
                t,
                signal: format!("{}.{signal}", law.kind().tag()),
                hint: Some(abort_hint(law)),
            },
            other => other,
        })
}
