//! Dynamic regressor extension and mixing.
//!
//! A scalar regression `z = phi^T theta + w` is first duplicated with a
//! unit-gain lowpass (`z~ = z - z_f`, stacked regressor `[phi; phi_f]`,
//! stacked parameter `[theta; -theta]`), then extended into a matrix
//! regression `Y = Phi Theta + W` by one of four schemes, then mixed by the
//! adjugate of `Phi` into per-parameter scalar regressions with the common
//! regressor `det(Phi)`.
//!
//! Component states are plain data; their time derivatives are produced by
//! `rate` methods so the caller can integrate a whole pipeline in one RK4
//! step.

use crate::error::{Error, Result};
use crate::matrix::{det_and_adjugate, trace_of_product, EliminatorSet, Matrix};
use crate::sim::{DelayLine, FilterKind, FirstOrderFilter, OdeState, RegressionSample};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Duplication
// ---------------------------------------------------------------------------

/// Regression after subtracting its lowpass-filtered copy.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicatedRegression {
    pub t: f64,
    pub z_tilde: f64,
    /// `[phi; phi_f]`, length `2n`.
    pub phi: Vec<f64>,
    /// Difference perturbation `f` (simulation only).
    pub f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicationState {
    pub z_f: f64,
    pub phi_f: Vec<f64>,
    pub truth: Option<DuplicationTruth>,
}

/// Truth-channel states of the duplication filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicationTruth {
    /// Filtered perturbation `w_f`.
    pub w_f: f64,
    /// `alpha/(s+alpha)[phi^T theta] - phi_f^T theta`; zero unless `theta`
    /// has jumped, then decays at rate `alpha`.
    pub mismatch: f64,
}

impl OdeState for DuplicationTruth {
    fn axpy(&mut self, a: f64, o: &Self) {
        self.w_f += a * o.w_f;
        self.mismatch += a * o.mismatch;
    }

    fn non_finite(&self) -> Option<String> {
        if !self.w_f.is_finite() {
            Some("w_f".into())
        } else if !self.mismatch.is_finite() {
            Some("mismatch".into())
        } else {
            None
        }
    }
}

impl OdeState for DuplicationState {
    fn axpy(&mut self, a: f64, o: &Self) {
        self.z_f += a * o.z_f;
        self.phi_f.axpy(a, &o.phi_f);
        self.truth.axpy(a, &o.truth);
    }

    fn non_finite(&self) -> Option<String> {
        if !self.z_f.is_finite() {
            return Some("z_f".into());
        }
        self.phi_f
            .non_finite()
            .map(|c| format!("phi_f{c}"))
            .or_else(|| self.truth.non_finite())
    }
}

/// The `alpha / (s + alpha)` duplication filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duplicator {
    filter: FirstOrderFilter,
}

impl Duplicator {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            filter: FirstOrderFilter::new(FilterKind::Lowpass, alpha)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.filter.pole
    }

    pub fn initial_state(&self, n: usize, truth: bool) -> DuplicationState {
        DuplicationState {
            z_f: 0.0,
            phi_f: vec![0.0; n],
            truth: truth.then_some(DuplicationTruth {
                w_f: 0.0,
                mismatch: 0.0,
            }),
        }
    }

    /// Current duplicated regression.
    pub fn duplicate(&self, sample: &RegressionSample, state: &DuplicationState) -> DuplicatedRegression {
        let mut phi = sample.phi.clone();
        phi.extend_from_slice(&state.phi_f);
        let f = match (&sample.truth, &state.truth) {
            (Some(truth), Some(st)) => Some(truth.w - st.w_f - st.mismatch),
            _ => None,
        };
        DuplicatedRegression {
            t: sample.t,
            z_tilde: sample.z - state.z_f,
            phi,
            f,
        }
    }

    pub fn rate(&self, sample: &RegressionSample, state: &DuplicationState) -> DuplicationState {
        let truth = match (&sample.truth, &state.truth) {
            (Some(truth), Some(st)) => Some(DuplicationTruth {
                w_f: self.filter.rate(st.w_f, truth.w),
                mismatch: -self.alpha() * st.mismatch,
            }),
            _ => None,
        };
        DuplicationState {
            z_f: self.filter.rate(state.z_f, sample.z),
            phi_f: self.filter.rate_vec(&state.phi_f, &sample.phi),
            truth,
        }
    }

    /// Keeps the truth channel consistent when `theta` jumps by `dtheta`.
    pub fn apply_parameter_jump(&self, state: &mut DuplicationState, dtheta: &[f64]) {
        if let Some(t) = state.truth.as_mut() {
            t.mismatch -= dot(&state.phi_f, dtheta);
        }
    }
}

// ---------------------------------------------------------------------------
// Extension
// ---------------------------------------------------------------------------

/// Dynamic filter producing the matrix regression `(Y, Phi)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtensionScheme {
    /// `Y' = -l Y + phi z`, `Phi' = -l Phi + phi phi^T`.
    Kreisselmeier { l: f64 },
    /// Sliding-window average over the last `window` seconds.
    SlidingWindow { window: f64 },
    /// Row `i` of `(Y, Phi)` is `1/(s + poles[i])` applied to `(z, phi^T)`.
    FilterBank { poles: Vec<f64> },
    /// `Y' = -G phi phi^T Y + G phi z`, `Phi = I - Sigma`, `Sigma' = -G phi phi^T Sigma`.
    Sigma { gain: Matrix },
}

impl ExtensionScheme {
    pub fn tag(&self) -> &'static str {
        match self {
            ExtensionScheme::Kreisselmeier { .. } => "kreisselmeier",
            ExtensionScheme::SlidingWindow { .. } => "sliding_window",
            ExtensionScheme::FilterBank { .. } => "filter_bank",
            ExtensionScheme::Sigma { .. } => "sigma",
        }
    }

    /// Default filter bank `1/(s + i)`, `i = 1..=dim`.
    pub fn default_filter_bank(dim: usize) -> Self {
        ExtensionScheme::FilterBank {
            poles: (1..=dim).map(|i| i as f64).collect(),
        }
    }

    pub fn needs_delay(&self) -> bool {
        matches!(self, ExtensionScheme::SlidingWindow { .. })
    }

    /// Checks the scheme parameters for a regression of length `dim` and
    /// integration step `h`.
    pub fn validate(&self, dim: usize, h: f64) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            ExtensionScheme::Kreisselmeier { l } => {
                if !(*l > 0.0 && l.is_finite()) {
                    errs.push(format!("kreisselmeier l must be positive, got {l}"));
                }
            }
            ExtensionScheme::SlidingWindow { window } => {
                if !(*window > 0.0 && window.is_finite()) {
                    errs.push(format!("sliding window must be positive, got {window}"));
                } else if crate::sim::whole_steps(*window, h).is_none() {
                    errs.push(format!(
                        "sliding window {window} is not an integer multiple of the step {h}"
                    ));
                }
            }
            ExtensionScheme::FilterBank { poles } => {
                if poles.len() != dim {
                    errs.push(format!(
                        "filter bank needs {dim} poles, got {}",
                        poles.len()
                    ));
                }
                if poles.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                    errs.push("filter bank poles must be positive".into());
                }
                let mut sorted = poles.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    errs.push("filter bank poles must be distinct".into());
                }
            }
            ExtensionScheme::Sigma { gain } => {
                if gain.rows() != dim || gain.cols() != dim {
                    errs.push(format!(
                        "sigma gain must be {dim}x{dim}, got {}x{}",
                        gain.rows(),
                        gain.cols()
                    ));
                } else if !is_spd(gain) {
                    errs.push("sigma gain must be symmetric positive definite".into());
                }
            }
        }
        errs
    }
}

fn is_spd(m: &Matrix) -> bool {
    if !m.is_finite() || !m.is_symmetric(1e-12 * m.max_abs().max(1.0)) {
        return false;
    }
    let n = m.rows();
    let na = nalgebra::DMatrix::from_row_slice(n, n, m.as_slice());
    na.cholesky().is_some()
}

/// Input to an extension step: the (possibly duplicated) regression at one
/// instant, with the stacked parameter that was active then (truth only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionInput<'a> {
    pub phi: &'a [f64],
    pub z: f64,
    pub f: Option<f64>,
    pub theta: Option<&'a [f64]>,
}

impl<'a> From<&'a DuplicatedRegression> for ExtensionInput<'a> {
    fn from(d: &'a DuplicatedRegression) -> Self {
        Self {
            phi: &d.phi,
            z: d.z_tilde,
            f: d.f,
            theta: None,
        }
    }
}

/// `(Y, Phi)` and the truth perturbation `W = Y - Phi Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionState {
    pub y: Vec<f64>,
    pub phi: Matrix,
    pub w: Option<Vec<f64>>,
}

impl OdeState for ExtensionState {
    fn axpy(&mut self, a: f64, o: &Self) {
        self.y.axpy(a, &o.y);
        OdeState::axpy(&mut self.phi, a, &o.phi);
        self.w.axpy(a, &o.w);
    }

    fn non_finite(&self) -> Option<String> {
        self.y
            .non_finite()
            .map(|c| format!("Y{c}"))
            .or_else(|| self.phi.non_finite().map(|c| format!("Phi{c}")))
            .or_else(|| self.w.non_finite().map(|c| format!("W{c}")))
    }
}

/// Extended regression at one instant, with its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedRegression {
    pub y: Vec<f64>,
    pub phi: Matrix,
    pub y_dot: Vec<f64>,
    pub phi_dot: Matrix,
    pub scheme: &'static str,
}

/// An extension scheme bound to a regression length.
#[derive(Debug, Clone, PartialEq)]
pub struct Extender {
    scheme: ExtensionScheme,
    dim: usize,
}

impl Extender {
    pub fn new(scheme: ExtensionScheme, dim: usize, h: f64) -> Result<Self> {
        let errs = scheme.validate(dim, h);
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Self { scheme, dim })
    }

    pub fn scheme(&self) -> &ExtensionScheme {
        &self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Y(t0) = 0`, `Phi(t0) = 0`, `W(t0) = 0` for every scheme.
    pub fn initial_state(&self, truth: bool) -> ExtensionState {
        ExtensionState {
            y: vec![0.0; self.dim],
            phi: Matrix::zeros(self.dim, self.dim),
            w: truth.then(|| vec![0.0; self.dim]),
        }
    }

    /// Time derivative of the extension state. The sliding-window scheme
    /// needs the input from exactly one window ago (`delayed`); the others
    /// ignore it.
    pub fn rate(
        &self,
        state: &ExtensionState,
        input: &ExtensionInput<'_>,
        delayed: Option<&ExtensionInput<'_>>,
    ) -> Result<ExtensionState> {
        let n = self.dim;
        if input.phi.len() != n {
            return Err(Error::dims(format!(
                "extension expects a regressor of length {n}, got {}",
                input.phi.len()
            )));
        }
        let phi = input.phi;
        let truth = state.w.is_some();
        let f = if truth {
            Some(input.f.ok_or(Error::MissingTruth)?)
        } else {
            None
        };

        let out = match &self.scheme {
            ExtensionScheme::Kreisselmeier { l } => {
                let mut phi_dot = Matrix::outer(phi, phi);
                phi_dot.axpy(-l, &state.phi);
                ExtensionState {
                    y: state.y.iter().zip(phi).map(|(y, p)| -l * y + p * input.z).collect(),
                    phi: phi_dot,
                    w: f.map(|f| {
                        let w = state.w.as_ref().unwrap();
                        w.iter().zip(phi).map(|(w, p)| -l * w + p * f).collect()
                    }),
                }
            }
            ExtensionScheme::SlidingWindow { window } => {
                let old = delayed.ok_or_else(|| {
                    Error::DelayLine("sliding-window extension needs the delayed sample".into())
                })?;
                let inv = 1.0 / window;
                let mut phi_dot = Matrix::outer(phi, phi);
                phi_dot.axpy(-1.0, &Matrix::outer(old.phi, old.phi));
                ExtensionState {
                    y: phi
                        .iter()
                        .zip(old.phi)
                        .map(|(p, q)| inv * (p * input.z - q * old.z))
                        .collect(),
                    phi: phi_dot.scaled(inv),
                    w: match f {
                        Some(f) => {
                            // the outgoing sample is re-expressed against the
                            // parameter active now
                            let mut f_old = old.f.ok_or(Error::MissingTruth)?;
                            if let (Some(th_old), Some(th_now)) = (old.theta, input.theta) {
                                let shift: Vec<f64> =
                                    th_old.iter().zip(th_now).map(|(a, b)| a - b).collect();
                                f_old += dot(old.phi, &shift);
                            }
                            Some(
                                phi.iter()
                                    .zip(old.phi)
                                    .map(|(p, q)| inv * (p * f - q * f_old))
                                    .collect(),
                            )
                        }
                        None => None,
                    },
                }
            }
            ExtensionScheme::FilterBank { poles } => {
                let mut phi_dot = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        phi_dot[(i, j)] = -poles[i] * state.phi[(i, j)] + phi[j];
                    }
                }
                ExtensionState {
                    y: state.y.iter().zip(poles).map(|(y, a)| -a * y + input.z).collect(),
                    phi: phi_dot,
                    w: f.map(|f| {
                        let w = state.w.as_ref().unwrap();
                        w.iter().zip(poles).map(|(w, a)| -a * w + f).collect()
                    }),
                }
            }
            ExtensionScheme::Sigma { gain } => {
                let g_phi = gain.mul_vec(phi);
                let gpp = Matrix::outer(&g_phi, phi);
                let mut resid = Matrix::identity(n);
                resid.axpy(-1.0, &state.phi);
                let gpp_y = gpp.mul_vec(&state.y);
                ExtensionState {
                    y: gpp_y.iter().zip(&g_phi).map(|(a, g)| -a + g * input.z).collect(),
                    phi: &gpp * &resid,
                    w: f.map(|f| {
                        let gpp_w = gpp.mul_vec(state.w.as_ref().unwrap());
                        gpp_w.iter().zip(&g_phi).map(|(a, g)| -a + g * f).collect()
                    }),
                }
            }
        };
        Ok(out)
    }

    /// Bundles state and rate into the extended regression.
    pub fn regression(&self, state: &ExtensionState, rate: &ExtensionState) -> ExtendedRegression {
        ExtendedRegression {
            y: state.y.clone(),
            phi: state.phi.clone(),
            y_dot: rate.y.clone(),
            phi_dot: rate.phi.clone(),
            scheme: self.scheme.tag(),
        }
    }

    /// Keeps `W = Y - Phi Theta` consistent when the parameter jumps.
    pub fn apply_parameter_jump(&self, state: &mut ExtensionState, dtheta: &[f64]) {
        if let Some(w) = state.w.as_mut() {
            let shift = state.phi.mul_vec(dtheta);
            w.axpy(-1.0, &shift);
        }
    }
}

// ---------------------------------------------------------------------------
// Mixing
// ---------------------------------------------------------------------------

/// `adj(Phi) Y = det(Phi) Theta + adj(Phi) W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRegression {
    pub y_mix: Vec<f64>,
    pub delta: f64,
    /// `tr(adj(Phi) Phi')`
    pub delta_dot: f64,
    pub adj_phi: Matrix,
}

/// Multiplies the extended regression by the adjugate of `Phi`. Works at
/// `det(Phi) = 0`.
pub fn mix(ext: &ExtendedRegression) -> Result<MixedRegression> {
    let (delta, adj_phi) = det_and_adjugate(&ext.phi)?;
    if (ext.phi_dot.rows(), ext.phi_dot.cols()) != (ext.phi.rows(), ext.phi.cols()) {
        return Err(Error::dims("Phi and its derivative differ in shape"));
    }
    Ok(MixedRegression {
        y_mix: adj_phi.mul_vec(&ext.y),
        delta,
        delta_dot: trace_of_product(&adj_phi, &ext.phi_dot),
        adj_phi,
    })
}

/// Split of the mixed perturbation `adj(Phi) W` into the part carried by the
/// correlated channels and the part that averages out.
pub fn split_perturbation(
    mixed: &MixedRegression,
    w: &[f64],
    eliminators: &EliminatorSet,
) -> (Vec<f64>, Vec<f64>) {
    let project = |l: &Matrix| {
        let coords = l.tr_mul_vec(w);
        mixed.adj_phi.mul_vec(&l.mul_vec(&coords))
    };
    (project(&eliminators.l1), project(&eliminators.l2))
}

// ---------------------------------------------------------------------------
// Independence diagnostic
// ---------------------------------------------------------------------------

/// Streaming sliding-window cross moment
/// `(1/T) int_{max(t0, t-T)}^t phi_i(s) f(s) ds` for every channel,
/// evaluated by the trapezoid rule on the sample grid.
#[derive(Debug, Clone)]
pub struct CrossMoment {
    window: f64,
    h: f64,
    increments: DelayLine<Vec<f64>>,
    previous: Option<Vec<f64>>,
    sum: Vec<f64>,
    pushed: u64,
}

impl CrossMoment {
    pub fn new(channels: usize, t0: f64, h: f64, window: f64) -> Result<Self> {
        Ok(Self {
            window,
            h,
            increments: DelayLine::new(t0, h, window, vec![0.0; channels])?,
            previous: None,
            sum: vec![0.0; channels],
            pushed: 0,
        })
    }

    /// Feeds the next grid sample and returns the current moments.
    pub fn push(&mut self, phi: &[f64], f: f64) -> Result<Vec<f64>> {
        if phi.len() != self.sum.len() {
            return Err(Error::dims("cross-moment channel count changed"));
        }
        let product: Vec<f64> = phi.iter().map(|p| p * f).collect();
        let inc = match &self.previous {
            Some(prev) => prev
                .iter()
                .zip(&product)
                .map(|(a, b)| 0.5 * self.h * (a + b))
                .collect(),
            None => vec![0.0; product.len()],
        };
        self.sum.axpy(1.0, &inc);
        self.increments.push(inc);
        let outgoing = self.increments.delayed_at_index(self.pushed)?;
        self.pushed += 1;
        self.sum.axpy(-1.0, &outgoing);
        self.previous = Some(product);
        Ok(self.sum.iter().map(|s| s / self.window).collect())
    }
}

/// Windowed cross moment between each regressor channel and the perturbation
/// over a sampled run. `phi[k]` and `f[k]` are samples at `t0 + k h`.
pub fn independence_diagnostic(
    phi: &[Vec<f64>],
    f: Option<&[f64]>,
    t0: f64,
    h: f64,
    window: f64,
) -> Result<Vec<Vec<f64>>> {
    let f = f.ok_or(Error::MissingTruth)?;
    if f.len() != phi.len() {
        return Err(Error::dims("regressor and perturbation streams differ in length"));
    }
    let channels = phi.first().map_or(0, Vec::len);
    let mut cm = CrossMoment::new(channels, t0, h, window)?;
    phi.iter().zip(f).map(|(p, &fk)| cm.push(p, fk)).collect()
}
