//! Removal of the regressor-correlated perturbation from a mixed regression.
//!
//! With `G = H^T adj(Phi) L1`, `M = det G` and `N = adj(G) H^T adj(Phi) Y`,
//! the regression `lambda = M Y - L1 N`, `Omega = M Phi` carries only the
//! part of `W` that lives on the uncorrelated channels. A `k/(s+k)` filter
//! and a second mixing step turn it into `Lambda = omega Theta + d`.

use serde::Serialize;

use crate::drem::{ExtendedRegression, MixedRegression};
use crate::error::{Error, Result};
use crate::matrix::{det_and_adjugate, trace_of_product, EliminatorSet, Matrix};
use crate::sim::{FilterKind, FirstOrderFilter, OdeState};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilatedRegression {
    /// `H^T adj(Phi) L1`, `2m x 2m`.
    pub g: Matrix,
    pub adj_g: Matrix,
    /// `det G`
    pub m: f64,
    /// `adj(G) H^T adj(Phi) Y`, length `2m`.
    pub n: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega: Matrix,
}

pub fn annihilate_step(
    mixed: &MixedRegression,
    ext: &ExtendedRegression,
    elim: &EliminatorSet,
) -> Result<AnnihilatedRegression> {
    if elim.m() == 0 {
        return Err(Error::Eliminators(
            "annihilation needs at least one correlated channel".into(),
        ));
    }
    let d = elim.l1.rows();
    if ext.y.len() != d || mixed.adj_phi.rows() != d {
        return Err(Error::dims(format!(
            "eliminators are {d}-dimensional, regression is {}",
            ext.y.len()
        )));
    }
    let ht = elim.h.transpose();
    let ht_adj = ht.try_mul(&mixed.adj_phi)?;
    let g = ht_adj.try_mul(&elim.l1)?;
    let (m, adj_g) = det_and_adjugate(&g)?;
    let n = adj_g.mul_vec(&ht.mul_vec(&mixed.y_mix));
    let l1n = elim.l1.mul_vec(&n);
    let lambda = ext.y.iter().zip(&l1n).map(|(y, c)| m * y - c).collect();
    Ok(AnnihilatedRegression {
        g,
        adj_g,
        m,
        n,
        lambda,
        omega: ext.phi.scaled(m),
    })
}

/// The perturbation left in `lambda - Omega Theta`:
/// `[M L2 - L1 adj(G) H^T adj(Phi) L2] L2^T W`.
pub fn annihilation_residual(
    ann: &AnnihilatedRegression,
    mixed: &MixedRegression,
    w: &[f64],
    elim: &EliminatorSet,
) -> Vec<f64> {
    let w2 = elim.l2.tr_mul_vec(w);
    let l2w2 = elim.l2.mul_vec(&w2);
    let inner = elim.h.tr_mul_vec(&mixed.adj_phi.mul_vec(&l2w2));
    let corr = elim.l1.mul_vec(&ann.adj_g.mul_vec(&inner));
    l2w2.iter().zip(&corr).map(|(a, b)| ann.m * a - b).collect()
}

// ---------------------------------------------------------------------------
// Filtering and re-mixing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizerState {
    pub omega_f: Matrix,
    pub lambda_f: Vec<f64>,
    /// `lambda_f - Omega_f Theta` (truth only).
    pub d_f: Option<Vec<f64>>,
}

impl OdeState for ScalarizerState {
    fn axpy(&mut self, a: f64, o: &Self) {
        OdeState::axpy(&mut self.omega_f, a, &o.omega_f);
        self.lambda_f.axpy(a, &o.lambda_f);
        self.d_f.axpy(a, &o.d_f);
    }

    fn non_finite(&self) -> Option<String> {
        self.omega_f
            .non_finite()
            .map(|c| format!("Omega_f{c}"))
            .or_else(|| self.lambda_f.non_finite().map(|c| format!("lambda_f{c}")))
            .or_else(|| self.d_f.non_finite().map(|c| format!("d_f{c}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizedRegression {
    /// `adj(Omega_f) lambda_f`
    pub big_lambda: Vec<f64>,
    /// `det Omega_f`
    pub omega: f64,
    /// `tr(adj(Omega_f) Omega_f')`
    pub omega_dot: f64,
    /// `adj(Omega_f) d_f` (truth only).
    pub d: Option<Vec<f64>>,
}

/// The `k/(s+k)` filter and the second mixing step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalarizer {
    filter: FirstOrderFilter,
}

impl Scalarizer {
    pub fn new(k: f64) -> Result<Self> {
        Ok(Self {
            filter: FirstOrderFilter::new(FilterKind::Lowpass, k)?,
        })
    }

    pub fn k(&self) -> f64 {
        self.filter.pole
    }

    pub fn initial_state(&self, dim: usize, truth: bool) -> ScalarizerState {
        ScalarizerState {
            omega_f: Matrix::zeros(dim, dim),
            lambda_f: vec![0.0; dim],
            d_f: truth.then(|| vec![0.0; dim]),
        }
    }

    /// `residual` is `lambda - Omega Theta` and is required when the state
    /// carries a truth channel.
    pub fn rate(
        &self,
        state: &ScalarizerState,
        ann: &AnnihilatedRegression,
        residual: Option<&[f64]>,
    ) -> Result<ScalarizerState> {
        let k = self.k();
        let mut omega_dot = ann.omega.scaled(k);
        omega_dot.axpy(-k, &state.omega_f);
        let d_f = match &state.d_f {
            Some(d) => {
                let r = residual.ok_or(Error::MissingTruth)?;
                Some(self.filter.rate_vec(d, r))
            }
            None => None,
        };
        Ok(ScalarizerState {
            omega_f: omega_dot,
            lambda_f: self.filter.rate_vec(&state.lambda_f, &ann.lambda),
            d_f,
        })
    }

    pub fn scalarize(&self, state: &ScalarizerState, rate: &ScalarizerState) -> Result<ScalarizedRegression> {
        let (omega, adj) = det_and_adjugate(&state.omega_f)?;
        Ok(ScalarizedRegression {
            big_lambda: adj.mul_vec(&state.lambda_f),
            omega,
            omega_dot: trace_of_product(&adj, &rate.omega_f),
            d: state.d_f.as_ref().map(|d| adj.mul_vec(d)),
        })
    }

    /// Keeps `d_f = lambda_f - Omega_f Theta` consistent across a parameter jump.
    pub fn apply_parameter_jump(&self, state: &mut ScalarizerState, dtheta: &[f64]) {
        if let Some(d) = state.d_f.as_mut() {
            let shift = state.omega_f.mul_vec(dtheta);
            d.axpy(-1.0, &shift);
        }
    }
}

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------

/// Decay rate of `kappa - 1/Delta` implied by the `kappa` dynamics:
/// `gamma Delta^2 + Delta' kappa + Delta'/Delta`. Zero when `Delta <= 0`.
pub fn convergence_margin(gamma: f64, delta: f64, delta_dot: f64, kappa: f64) -> f64 {
    if delta > 0.0 {
        gamma * delta * delta + delta_dot * kappa + delta_dot / delta
    } else {
        0.0
    }
}

/// Sampled series a condition report is built from. All vectors share
/// the time grid `t`.
#[derive(Debug, Clone, Default)]
pub struct ConditionSeries {
    pub t: Vec<f64>,
    /// Extreme eigenvalues `(min, max)` of the windowed Gram.
    pub gram_eigs: Vec<(f64, f64)>,
    /// `|M(t)|`; empty without annihilation.
    pub m_abs: Vec<f64>,
    /// `|det(H^T adj(Gram) L1)|`; empty without annihilation.
    pub beta_window: Vec<f64>,
    /// Named margin series, e.g. `("law20", ...)`.
    pub margins: Vec<(String, Vec<f64>)>,
    /// Per-channel `|W|` (truth only).
    pub w_abs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationReport {
    pub satisfied: bool,
    pub t_f: Option<f64>,
    pub alpha_low: f64,
    pub alpha_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub satisfied: bool,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub name: String,
    pub satisfied: bool,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub excitation: ExcitationReport,
    pub m_instantaneous: Option<BoundsReport>,
    pub m_windowed: Option<BoundsReport>,
    pub margins: Vec<MarginReport>,
    /// Max over `t >= T_f` of `|W_i|` (truth only).
    pub w_tail: Option<Vec<f64>>,
}

/// Minimum eigenvalue below `rel_tol * (largest eigenvalue seen)` counts as
/// loss of excitation.
pub const EXCITATION_REL_TOL: f64 = 1e-9;

pub fn check_conditions(series: &ConditionSeries) -> ConditionReport {
    let scale = series
        .gram_eigs
        .iter()
        .map(|e| e.1)
        .fold(0.0_f64, f64::max);
    let threshold = EXCITATION_REL_TOL * scale;
    let excited = |e: &(f64, f64)| scale > 0.0 && e.0 > threshold;

    // first index after which excitation never drops
    let mut start = None;
    for (i, e) in series.gram_eigs.iter().enumerate().rev() {
        if excited(e) {
            start = Some(i);
        } else {
            break;
        }
    }
    let from = start.unwrap_or(series.t.len());
    let t_f = start.map(|i| series.t[i]);

    let (alpha_low, alpha_high) = match start {
        Some(i) => series.gram_eigs[i..]
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), e| (lo.min(e.0), hi.max(e.1))),
        None => (0.0, scale),
    };

    let bounds = |v: &[f64]| -> Option<BoundsReport> {
        if v.is_empty() {
            return None;
        }
        let tail = if from < v.len() { &v[from..] } else { &v[..0] };
        if tail.is_empty() {
            return Some(BoundsReport {
                satisfied: false,
                low: 0.0,
                high: 0.0,
            });
        }
        let low = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let high = tail.iter().copied().fold(0.0_f64, f64::max);
        Some(BoundsReport {
            satisfied: low > 0.0,
            low,
            high,
        })
    };

    let margins = series
        .margins
        .iter()
        .map(|(name, v)| {
            let tail = if from < v.len() { &v[from..] } else { &v[..0] };
            let eta = if tail.is_empty() {
                0.0
            } else {
                tail.iter().copied().fold(f64::INFINITY, f64::min)
            };
            MarginReport {
                name: name.clone(),
                satisfied: eta > 0.0,
                eta,
            }
        })
        .collect();

    let w_tail = if series.w_abs.is_empty() {
        None
    } else {
        let dim = series.w_abs[0].len();
        let mut out = vec![0.0_f64; dim];
        for row in series.w_abs.iter().skip(from) {
            for (o, w) in out.iter_mut().zip(row) {
                *o = o.max(*w);
            }
        }
        Some(out)
    };

    ConditionReport {
        excitation: ExcitationReport {
            satisfied: start.is_some(),
            t_f,
            alpha_low,
            alpha_high,
        },
        m_instantaneous: bounds(&series.m_abs),
        m_windowed: bounds(&series.beta_window),
        margins,
        w_tail,
    }
}

impl ConditionReport {
    pub fn margin(&self, name: &str) -> Option<&MarginReport> {
        self.margins.iter().find(|m| m.name == name)
    }

    /// Plain `key = value` text with one section per condition.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
        out.push_str("[C1]\n");
        out.push_str(&format!("satisfied = {}\n", self.excitation.satisfied));
        out.push_str(&format!("t_f = {}\n", opt(self.excitation.t_f)));
        out.push_str(&format!("alpha_low = {:e}\n", self.excitation.alpha_low));
        out.push_str(&format!("alpha_high = {:e}\n", self.excitation.alpha_high));
        if let Some(w) = &self.w_tail {
            out.push_str("\n[C2]\n");
            let list: Vec<String> = w.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&format!("w_tail_max = [{}]\n", list.join(", ")));
        }
        for (tag, b) in [
            ("C3_instantaneous", &self.m_instantaneous),
            ("C3_windowed", &self.m_windowed),
        ] {
            if let Some(b) = b {
                out.push_str(&format!("\n[{tag}]\n"));
                out.push_str(&format!("satisfied = {}\n", b.satisfied));
                out.push_str(&format!("beta_low = {:e}\n", b.low));
                out.push_str(&format!("beta_high = {:e}\n", b.high));
            }
        }
        for m in &self.margins {
            out.push_str(&format!("\n[margin.{}]\n", m.name));
            out.push_str(&format!("satisfied = {}\n", m.satisfied));
            out.push_str(&format!("eta = {:e}\n", m.eta));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::build_eliminators;

    fn ext_from(phi: Matrix, y: Vec<f64>) -> ExtendedRegression {
        let d = phi.rows();
        ExtendedRegression {
            y,
            phi,
            y_dot: vec![0.0; d],
            phi_dot: Matrix::zeros(d, d),
            scheme: "sliding_window",
        }
    }

    #[test]
    fn identity_regression_hand_computed() {
        let elim = build_eliminators(2, &[0], None).unwrap();
        let theta = vec![-1.0, 1.0, 1.0, -1.0];
        let ext = ext_from(Matrix::identity(4), theta.clone());
        let mixed = crate::drem::mix(&ext).unwrap();
        let ann = annihilate_step(&mixed, &ext, &elim).unwrap();
        // H^T L1 = [[1, 1], [0, 0]] is singular
        assert_eq!(ann.m, 0.0);
        assert!(ann.lambda.iter().all(|x| *x == 0.0));
        assert_eq!(ann.omega, Matrix::zeros(4, 4));
    }

    #[test]
    fn definitional_identities() {
        let elim = build_eliminators(2, &[0], None).unwrap();
        let phi = Matrix::from_rows(&[
            &[2.0, 0.3, 0.1, 0.0],
            &[0.3, 1.5, 0.2, 0.1],
            &[0.1, 0.2, 1.2, 0.4],
            &[0.0, 0.1, 0.4, 0.9],
        ])
        .unwrap();
        let y = vec![0.5, -0.2, 0.3, 0.7];
        let ext = ext_from(phi.clone(), y.clone());
        let mixed = crate::drem::mix(&ext).unwrap();
        let ann = annihilate_step(&mixed, &ext, &elim).unwrap();
        let ht = elim.h.transpose();
        let g = ht.try_mul(&mixed.adj_phi).unwrap().try_mul(&elim.l1).unwrap();
        assert_eq!(ann.g, g);
        assert_eq!(ann.m, crate::matrix::determinant(&g).unwrap());
        assert_eq!(ann.omega, phi.scaled(ann.m));
        let l1n = elim.l1.mul_vec(&ann.n);
        for i in 0..4 {
            assert_eq!(ann.lambda[i], ann.m * y[i] - l1n[i]);
        }
    }

    #[test]
    fn residual_formula_matches_direct_difference() {
        let elim = build_eliminators(2, &[0], None).unwrap();
        let phi = Matrix::from_rows(&[
            &[1.0, 0.2, 0.4, 0.1],
            &[0.2, 2.0, 0.1, 0.3],
            &[0.4, 0.1, 1.5, 0.2],
            &[0.1, 0.3, 0.2, 1.1],
        ])
        .unwrap();
        let theta = vec![-1.0, 1.0, 1.0, -1.0];
        let w = vec![0.3, -0.1, 0.2, 0.05];
        let mut y = phi.mul_vec(&theta);
        y.axpy(1.0, &w);
        let ext = ext_from(phi, y);
        let mixed = crate::drem::mix(&ext).unwrap();
        let ann = annihilate_step(&mixed, &ext, &elim).unwrap();
        let direct: Vec<f64> = ann
            .lambda
            .iter()
            .zip(ann.omega.mul_vec(&theta))
            .map(|(l, o)| l - o)
            .collect();
        let formula = annihilation_residual(&ann, &mixed, &w, &elim);
        for (a, b) in direct.iter().zip(&formula) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn case_one_rejected() {
        let elim = build_eliminators(2, &[], None).unwrap();
        let ext = ext_from(Matrix::identity(4), vec![0.0; 4]);
        let mixed = crate::drem::mix(&ext).unwrap();
        assert!(annihilate_step(&mixed, &ext, &elim).is_err());
    }

    #[test]
    fn scalarizer_zero_input() {
        let s = Scalarizer::new(10.0).unwrap();
        let st = s.initial_state(4, false);
        let ann = AnnihilatedRegression {
            g: Matrix::zeros(2, 2),
            adj_g: Matrix::zeros(2, 2),
            m: 0.0,
            n: vec![0.0; 2],
            lambda: vec![0.0; 4],
            omega: Matrix::zeros(4, 4),
        };
        let r = s.rate(&st, &ann, None).unwrap();
        let out = s.scalarize(&st, &r).unwrap();
        assert_eq!(out.omega, 0.0);
        assert!(out.big_lambda.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn no_excitation_reported() {
        let series = ConditionSeries {
            t: vec![0.0, 1.0, 2.0],
            gram_eigs: vec![(0.0, 0.0); 3],
            ..Default::default()
        };
        let rep = check_conditions(&series);
        assert!(!rep.excitation.satisfied);
        assert_eq!(rep.excitation.alpha_low, 0.0);
        assert!(rep.excitation.t_f.is_none());
    }

    #[test]
    fn excitation_onset_and_margins() {
        let series = ConditionSeries {
            t: vec![0.0, 1.0, 2.0, 3.0],
            gram_eigs: vec![(0.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.4, 2.0)],
            margins: vec![("law13".into(), vec![-1.0, 3.0, -2.0, 0.7])],
            ..Default::default()
        };
        let rep = check_conditions(&series);
        assert_eq!(rep.excitation.t_f, Some(3.0));
        assert_eq!(rep.excitation.alpha_low, 0.4);
        assert_eq!(rep.margin("law13").unwrap().eta, 0.7);
        assert!(rep.to_text().contains("[margin.law13]"));
    }

    #[test]
    fn margin_formula() {
        assert_eq!(convergence_margin(2.0, 1.0, 0.0, 5.0), 2.0);
        assert_eq!(convergence_margin(2.0, 0.0, 1.0, 5.0), 0.0);
        // gamma D^2 + D' k + D'/D
        assert!((convergence_margin(1.0, 2.0, 1.0, 0.5) - (4.0 + 0.5 + 0.5)).abs() < 1e-15);
    }
}
