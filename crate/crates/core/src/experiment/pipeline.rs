//! Full-pipeline simulation of a scenario.
//!
//! Plant, parameterizer, duplication, extension, annihilation, filtering and
//! every enabled law form one state that is advanced by a single RK4 step.
//! At each stage the algebraic chain is re-evaluated in the order
//! duplicate, extend, mix, annihilate, scalarize, estimate (laws 13, 20, 28,
//! 29). The sliding-window scheme stores the four stage inputs of every
//! step, and the outgoing term of step `k` uses the matching stage of step
//! `k - T/h`, so `(Y, Phi)` is exactly the windowed sum of RK4 increments.

use nalgebra::{DMatrix, SymmetricEigen};

use super::config::ScenarioConfig;
use super::report::{Recorder, RunOutput};
use crate::annihilate::{annihilate_step, AnnihilatedRegression, ScalarizedRegression, Scalarizer, ScalarizerState};
use crate::drem::{
    mix, DuplicatedRegression, DuplicationState, Duplicator, ExtendedRegression, Extender, ExtensionInput,
    ExtensionScheme, ExtensionState, MixedRegression,
};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorState, Law, LawInput, LawKind};
use crate::matrix::{determinant, adjugate, EliminatorSet, Matrix};
use crate::sim::{
    integrate_step, DelayLine, OdeState, OutputSign, Parameterizer, RegressionSample, RegressionTruth, SignalSpec,
    SimClock, Stage,
};

const STAGES: usize = 4;

/// Everything integrated by the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub x: f64,
    /// Parameterizer filter states, `y` channel first.
    pub filters: Vec<f64>,
    /// `[1/(s+a0)[v], 1/(s+a0)[delta], transient]` (truth only).
    pub disturbance: Option<Vec<f64>>,
    pub dup: DuplicationState,
    pub ext: ExtensionState,
    pub scal: Option<ScalarizerState>,
    /// Un-duplicated Kreisselmeier path of the gradient and averaging laws.
    pub base: Option<ExtensionState>,
    pub est: Vec<EstimatorState>,
    /// `det Phi` integrated from its Jacobi rate, as a cross-check.
    pub delta_jacobi: f64,
}

impl OdeState for PipelineState {
    fn axpy(&mut self, a: f64, o: &Self) {
        self.x += a * o.x;
        self.filters.axpy(a, &o.filters);
        self.disturbance.axpy(a, &o.disturbance);
        self.dup.axpy(a, &o.dup);
        self.ext.axpy(a, &o.ext);
        self.scal.axpy(a, &o.scal);
        self.base.axpy(a, &o.base);
        for (e, r) in self.est.iter_mut().zip(&o.est) {
            e.axpy(a, r);
        }
        self.delta_jacobi += a * o.delta_jacobi;
    }

    fn non_finite(&self) -> Option<String> {
        if !self.x.is_finite() {
            return Some("plant state".into());
        }
        if let Some(c) = self.filters.non_finite() {
            return Some(format!("parameterizer{c}"));
        }
        if let Some(c) = self.disturbance.non_finite() {
            return Some(format!("disturbance filter{c}"));
        }
        if let Some(c) = self.dup.non_finite() {
            return Some(format!("duplication.{c}"));
        }
        if let Some(c) = self.ext.non_finite() {
            return Some(format!("extension.{c}"));
        }
        if let Some(c) = self.scal.non_finite() {
            return Some(format!("scalarizer.{c}"));
        }
        if let Some(c) = self.base.non_finite() {
            return Some(format!("baseline.{c}"));
        }
        for (i, e) in self.est.iter().enumerate() {
            if let Some(c) = e.non_finite() {
                return Some(format!("estimator{i}.{c}"));
            }
        }
        if !self.delta_jacobi.is_finite() {
            return Some("delta_jacobi".into());
        }
        None
    }
}

/// All signals of one evaluation at a step start.
///
/// Quantities downstream of the extension are in the scaled coordinates of
/// the pipeline (`c = sim.scaling`); [`Pipeline::unscale`] converts.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    /// Segment whose parameter the truth channels currently refer to.
    pub segment: usize,
    pub theta: Vec<f64>,
    pub theta_stacked: Vec<f64>,
    pub u: f64,
    pub y: f64,
    pub sample: RegressionSample,
    /// Unscaled duplicated regression.
    pub dup: DuplicatedRegression,
    pub ext: ExtendedRegression,
    /// `W = Y - Phi Theta` integrated from its own equation (truth only).
    pub ext_w: Option<Vec<f64>>,
    pub mixed: MixedRegression,
    pub ann: Option<AnnihilatedRegression>,
    /// `lambda - Omega Theta` (truth only).
    pub residual: Option<Vec<f64>>,
    pub scal: Option<ScalarizedRegression>,
    pub base_ext: Option<ExtendedRegression>,
    pub base_mixed: Option<MixedRegression>,
    pub base_w: Option<Vec<f64>>,
    pub laws: Vec<LawKind>,
    pub law_inputs: Vec<LawInput>,
    pub estimates: Vec<Vec<f64>>,
    pub kappas: Vec<f64>,
    pub margins: Vec<f64>,
    pub delta_jacobi: f64,
}

/// Powers of `c` carried by the scaled quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingExponents {
    /// `det Phi`
    pub delta: i32,
    /// `det G`
    pub m: i32,
    /// `det Omega_f`
    pub omega: i32,
}

impl ScalingExponents {
    /// For a stacked dimension `d = 2n` and `m` correlated channels.
    pub fn new(d: usize, m: usize) -> Self {
        let d = d as i32;
        let m_exp = 4 * m as i32 * (d - 1);
        Self {
            delta: 2 * d,
            m: m_exp,
            omega: (m_exp + 2) * d,
        }
    }
}

#[derive(Debug, Clone)]
struct StepRecord {
    /// Per stage: scaled stacked regressor, scaled `z~`, scaled `f`.
    values: Vec<f64>,
    segment: usize,
}

#[derive(Debug, Clone)]
enum Source {
    Plant {
        u: SignalSpec,
        delta: SignalSpec,
        v: SignalSpec,
        alpha0: f64,
        param: Parameterizer,
    },
    Direct {
        phi: Vec<SignalSpec>,
        w: SignalSpec,
    },
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: ScenarioConfig,
    n: usize,
    d: usize,
    t0: f64,
    h: f64,
    steps: u64,
    truth: bool,
    c: f64,
    source: Source,
    dup: Duplicator,
    ext: Extender,
    elim: EliminatorSet,
    scal: Option<Scalarizer>,
    base: Option<Extender>,
    laws: Vec<Law>,
    nominal: Vec<Law>,
    thetas: Vec<Vec<f64>>,
    stacked: Vec<Vec<f64>>,
    segment_steps: Vec<u64>,
    exps: ScalingExponents,
}

impl Pipeline {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n();
        let d = 2 * n;
        let s = &cfg.sim;
        let elim = cfg.eliminators()?;
        let m = elim.m();
        let c = s.scaling;
        let exps = ScalingExponents::new(d, m);

        let mut kinds = cfg.laws.enabled.clone();
        kinds.sort();
        let nominal: Vec<Law> = kinds
            .iter()
            .map(|k| match k {
                LawKind::CaseOne => Law::CaseOne {
                    gamma: cfg.laws.gamma13.unwrap_or(0.0),
                },
                LawKind::Annihilator => Law::Annihilator {
                    gamma: cfg.laws.gamma20.unwrap_or(0.0),
                },
                LawKind::Gradient => Law::Gradient {
                    gamma: cfg.laws.gamma_delta.unwrap_or(0.0),
                },
                LawKind::Averaging => Law::Averaging {
                    gamma_kappa: cfg.laws.gamma_kappa.unwrap_or(0.0),
                    f0: cfg.laws.f0.unwrap_or(0.0),
                },
            })
            .collect();
        // kappa tracks 1/r with r ~ c^e, so the gain must carry c^(-2e)
        let laws = nominal
            .iter()
            .map(|law| match law {
                Law::CaseOne { gamma } => Law::CaseOne {
                    gamma: gamma * c.powi(-2 * exps.delta),
                },
                Law::Annihilator { gamma } => Law::Annihilator {
                    gamma: gamma * c.powi(-2 * exps.omega),
                },
                other => *other,
            })
            .collect();

        let needs_base = kinds
            .iter()
            .any(|k| matches!(k, LawKind::Gradient | LawKind::Averaging));
        let thetas: Vec<Vec<f64>> = cfg.plant.segments.iter().map(|g| g.theta.clone()).collect();
        let stacked = thetas.iter().map(|t| crate::matrix::stack_parameters(t)).collect();
        let segment_steps = cfg
            .plant
            .segments
            .iter()
            .map(|g| crate::sim::whole_steps(g.start - s.t0, s.h).unwrap_or(0))
            .collect();

        Ok(Self {
            n,
            d,
            t0: s.t0,
            h: s.h,
            steps: cfg.steps(),
            truth: s.truth,
            c,
            source: match (&cfg.regressor, &cfg.parameterizer) {
                (Some(r), _) => Source::Direct {
                    phi: r.phi.iter().map(|p| p.to_spec()).collect(),
                    w: r.w.to_spec(),
                },
                (None, Some(p)) => Source::Plant {
                    u: cfg.signals.u.to_spec(),
                    delta: cfg.signals.delta.to_spec(),
                    v: cfg.signals.v.to_spec(),
                    alpha0: p.alpha0,
                    param: Parameterizer::first_order(p.alpha0, OutputSign::Positive)?,
                },
                (None, None) => return Err(Error::config("parameterizer.alpha0 is required for the plant source")),
            },
            dup: Duplicator::new(cfg.pipeline.alpha)?,
            ext: Extender::new(cfg.scheme()?, d, s.h)?,
            scal: if m > 0 {
                Some(Scalarizer::new(cfg.pipeline.k)?)
            } else {
                None
            },
            base: if needs_base {
                Some(Extender::new(
                    ExtensionScheme::Kreisselmeier {
                        l: cfg.pipeline.baseline_l,
                    },
                    n,
                    s.h,
                )?)
            } else {
                None
            },
            elim,
            laws,
            nominal,
            thetas,
            stacked,
            segment_steps,
            exps,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn eliminators(&self) -> &EliminatorSet {
        &self.elim
    }

    pub fn law_kinds(&self) -> Vec<LawKind> {
        self.laws.iter().map(Law::kind).collect()
    }

    /// Laws with the configured (unscaled) gains.
    pub fn nominal_laws(&self) -> &[Law] {
        &self.nominal
    }

    pub fn scaling(&self) -> f64 {
        self.c
    }

    pub fn exponents(&self) -> ScalingExponents {
        self.exps
    }

    pub fn has_annihilation(&self) -> bool {
        self.scal.is_some()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Sliding window length of the main path, if that scheme is used.
    pub fn window(&self) -> Option<f64> {
        match self.ext.scheme() {
            ExtensionScheme::SlidingWindow { window } => Some(*window),
            _ => None,
        }
    }

    /// `value * c^(-power)`
    pub fn unscale(&self, value: f64, power: i32) -> f64 {
        if self.c == 1.0 {
            value
        } else {
            value * self.c.powi(-power)
        }
    }

    /// Segment used by the step starting at step index `k`.
    fn step_segment(&self, k: u64) -> usize {
        self.segment_steps.iter().rposition(|&s| s <= k).unwrap_or(0)
    }

    pub fn initial_state(&self) -> PipelineState {
        let x0 = self.cfg.plant.x0;
        let kappa0 = self.cfg.laws.kappa0;
        let theta0 = self.cfg.laws.theta0.clone().unwrap_or_else(|| vec![0.0; self.n]);
        let est = self
            .laws
            .iter()
            .map(|law| match law.kind() {
                LawKind::CaseOne => EstimatorState::new(self.unscale(kappa0, self.exps.delta), vec![]),
                LawKind::Annihilator => EstimatorState::new(self.unscale(kappa0, self.exps.omega), vec![]),
                LawKind::Gradient => EstimatorState::new(0.0, theta0.clone()),
                LawKind::Averaging => EstimatorState::new(kappa0, theta0.clone()),
            })
            .collect();
        PipelineState {
            x: x0,
            filters: match &self.source {
                Source::Plant { param, .. } => param.zero_state(),
                Source::Direct { .. } => Vec::new(),
            },
            disturbance: (self.truth && matches!(self.source, Source::Plant { .. })).then(|| vec![0.0, 0.0, x0]),
            dup: self.dup.initial_state(self.n, self.truth),
            ext: self.ext.initial_state(self.truth),
            scal: self.scal.map(|s| s.initial_state(self.d, self.truth)),
            base: self.base.as_ref().map(|b| b.initial_state(self.truth)),
            est,
            delta_jacobi: 0.0,
        }
    }

    /// Keeps every truth channel consistent when the plant parameter jumps
    /// from segment `from` to segment `to`. Estimator states are untouched.
    fn apply_switch(&self, s: &mut PipelineState, from: usize, to: usize) {
        let dtheta: Vec<f64> = self.thetas[to]
            .iter()
            .zip(&self.thetas[from])
            .map(|(a, b)| a - b)
            .collect();
        let dstacked = crate::matrix::stack_parameters(&dtheta);
        if let Some(dist) = s.disturbance.as_mut() {
            // transient = z - phi^T theta - w_def, where w_def holds -theta_1 xi_v
            let xi_x = s.filters[0] - dist[0];
            let xi_u = s.filters[1];
            dist[2] -= dtheta[0] * xi_x + dtheta[1] * xi_u;
        }
        self.dup.apply_parameter_jump(&mut s.dup, &dtheta);
        self.ext.apply_parameter_jump(&mut s.ext, &dstacked);
        if let (Some(sc), Some(ss)) = (&self.scal, s.scal.as_mut()) {
            sc.apply_parameter_jump(ss, &dstacked);
        }
        if let (Some(b), Some(bs)) = (&self.base, s.base.as_mut()) {
            b.apply_parameter_jump(bs, &dtheta);
        }
    }

    /// Right-hand side at one stage, plus all intermediate signals.
    /// `record` receives the scaled extension input of this stage.
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        t: f64,
        step: u64,
        s: &PipelineState,
        seg: usize,
        delayed: Option<(&[f64], usize)>,
        record: &mut [f64],
    ) -> Result<(PipelineState, Snapshot)> {
        let n = self.n;
        let d = self.d;
        let theta = &self.thetas[seg];
        let theta_st = &self.stacked[seg];
        let (u, y, x_rate, filt_rate, dist_rate, sample, w) = match &self.source {
            Source::Plant {
                u,
                delta,
                v,
                alpha0: a0,
                param,
            } => {
                let u = u.generate(t);
                let dl = delta.generate(t);
                let v = v.generate(t);
                let y = s.x + v;
                let x_rate = theta[0] * s.x + theta[1] * u + dl;
                let filt_rate = param.rate(&s.filters, y, u);
                let mut sample = param.sample(t, &s.filters, y);
                let (dist_rate, w) = match &s.disturbance {
                    Some(dv) => {
                        let (xv, xd, eps) = (dv[0], dv[1], dv[2]);
                        let w = (v - a0 * xv) + xd - theta[0] * xv + eps;
                        (Some(vec![-a0 * xv + v, -a0 * xd + dl, -a0 * eps]), Some(w))
                    }
                    None => (None, None),
                };
                sample.truth = w.map(|w| RegressionTruth {
                    w,
                    theta: theta.clone(),
                });
                (u, y, x_rate, filt_rate, dist_rate, sample, w)
            }
            Source::Direct { phi, w } => {
                let phi: Vec<f64> = phi.iter().map(|p| p.generate(t)).collect();
                let w = w.generate(t);
                let z = phi.iter().zip(theta).map(|(p, th)| p * th).sum::<f64>() + w;
                let w = self.truth.then_some(w);
                let sample = RegressionSample {
                    t,
                    z,
                    phi,
                    truth: w.map(|w| RegressionTruth {
                        w,
                        theta: theta.clone(),
                    }),
                };
                (0.0, z, 0.0, Vec::new(), None, sample, w)
            }
        };

        let dup = self.dup.duplicate(&sample, &s.dup);
        let dup_rate = self.dup.rate(&sample, &s.dup);

        let c = self.c;
        let phi_s: Vec<f64> = dup.phi.iter().map(|p| c * p).collect();
        let z_s = c * dup.z_tilde;
        let f_s = dup.f.map(|f| c * f);
        record[..d].copy_from_slice(&phi_s);
        record[d] = z_s;
        record[d + 1] = f_s.unwrap_or(0.0);

        let input = ExtensionInput {
            phi: &phi_s,
            z: z_s,
            f: f_s,
            theta: self.truth.then_some(theta_st.as_slice()),
        };
        let old = delayed.map(|(vals, dseg)| ExtensionInput {
            phi: &vals[..d],
            z: vals[d],
            f: self.truth.then_some(vals[d + 1]),
            theta: self.truth.then_some(self.stacked[dseg].as_slice()),
        });
        let ext_rate = self.ext.rate(&s.ext, &input, old.as_ref())?;
        let ext = self.ext.regression(&s.ext, &ext_rate);
        let mixed = mix(&ext)?;

        let (ann, residual, scal_rate, scal) = match (&self.scal, &s.scal) {
            (Some(sc), Some(ss)) => {
                let ann = annihilate_step(&mixed, &ext, &self.elim)?;
                let residual = self.truth.then(|| {
                    let om = ann.omega.mul_vec(theta_st);
                    ann.lambda.iter().zip(om).map(|(l, o)| l - o).collect::<Vec<f64>>()
                });
                let r = sc.rate(ss, &ann, residual.as_deref())?;
                let reg = sc.scalarize(ss, &r)?;
                (Some(ann), residual, Some(r), Some(reg))
            }
            _ => (None, None, None, None),
        };

        let (base_ext, base_mixed, base_rate) = match (&self.base, &s.base) {
            (Some(b), Some(bs)) => {
                let inp = ExtensionInput {
                    phi: &sample.phi,
                    z: sample.z,
                    f: w,
                    theta: None,
                };
                let r = b.rate(bs, &inp, None)?;
                let reg = b.regression(bs, &r);
                let mx = mix(&reg)?;
                (Some(reg), Some(mx), Some(r))
            }
            _ => (None, None, None),
        };

        let mut est_rate = Vec::with_capacity(self.laws.len());
        let mut law_inputs = Vec::with_capacity(self.laws.len());
        let mut estimates = Vec::with_capacity(self.laws.len());
        let mut margins = Vec::with_capacity(self.laws.len());
        for (law, st) in self.laws.iter().zip(&s.est) {
            let inp = match law.kind() {
                LawKind::CaseOne => LawInput {
                    t,
                    y: mixed.y_mix[..n].to_vec(),
                    r: mixed.delta,
                    r_dot: mixed.delta_dot,
                },
                LawKind::Annihilator => {
                    let sr = scal.as_ref().expect("annihilation path present");
                    LawInput {
                        t,
                        y: sr.big_lambda[..n].to_vec(),
                        r: sr.omega,
                        r_dot: sr.omega_dot,
                    }
                }
                LawKind::Gradient | LawKind::Averaging => {
                    let bm = base_mixed.as_ref().expect("baseline path present");
                    LawInput {
                        t,
                        y: bm.y_mix.clone(),
                        r: bm.delta,
                        r_dot: bm.delta_dot,
                    }
                }
            };
            est_rate.push(estimators::rate(law, st, &inp));
            estimates.push(estimators::output(law, st, &inp));
            margins.push(estimators::margin(law, st, &inp));
            law_inputs.push(inp);
        }

        let rate = PipelineState {
            x: x_rate,
            filters: filt_rate,
            disturbance: dist_rate,
            dup: dup_rate,
            ext: ext_rate,
            scal: scal_rate,
            base: base_rate,
            est: est_rate,
            delta_jacobi: mixed.delta_dot,
        };
        let snap = Snapshot {
            t,
            step,
            segment: seg,
            theta: theta.clone(),
            theta_stacked: theta_st.clone(),
            u,
            y,
            sample,
            dup,
            ext,
            ext_w: s.ext.w.clone(),
            mixed,
            ann,
            residual,
            scal,
            base_ext,
            base_mixed,
            base_w: s.base.as_ref().and_then(|b| b.w.clone()),
            laws: self.law_kinds(),
            law_inputs,
            estimates,
            kappas: s.est.iter().map(|e| e.kappa).collect(),
            margins,
            delta_jacobi: s.delta_jacobi,
        };
        Ok((rate, snap))
    }

    fn annotate(&self, e: Error) -> Error {
        match e {
            Error::NumericalAbort { t, signal, hint } => {
                for (i, law) in self.laws.iter().enumerate() {
                    let key = format!("estimator{i}");
                    if signal.contains(&key) {
                        return Error::NumericalAbort {
                            t,
                            signal: signal.replace(&key, law.kind().tag()),
                            hint: Some(estimators::abort_hint(law)),
                        };
                    }
                }
                Error::NumericalAbort { t, signal, hint }
            }
            other => other,
        }
    }

    fn check_snapshot(&self, snap: &Snapshot) -> Result<()> {
        for (law, est) in self.laws.iter().zip(&snap.estimates) {
            if est.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalAbort {
                    t: snap.t,
                    signal: format!("{}.theta_hat", law.kind().tag()),
                    hint: Some(estimators::abort_hint(law)),
                });
            }
        }
        let scal_bad = snap
            .scal
            .as_ref()
            .is_some_and(|s| !s.omega.is_finite() || s.big_lambda.iter().any(|x| !x.is_finite()));
        if !snap.mixed.delta.is_finite() || scal_bad {
            return Err(Error::NumericalAbort {
                t: snap.t,
                signal: if scal_bad { "omega".into() } else { "delta".into() },
                hint: Some("enable the regressor scaling mode".into()),
            });
        }
        Ok(())
    }

    /// Runs the scenario.
    pub fn run(&self) -> Result<RunOutput> {
        self.run_with(|_| {})
    }

    /// Runs the scenario, handing the step-start snapshot of every step (and
    /// of the final time) to `hook`.
    pub fn run_with<F: FnMut(&Snapshot)>(&self, mut hook: F) -> Result<RunOutput> {
        let stride = self.d + 2;
        let mut delay = match self.ext.scheme() {
            ExtensionScheme::SlidingWindow { window } => Some(DelayLine::new(
                self.t0,
                self.h,
                *window,
                StepRecord {
                    values: vec![0.0; STAGES * stride],
                    segment: 0,
                },
            )?),
            _ => None,
        };
        let mut recorder = Recorder::new(self);
        let mut clock = SimClock::new(self.t0, self.h)?;
        let mut state = self.initial_state();
        let mut seg = 0;

        for k in 0..self.steps {
            let step_seg = self.step_segment(k);
            if step_seg != seg {
                self.apply_switch(&mut state, seg, step_seg);
                seg = step_seg;
            }
            let old = match &delay {
                Some(dl) => Some(dl.delayed_ref_at_index(k)?),
                None => None,
            };
            let mut values = vec![0.0; STAGES * stride];
            let mut first = None;
            let next = integrate_step(
                &state,
                |stage: Stage, s: &PipelineState| {
                    let i = stage.index;
                    let delayed = old.map(|r| (&r.values[i * stride..(i + 1) * stride], r.segment));
                    let (rate, snap) = self.evaluate(
                        stage.t,
                        k,
                        s,
                        seg,
                        delayed,
                        &mut values[i * stride..(i + 1) * stride],
                    )?;
                    if i == 0 {
                        first = Some(snap);
                    }
                    Ok(rate)
                },
                &clock,
            )
            .map_err(|e| self.annotate(e))?;
            let snap = first.expect("first stage evaluated");
            self.check_snapshot(&snap)?;
            recorder.observe(self, &snap);
            hook(&snap);

            if let Some(dl) = delay.as_mut() {
                dl.push(StepRecord { values, segment: seg });
            }
            if let Some(c) = next.non_finite() {
                return Err(self.annotate(Error::NumericalAbort {
                    t: clock.t() + self.h,
                    signal: c,
                    hint: None,
                }));
            }
            state = next;
            clock.advance();
        }

        // closing sample at t_end
        let old = match &delay {
            Some(dl) => Some(dl.delayed_ref_at_index(self.steps)?),
            None => None,
        };
        let mut scratch = vec![0.0; stride];
        let delayed = old.map(|r| (&r.values[..stride], r.segment));
        let (_, snap) = self
            .evaluate(clock.t(), self.steps, &state, seg, delayed, &mut scratch)
            .map_err(|e| self.annotate(e))?;
        self.check_snapshot(&snap)?;
        recorder.observe(self, &snap);
        hook(&snap);

        Ok(recorder.finish(self))
    }

    /// Extreme eigenvalues of the (unscaled) windowed Gram held in `Phi`.
    pub fn gram_extremes(&self, phi_scaled: &Matrix) -> (f64, f64) {
        let d = phi_scaled.rows();
        let k = self.unscale(1.0, 2);
        let mut g = DMatrix::from_row_slice(d, d, phi_scaled.as_slice()) * k;
        let gt = g.transpose();
        g = (g + gt) * 0.5;
        let eig = SymmetricEigen::new(g).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `|det(H^T adj(Gram) L1)|` with the unscaled Gram.
    pub fn windowed_beta(&self, phi_scaled: &Matrix) -> Option<f64> {
        if self.elim.m() == 0 {
            return None;
        }
        let gram = phi_scaled.scaled(self.unscale(1.0, 2));
        let adj = adjugate(&gram).ok()?;
        let g = self.elim.h.transpose().try_mul(&adj).ok()?.try_mul(&self.elim.l1).ok()?;
        determinant(&g).ok().map(f64::abs)
    }
}
