//! Fixed-step continuous-time simulation primitives.
//!
//! All ODEs in the crate are advanced with the classical fourth-order
//! Runge-Kutta step in [`integrate_step`]. States are any type implementing
//! [`OdeState`], so a whole pipeline can be packed into one structured state
//! and stepped coherently.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A state that RK4 can combine linearly.
pub trait OdeState: Clone {
    /// `self += a * other`
    fn axpy(&mut self, a: f64, other: &Self);

    /// Name of the first non-finite component, if any.
    fn non_finite(&self) -> Option<String>;
}

impl OdeState for f64 {
    fn axpy(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }

    fn non_finite(&self) -> Option<String> {
        (!self.is_finite()).then(|| "value".to_string())
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.len(), other.len(), "state length mismatch");
        for (x, y) in self.iter_mut().zip(other) {
            *x += a * y;
        }
    }

    fn non_finite(&self) -> Option<String> {
        self.iter()
            .position(|x| !x.is_finite())
            .map(|i| format!("[{i}]"))
    }
}

impl OdeState for Matrix {
    fn axpy(&mut self, a: f64, other: &Self) {
        Matrix::axpy(self, a, other);
    }

    fn non_finite(&self) -> Option<String> {
        let cols = self.cols();
        self.as_slice()
            .iter()
            .position(|x| !x.is_finite())
            .map(|k| format!("[{}, {}]", k / cols, k % cols))
    }
}

impl<T: OdeState> OdeState for Option<T> {
    fn axpy(&mut self, a: f64, other: &Self) {
        match (self, other) {
            (Some(x), Some(y)) => x.axpy(a, y),
            (None, None) => {}
            _ => panic!("optional state presence mismatch"),
        }
    }

    fn non_finite(&self) -> Option<String> {
        self.as_ref().and_then(OdeState::non_finite)
    }
}

/// Fixed-step simulation clock. Time is always recomputed from the step
/// index, so long runs do not accumulate drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    t0: f64,
    h: f64,
    step_index: u64,
}

impl SimClock {
    pub fn new(t0: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || !t0.is_finite() {
            return Err(Error::config(format!("invalid clock: t0 = {t0}, h = {h}")));
        }
        Ok(Self {
            t0,
            h,
            step_index: 0,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn t(&self) -> f64 {
        self.time_at(self.step_index)
    }

    pub fn time_at(&self, index: u64) -> f64 {
        self.t0 + index as f64 * self.h
    }

    pub fn advance(&mut self) {
        self.step_index += 1;
    }

    /// Number of whole steps in `span`, or `None` when `span` is not an
    /// integer multiple of `h` (relative tolerance 1e-9).
    pub fn steps_in(&self, span: f64) -> Option<u64> {
        whole_steps(span, self.h)
    }
}

/// `span / h` when it is a non-negative integer to relative tolerance 1e-9.
pub fn whole_steps(span: f64, h: f64) -> Option<u64> {
    if !(span >= 0.0) || !(h > 0.0) {
        return None;
    }
    let ratio = span / h;
    let rounded = ratio.round();
    ((ratio - rounded).abs() <= 1e-9 * rounded.max(1.0)).then_some(rounded as u64)
}

/// One of the four RK4 evaluation points inside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    /// 0..4, in evaluation order.
    pub index: usize,
    pub t: f64,
}

/// RK4 stage weights, in stage order.
pub const RK4_WEIGHTS: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

/// Advances `state` by one classical RK4 step of size `clock.h()` from time
/// `clock.t()`. The right-hand side receives the stage (index and time) and
/// the stage state; it may fail, and a non-finite derivative aborts the step
/// with the time and component named.
pub fn integrate_step<S, F>(state: &S, mut rhs: F, clock: &SimClock) -> Result<S>
where
    S: OdeState,
    F: FnMut(Stage, &S) -> Result<S>,
{
    let t = clock.t();
    let h = clock.h();
    let offsets = [0.0, 0.5 * h, 0.5 * h, h];

    let mut checked = |index: usize, s: &S| -> Result<S> {
        let stage = Stage {
            index,
            t: t + offsets[index],
        };
        let k = rhs(stage, s)?;
        if let Some(component) = k.non_finite() {
            return Err(Error::NumericalAbort {
                t: stage.t,
                signal: format!("derivative component {component}"),
                hint: None,
            });
        }
        Ok(k)
    };

    let k1 = checked(0, state)?;
    let mut probe = state.clone();
    probe.axpy(0.5 * h, &k1);
    let k2 = checked(1, &probe)?;
    probe = state.clone();
    probe.axpy(0.5 * h, &k2);
    let k3 = checked(2, &probe)?;
    probe = state.clone();
    probe.axpy(h, &k3);
    let k4 = checked(3, &probe)?;

    let mut next = state.clone();
    next.axpy(h * RK4_WEIGHTS[0], &k1);
    next.axpy(h * RK4_WEIGHTS[1], &k2);
    next.axpy(h * RK4_WEIGHTS[2], &k3);
    next.axpy(h * RK4_WEIGHTS[3], &k4);
    Ok(next)
}

// ---------------------------------------------------------------------------
// Delay line
// ---------------------------------------------------------------------------

/// Bounded history returning the sample stored exactly `window` seconds ago.
///
/// Samples are pushed once per step, the first one at `t0`. The lag is an
/// integer number of steps, so retrieval is sample-exact; before the window
/// has filled, the zero sample is returned (the `max{t0, t - T}` lower limit
/// of a sliding integral).
#[derive(Debug, Clone)]
pub struct DelayLine<V: Clone> {
    t0: f64,
    h: f64,
    lag: u64,
    zero: V,
    buffer: VecDeque<V>,
    /// Step index of the next sample to be pushed.
    next_index: u64,
}

impl<V: Clone> DelayLine<V> {
    pub fn new(t0: f64, h: f64, window: f64, zero: V) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::DelayLine(format!("window must be positive, got {window}")));
        }
        let lag = whole_steps(window, h).ok_or_else(|| {
            Error::DelayLine(format!(
                "window {window} is not an integer multiple of the step {h}"
            ))
        })?;
        Ok(Self {
            t0,
            h,
            lag,
            zero,
            buffer: VecDeque::with_capacity(lag as usize + 1),
            next_index: 0,
        })
    }

    /// Lag in steps (`round(window / h)`).
    pub fn capacity(&self) -> u64 {
        self.lag
    }

    pub fn window(&self) -> f64 {
        self.lag as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Appends the sample for the next step.
    pub fn push(&mut self, sample: V) {
        if self.buffer.len() as u64 > self.lag {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.next_index += 1;
    }

    /// Sample stored at step `index - lag`, zero when that is before `t0`.
    pub fn delayed_at_index(&self, index: u64) -> Result<V> {
        self.delayed_ref_at_index(index).map(V::clone)
    }

    /// Borrowing form of [`DelayLine::delayed_at_index`].
    pub fn delayed_ref_at_index(&self, index: u64) -> Result<&V> {
        if index < self.lag {
            return Ok(&self.zero);
        }
        let wanted = index - self.lag;
        if wanted >= self.next_index {
            return Err(Error::DelayLine(format!(
                "step {wanted} has not been simulated yet"
            )));
        }
        let oldest = self.next_index - self.buffer.len() as u64;
        if wanted < oldest {
            return Err(Error::DelayLine(format!(
                "step {wanted} has already left the buffer"
            )));
        }
        Ok(&self.buffer[(wanted - oldest) as usize])
    }

    /// Sample at time `t - window`.
    pub fn delayed(&self, t: f64) -> Result<V> {
        let offset = t - self.t0;
        let index = whole_steps(offset, self.h).ok_or_else(|| {
            Error::DelayLine(format!("time {t} is not on the step grid"))
        })?;
        self.delayed_at_index(index)
    }
}

// ---------------------------------------------------------------------------
// First-order filters
// ---------------------------------------------------------------------------

/// Transfer structure of a first-order filter with pole `-pole`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// `pole / (s + pole)`: unit DC gain.
    Lowpass,
    /// `1 / (s + pole)`.
    Pole,
    /// `s / (s + pole)`, realized as `input - pole * x` with `x` the `1/(s+pole)` state.
    Washout,
}

/// Stateless description of a first-order filter; its state lives in the
/// caller's ODE state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    pub kind: FilterKind,
    pub pole: f64,
}

impl FirstOrderFilter {
    pub fn new(kind: FilterKind, pole: f64) -> Result<Self> {
        if !(pole > 0.0 && pole.is_finite()) {
            return Err(Error::config(format!("filter pole must be positive, got {pole}")));
        }
        Ok(Self { kind, pole })
    }

    pub fn rate(&self, state: f64, input: f64) -> f64 {
        match self.kind {
            FilterKind::Lowpass => self.pole * (input - state),
            FilterKind::Pole | FilterKind::Washout => -self.pole * state + input,
        }
    }

    pub fn output(&self, state: f64, input: f64) -> f64 {
        match self.kind {
            FilterKind::Lowpass | FilterKind::Pole => state,
            FilterKind::Washout => input - self.pole * state,
        }
    }

    pub fn rate_vec(&self, state: &[f64], input: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(input)
            .map(|(&x, &u)| self.rate(x, u))
            .collect()
    }

    pub fn output_vec(&self, state: &[f64], input: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(input)
            .map(|(&x, &u)| self.output(x, u))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Hurwitz check and the LTI parameterizer
// ---------------------------------------------------------------------------

/// Routh-Hurwitz test for a monic polynomial `s^n + c[0] s^(n-1) + ... + c[n-1]`.
pub fn is_hurwitz(coeffs: &[f64]) -> bool {
    let n = coeffs.len();
    if n == 0 {
        return true;
    }
    if coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return false;
    }
    // full coefficient list, highest power first
    let mut poly = Vec::with_capacity(n + 1);
    poly.push(1.0);
    poly.extend_from_slice(coeffs);

    let mut upper: Vec<f64> = poly.iter().step_by(2).copied().collect();
    let mut lower: Vec<f64> = poly.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..n {
        let pivot = lower.first().copied().unwrap_or(0.0);
        if !(pivot > 0.0) {
            return false;
        }
        let width = upper.len().max(lower.len());
        let get = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
        let next: Vec<f64> = (0..width.saturating_sub(1))
            .map(|i| (pivot * get(&upper, i + 1) - get(&upper, 0) * get(&lower, i + 1)) / pivot)
            .collect();
        upper = std::mem::replace(&mut lower, next);
        while lower.last() == Some(&0.0) && lower.len() > 1 {
            lower.pop();
        }
        if lower.is_empty() {
            break;
        }
    }
    true
}

/// Which sign the output-channel block of the regressor carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSign {
    /// `phi = [-(lambda^T / Lambda)[y], (lambda^T / Lambda)[u]]`
    Negative,
    /// `phi = [(lambda^T / Lambda)[y], (lambda^T / Lambda)[u]]`
    Positive,
}

/// Filtered-signal parameterization of an input-output pair `(u, y)`:
/// `z = s^ny / Lambda(s) [y]` and `phi` built from `[s^(ny-1) ... s 1] / Lambda(s)`
/// applied to `y` and `u`.
///
/// Each channel is a controllable-canonical realization of `1 / Lambda(s)`;
/// the improper `s^ny / Lambda(s)` is read off as `y - (Lambda(s) - s^ny) / Lambda(s) [y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterizer {
    /// `Lambda(s) = s^ny + coeffs[0] s^(ny-1) + ... + coeffs[ny-1]`
    coeffs: Vec<f64>,
    sign: OutputSign,
}

/// Regressand, regressor and time produced by a parameterizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub t: f64,
    pub z: f64,
    pub phi: Vec<f64>,
    /// Ground truth `(w, theta)` when the generating system is simulated.
    pub truth: Option<RegressionTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTruth {
    pub w: f64,
    pub theta: Vec<f64>,
}

impl Parameterizer {
    pub fn new(coeffs: Vec<f64>, sign: OutputSign) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::config("parameterizer needs a filter of order >= 1"));
        }
        if !is_hurwitz(&coeffs) {
            return Err(Error::config(format!(
                "filter polynomial with coefficients {coeffs:?} is not Hurwitz"
            )));
        }
        Ok(Self { coeffs, sign })
    }

    /// First-order `Lambda(s) = s + pole`.
    pub fn first_order(pole: f64, sign: OutputSign) -> Result<Self> {
        Self::new(vec![pole], sign)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Regressor length `2 * ny`.
    pub fn regressor_len(&self) -> usize {
        2 * self.order()
    }

    /// State length: `ny` states per channel, `y` channel first.
    pub fn state_len(&self) -> usize {
        2 * self.order()
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.state_len()]
    }

    /// Coefficient of `s^k` in `Lambda(s)` for `k < ny`.
    fn low_coeff(&self, k: usize) -> f64 {
        self.coeffs[self.order() - 1 - k]
    }

    fn channel_rate(&self, xi: &[f64], input: f64, out: &mut [f64]) {
        let ny = self.order();
        for i in 0..ny - 1 {
            out[i] = xi[i + 1];
        }
        out[ny - 1] = input - (0..ny).map(|k| self.low_coeff(k) * xi[k]).sum::<f64>();
    }

    pub fn rate(&self, state: &[f64], y: f64, u: f64) -> Vec<f64> {
        let ny = self.order();
        let mut out = vec![0.0; 2 * ny];
        self.channel_rate(&state[..ny], y, &mut out[..ny]);
        self.channel_rate(&state[ny..], u, &mut out[ny..]);
        out
    }

    /// `z(t)` and `phi(t)` at the given filter state and current `y`.
    pub fn sample(&self, t: f64, state: &[f64], y: f64) -> RegressionSample {
        let ny = self.order();
        let (xy, xu) = state.split_at(ny);
        let z = y - (0..ny).map(|k| self.low_coeff(k) * xy[k]).sum::<f64>();
        let sign = match self.sign {
            OutputSign::Negative => -1.0,
            OutputSign::Positive => 1.0,
        };
        // lambda^T = [s^(ny-1) ... s 1], i.e. the channel states in reverse.
        let phi = xy
            .iter()
            .rev()
            .map(|x| sign * x)
            .chain(xu.iter().rev().copied())
            .collect();
        RegressionSample {
            t,
            z,
            phi,
            truth: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Signal generators
// ---------------------------------------------------------------------------

/// `amplitude * sin(omega * t + phase)` with `omega` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Constant offset plus a sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalSpec {
    pub offset: f64,
    pub terms: Vec<Sinusoid>,
}

impl SignalSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn sine(amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            offset: 0.0,
            terms: vec![Sinusoid {
                amplitude,
                omega,
                phase,
            }],
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.terms.iter().all(|s| s.amplitude == 0.0)
    }

    pub fn generate(&self, t: f64) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|s| s.amplitude * (s.omega * t + s.phase).sin())
                .sum::<f64>()
    }
}

/// Convenience: frequency and phase given in multiples of pi.
pub fn sine_pi(amplitude: f64, omega_pi: f64, phase_pi: f64) -> Sinusoid {
    Sinusoid {
        amplitude,
        omega: omega_pi * PI,
        phase: phase_pi * PI,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate_scalar(x0: f64, h: f64, t_end: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut clock = SimClock::new(0.0, h).unwrap();
        let n = whole_steps(t_end, h).unwrap();
        let mut x = x0;
        for _ in 0..n {
            x = integrate_step(&x, |st, s: &f64| Ok(f(st.t, *s)), &clock).unwrap();
            clock.advance();
        }
        x
    }

    #[test]
    fn rk4_scalar_decay() {
        let x = simulate_scalar(1.0, 1e-3, 1.0, |_, x| -x);
        assert!((x - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_zero_rate_keeps_state() {
        let x = simulate_scalar(3.25, 1e-2, 1.0, |_, _| 0.0);
        assert_eq!(x, 3.25);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1.0f64).exp();
        let e1 = (simulate_scalar(1.0, 0.1, 1.0, |_, x| -x) - exact).abs();
        let e2 = (simulate_scalar(1.0, 0.05, 1.0, |_, x| -x) - exact).abs();
        let ratio = e1 / e2;
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lowpass_step_response() {
        let f = FirstOrderFilter::new(FilterKind::Lowpass, 10.0).unwrap();
        let y = simulate_scalar(0.0, 1e-3, 1.0, |_, x| f.rate(x, 1.0));
        assert!((y - (1.0 - (-10.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn washout_step_response() {
        let f = FirstOrderFilter::new(FilterKind::Washout, 10.0).unwrap();
        let state = simulate_scalar(0.0, 1e-3, 0.3, |_, x| f.rate(x, 1.0));
        assert!((f.output(state, 1.0) - (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn non_finite_rhs_aborts_with_time() {
        let clock = SimClock::new(2.0, 0.5).unwrap();
        let err = integrate_step(&vec![1.0, 2.0], |_, _| Ok(vec![0.0, f64::NAN]), &clock).unwrap_err();
        match err {
            Error::NumericalAbort { t, signal, .. } => {
                assert_eq!(t, 2.0);
                assert!(signal.contains("[1]"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clock_has_no_drift() {
        let mut c = SimClock::new(0.0, 1e-4).unwrap();
        for _ in 0..1_000_000 {
            c.advance();
        }
        assert_eq!(c.t(), 1_000_000.0 * 1e-4);
        assert!(SimClock::new(0.0, 0.0).is_err());
        assert!(SimClock::new(0.0, -1.0).is_err());
    }

    #[test]
    fn delay_line_window_semantics() {
        let h = 0.01;
        let mut line = DelayLine::new(0.0, h, 0.5, 0.0).unwrap();
        assert_eq!(line.capacity(), 50);
        let omega = 3.0;
        for k in 0..200u64 {
            let t = k as f64 * h;
            line.push((omega * t).sin());
            if t < 0.5 - 1e-12 {
                assert_eq!(line.delayed_at_index(k).unwrap(), 0.0);
            } else {
                let want = (omega * ((k - 50) as f64 * h)).sin();
                assert_eq!(line.delayed_at_index(k).unwrap(), want);
            }
        }
        // one step ahead of what was pushed: lag sample exists
        assert!(line.delayed_at_index(200).is_ok());
        // lag sample not simulated yet
        assert!(line.delayed_at_index(250).is_err());
        // evicted
        assert!(line.delayed_at_index(120).is_err());
        assert!(DelayLine::new(0.0, 0.01, 0.505, 0.0).is_err());
    }

    #[test]
    fn delay_line_constant_input() {
        let mut line = DelayLine::new(1.0, 0.1, 1.0, vec![0.0; 2]).unwrap();
        for _ in 0..30 {
            line.push(vec![2.5, -1.0]);
        }
        assert_eq!(line.delayed(3.9).unwrap(), vec![2.5, -1.0]);
        assert_eq!(line.delayed(1.5).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hurwitz_checks() {
        assert!(is_hurwitz(&[10.0]));
        assert!(is_hurwitz(&[3.0, 2.0])); // (s+1)(s+2)
        assert!(is_hurwitz(&[6.0, 11.0, 6.0])); // (s+1)(s+2)(s+3)
        assert!(!is_hurwitz(&[-1.0]));
        assert!(!is_hurwitz(&[0.0, 1.0]));
        assert!(!is_hurwitz(&[1.0, 1.0, 10.0])); // s^3+s^2+s+10 has RHP roots
        assert!(Parameterizer::new(vec![1.0, -2.0], OutputSign::Negative).is_err());
    }

    #[test]
    fn derivative_filter_of_step() {
        let p = Parameterizer::first_order(10.0, OutputSign::Positive).unwrap();
        let h = 1e-3;
        let mut clock = SimClock::new(0.0, h).unwrap();
        let mut state = p.zero_state();
        for _ in 0..200 {
            state = integrate_step(&state, |_, s: &Vec<f64>| Ok(p.rate(s, 1.0, 0.0)), &clock)
                .unwrap();
            clock.advance();
        }
        let sample = p.sample(clock.t(), &state, 1.0);
        assert!((sample.z - (-10.0 * clock.t()).exp()).abs() < 1e-9);
        assert_eq!(sample.phi[1], 0.0);
    }

    #[test]
    fn second_order_parameterizer_regression_holds() {
        // y'' + a1 y' + a0 y = b0 u with y(0) = y'(0) = 0:
        // s^2/L [y] = -a1 s/L [y] - a0 1/L [y] + b0 1/L [u]
        let (a1, a0, b0) = (0.8, 2.0, 1.5);
        let p = Parameterizer::new(vec![3.0, 2.0], OutputSign::Negative).unwrap();
        let theta = [a1, a0, 0.0, b0];
        let h = 1e-3;
        let mut clock = SimClock::new(0.0, h).unwrap();
        // state: [y, y', filter states...]
        let mut state = vec![0.0; 2 + p.state_len()];
        let u = |t: f64| (1.3 * t).sin() + 0.5 * (0.4 * t).cos();
        for _ in 0..20_000 {
            state = integrate_step(
                &state,
                |st, s: &Vec<f64>| {
                    let (y, yd) = (s[0], s[1]);
                    let mut d = vec![yd, -a1 * yd - a0 * y + b0 * u(st.t)];
                    d.extend(p.rate(&s[2..], y, u(st.t)));
                    Ok(d)
                },
                &clock,
            )
            .unwrap();
            clock.advance();
        }
        let sample = p.sample(clock.t(), &state[2..], state[0]);
        let pred: f64 = sample.phi.iter().zip(theta).map(|(a, b)| a * b).sum();
        assert!((sample.z - pred).abs() < 1e-8, "{} vs {}", sample.z, pred);
    }

    #[test]
    fn signal_generation() {
        let u = SignalSpec {
            offset: 0.0,
            terms: vec![sine_pi(10.0, 0.2, 0.0)],
        };
        assert!((u.generate(2.5) - 10.0).abs() < 1e-12);
        let v = SignalSpec {
            offset: 0.7,
            terms: vec![sine_pi(1.0, 24.0, 0.125)],
        };
        assert!((v.generate(0.0) - (0.7 + (PI / 8.0).sin())).abs() < 1e-15);
        assert_eq!(SignalSpec::zero().generate(12.3), 0.0);
    }
}
