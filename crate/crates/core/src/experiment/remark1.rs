//! Windowed cross moment of a constant regressor with a sinusoidal
//! perturbation: zero for a window of whole periods, `O(1/(T omega))`
//! otherwise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::drem::CrossMoment;
use crate::error::Result;
use crate::sim::whole_steps;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCase {
    pub omega: f64,
    pub window: f64,
    pub h: f64,
    /// `max |moment(t)|` over `t >= window`.
    pub max_after_window: f64,
    /// `2 / (window * omega)`, the largest possible magnitude.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Remark1Report {
    /// Window of one period, and one of one and a half periods.
    pub exact: WindowCase,
    pub off: WindowCase,
    /// Fixed window, increasing frequency.
    pub large_omega: Vec<WindowCase>,
}

/// Cross moment of `phi = 1` and `f = sin(omega t)` on `[0, t_end]`.
pub fn window_case(omega: f64, window: f64, h: f64, t_end: f64) -> Result<WindowCase> {
    let mut cm = CrossMoment::new(1, 0.0, h, window)?;
    let steps = whole_steps(t_end, h).unwrap_or((t_end / h).round() as u64);
    let lag = whole_steps(window, h).unwrap_or(0);
    let mut max = 0.0_f64;
    for k in 0..=steps {
        let t = k as f64 * h;
        let m = cm.push(&[1.0], (omega * t).sin())?[0];
        if k >= lag {
            max = max.max(m.abs());
        }
    }
    Ok(WindowCase {
        omega,
        window,
        h,
        max_after_window: max,
        bound: 2.0 / (window * omega),
    })
}

pub fn remark1_demo() -> Result<Remark1Report> {
    let omega = 2.0 * PI;
    let exact = window_case(omega, 2.0 * PI / omega, 1e-3, 5.0)?;
    let off = window_case(omega, 3.0 * PI / omega, 1e-3, 5.0)?;
    let large_omega = [5.0, 21.0, 101.0]
        .iter()
        .map(|k| window_case(k * PI, 1.0, 1e-4, 3.0))
        .collect::<Result<_>>()?;
    Ok(Remark1Report {
        exact,
        off,
        large_omega,
    })
}

impl Remark1Report {
    pub fn to_text(&self) -> String {
        let mut out = String::from("omega,window,h,max_after_window,bound\n");
        for c in std::iter::once(&self.exact)
            .chain(std::iter::once(&self.off))
            .chain(&self.large_omega)
        {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e}",
                c.omega, c.window, c.h, c.max_after_window, c.bound
            );
        }
        out
    }
}
