//! Markovian emission from a single node: a qubit coupled through a
//! controllable `g(t)` to a transfer resonator that leaks into the line at
//! rate `κ`, with a dispersive shift `χ` when the switch qubit is excited.

use num_complex::Complex64;
use thiserror::Error;

use crate::ode::{self, DenseStep, OdeError, Options, System};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitterError {
    #[error("kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),
    #[error("chi must be non-negative and finite, got {0}")]
    InvalidChi(f64),
    #[error("kappa_prime must lie in (0, kappa), got {kappa_prime} with kappa = {kappa}")]
    InvalidKappaPrime { kappa: f64, kappa_prime: f64 },
    #[error("time interval [{t0:e}, {t1:e}] is empty")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("output time {0:e} lies outside the integration interval")]
    GridOutOfRange(f64),
    #[error("output grid is not monotone")]
    GridNotMonotone,
    #[error("fields must share a grid of at least two points")]
    GridMismatch,
    #[error("field has zero norm")]
    ZeroNorm,
    #[error(transparent)]
    Integrator(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterParams {
    /// Resonator decay rate (rad/s).
    pub kappa: f64,
    /// Dispersive shift (rad/s).
    pub chi: f64,
    pub switch_excited: bool,
}

impl EmitterParams {
    pub fn new(kappa: f64, chi: f64, switch_excited: bool) -> Result<Self, EmitterError> {
        let p = Self {
            kappa,
            chi,
            switch_excited,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EmitterError> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(EmitterError::InvalidKappa(self.kappa));
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(EmitterError::InvalidChi(self.chi));
        }
        Ok(())
    }

    /// Shift seen by the resonator in this switch configuration.
    pub fn effective_chi(&self) -> f64 {
        if self.switch_excited {
            self.chi
        } else {
            0.0
        }
    }
}

/// Sampled solution. `emitted[i]` is `∫|γ|²` from the start to `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterTrace {
    pub times: Vec<f64>,
    pub q: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub gamma: Vec<Complex64>,
    pub emitted: Vec<f64>,
}

impl EmitterTrace {
    /// `|q|² + |c|² + ∫|γ|²` at every sample.
    pub fn total_norm(&self) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.c)
            .zip(&self.emitted)
            .map(|((q, c), e)| q.norm_sqr() + c.norm_sqr() + e)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionCoefficients {
    pub alpha: Complex64,
    pub beta: Complex64,
}

pub fn sech_control(t: f64, kappa: f64) -> f64 {
    0.5 * kappa / (0.5 * kappa * t).cosh()
}

/// Control that emits the narrower photon `√(κ'/4)·sech(κ't/2)` from a
/// resonator of linewidth `κ`. It tends to `√(κ'(κ−κ'))/2` at late times.
pub fn reduced_bandwidth_control(t: f64, kappa: f64, kappa_prime: f64) -> Result<f64, EmitterError> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(EmitterError::InvalidKappa(kappa));
    }
    if !(kappa_prime > 0.0 && kappa_prime < kappa) {
        return Err(EmitterError::InvalidKappaPrime { kappa, kappa_prime });
    }
    let x = kappa_prime * t;
    let r = kappa / kappa_prime;
    let num = kappa - kappa_prime * (0.5 * x).tanh();
    // √((1+e^{-x})r − 1), rewritten for x < 0 so e^{-x} never overflows.
    let den = if x >= 0.0 {
        ((1.0 + (-x).exp()) * r - 1.0).sqrt()
    } else {
        let ex = x.exp();
        (-0.5 * x).exp() * ((ex + 1.0) * r - ex).sqrt()
    };
    Ok(num / (2.0 * den))
}

pub fn analytic_q(t: f64, chi: f64, kappa: f64) -> Complex64 {
    let num = Complex64::new(2.0 * chi, kappa * ((0.5 * kappa * t).tanh() - 1.0));
    num / (2.0 * Complex64::new(chi, -kappa))
}

pub fn analytic_c(t: f64, chi: f64, kappa: f64) -> Complex64 {
    let amp = 0.5 * kappa / (0.5 * kappa * t).cosh();
    Complex64::new(amp, 0.0) / Complex64::new(-chi, kappa)
}

pub fn analytic_gamma(t: f64, chi: f64, kappa: f64) -> Complex64 {
    -I * kappa.sqrt() * analytic_c(t, chi, kappa)
}

pub fn transmission_probability(chi: f64, kappa: f64) -> f64 {
    let k2 = kappa * kappa;
    k2 / (chi * chi + k2)
}

pub fn emission_coefficients(chi: f64, kappa: f64) -> EmissionCoefficients {
    let den = Complex64::new(chi, -kappa);
    EmissionCoefficients {
        alpha: Complex64::new(chi, 0.0) / den,
        beta: Complex64::new(0.0, -kappa) / den,
    }
}

/// Normalized overlap `∫γ₁*γ₂ / (‖γ₁‖‖γ₂‖)` by the trapezoid rule on a
/// shared grid.
pub fn photon_overlap(
    times: &[f64],
    gamma1: &[Complex64],
    gamma2: &[Complex64],
) -> Result<Complex64, EmitterError> {
    let n = times.len();
    if n < 2 || gamma1.len() != n || gamma2.len() != n {
        return Err(EmitterError::GridMismatch);
    }
    let mut cross = Complex64::new(0.0, 0.0);
    let mut n1 = 0.0;
    let mut n2 = 0.0;
    for i in 1..n {
        let dt = 0.5 * (times[i] - times[i - 1]);
        cross += (gamma1[i - 1].conj() * gamma2[i - 1] + gamma1[i].conj() * gamma2[i]) * dt;
        n1 += (gamma1[i - 1].norm_sqr() + gamma1[i].norm_sqr()) * dt;
        n2 += (gamma2[i - 1].norm_sqr() + gamma2[i].norm_sqr()) * dt;
    }
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(EmitterError::ZeroNorm);
    }
    Ok(cross / (n1 * n2).sqrt())
}

struct EmitterSystem<'a, F: Fn(f64) -> f64> {
    kappa: f64,
    chi: f64,
    control: &'a F,
}

impl<F: Fn(f64) -> f64> System for EmitterSystem<'_, F> {
    fn dim(&self) -> usize {
        3
    }

    // y = (q, c, ∫κ|c|²); the last slot is real-valued.
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let g = (self.control)(t);
        dy[0] = -I * g * y[1];
        dy[1] = -I * g * y[0] - I * self.chi * y[1] - 0.5 * self.kappa * y[1];
        dy[2] = Complex64::new(self.kappa * y[1].norm_sqr(), 0.0);
    }
}

/// Integrates from `q = 1, c = 0` and samples at `grid`.
pub fn integrate_emitter<F: Fn(f64) -> f64>(
    params: &EmitterParams,
    control: F,
    t0: f64,
    t1: f64,
    grid: &[f64],
    opts: &Options,
) -> Result<EmitterTrace, EmitterError> {
    integrate_emitter_from(
        params,
        control,
        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        t0,
        t1,
        grid,
        opts,
    )
}

pub fn integrate_emitter_from<F: Fn(f64) -> f64>(
    params: &EmitterParams,
    control: F,
    initial: (Complex64, Complex64),
    t0: f64,
    t1: f64,
    grid: &[f64],
    opts: &Options,
) -> Result<EmitterTrace, EmitterError> {
    params.validate()?;
    if !(t1 > t0) {
        return Err(EmitterError::EmptyInterval { t0, t1 });
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EmitterError::GridNotMonotone);
    }
    if let Some(&t) = grid.iter().find(|&&t| t < t0 || t > t1) {
        return Err(EmitterError::GridOutOfRange(t));
    }
    let sys = EmitterSystem {
        kappa: params.kappa,
        chi: params.effective_chi(),
        control: &control,
    };
    let mut y = [initial.0, initial.1, Complex64::new(0.0, 0.0)];
    let mut samples: Vec<[Complex64; 3]> = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        samples.push(y);
        next += 1;
    }
    let mut obs = |d: &DenseStep| {
        while next < grid.len() && grid[next] <= d.end() {
            let t = grid[next];
            samples.push([d.component(t, 0), d.component(t, 1), d.component(t, 2)]);
            next += 1;
        }
    };
    ode::integrate(&sys, t0, t1, &mut y, opts, Some(&mut obs))?;
    // The final sample is pinned to the exact endpoint rather than the
    // interpolant.
    if let Some(last) = samples.last_mut() {
        if grid.last() == Some(&t1) {
            *last = y;
        }
    }
    let sqrt_k = params.kappa.sqrt();
    Ok(EmitterTrace {
        times: grid.to_vec(),
        q: samples.iter().map(|s| s[0]).collect(),
        c: samples.iter().map(|s| s[1]).collect(),
        gamma: samples.iter().map(|s| -I * sqrt_k * s[1]).collect(),
        emitted: samples.iter().map(|s| s[2].re).collect(),
    })
}

/// Uniform grid of `n` points covering `[t0, t1]` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Outcome of one analytic-vs-numeric comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub chi_over_kappa: f64,
    pub deviation: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.deviation < self.tolerance
    }
}

/// Integrates the sech-driven emitter over `[−20/κ, 20/κ]` from the analytic
/// state at the start and compares `q`, `c` and the emitted shape
/// `|γ|² = p_t |γ₀|²` with their closed forms on `points` samples. Shape
/// deviations are measured in units of `κ`.
pub fn oracle_battery(
    kappa: f64,
    ratios: &[f64],
    points: usize,
    tolerance: f64,
    opts: &Options,
) -> Result<Vec<OracleCheck>, EmitterError> {
    let (t0, t1) = (-20.0 / kappa, 20.0 / kappa);
    let grid = uniform_grid(t0, t1, points);
    let mut out = Vec::with_capacity(3 * ratios.len());
    for &x in ratios {
        let chi = x * kappa;
        let params = EmitterParams::new(kappa, chi, true)?;
        let init = (analytic_q(t0, chi, kappa), analytic_c(t0, chi, kappa));
        let tr = integrate_emitter_from(&params, |t| sech_control(t, kappa), init, t0, t1, &grid, opts)?;
        let pt = transmission_probability(chi, kappa);
        let (mut dq, mut dc, mut ds) = (0.0f64, 0.0f64, 0.0f64);
        for (i, &t) in tr.times.iter().enumerate() {
            dq = dq.max((tr.q[i] - analytic_q(t, chi, kappa)).norm());
            dc = dc.max((tr.c[i] - analytic_c(t, chi, kappa)).norm());
            let reference = pt * 0.25 * kappa / (0.5 * kappa * t).cosh().powi(2);
            ds = ds.max((tr.gamma[i].norm_sqr() - reference).abs() / kappa);
        }
        for (name, deviation) in [("qubit_amplitude", dq), ("resonator_amplitude", dc), ("photon_shape", ds)] {
            out.push(OracleCheck {
                name,
                chi_over_kappa: x,
                deviation,
                tolerance,
            });
        }
    }
    Ok(out)
}
