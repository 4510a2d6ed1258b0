//! Reduced states, phase-optimized target fidelities and the optimal
//! transfer time under qubit decay.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Component, Network, NetworkState, Observation};
use crate::noise::apply_photon_loss;
use crate::ode::Options;
use crate::protocols::{plan_qst, Gate, ProtocolError, ProtocolPlan, QubitLabel, Target};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no qubits selected")]
    EmptySelection,
    #[error("qubit {0} listed twice")]
    DuplicateLabel(QubitLabel),
    #[error("qubit {0} does not exist in this network")]
    UnknownLabel(QubitLabel),
    #[error("expected a {expected}-qubit state, got {got} qubits")]
    WrongDimension { expected: usize, got: usize },
    #[error("qubit {0} is not part of the reduced state")]
    LabelNotPresent(QubitLabel),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("tau grid needs at least three points")]
    GridTooSmall,
    #[error("maximum for T1 = {t1:e} s lies on the grid edge at tau = {tau:e} s")]
    MaximumOnEdge { t1: f64, tau: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    /// First label is the most significant bit of the basis index.
    pub labels: Vec<QubitLabel>,
    pub matrix: DMatrix<Complex64>,
}

impl ReducedDensityMatrix {
    pub fn qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `max |ρ − ρ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn population(&self, index: usize) -> f64 {
        self.matrix[(index, index)].re
    }

    /// Hermitian, unit trace within `trace_tol`, eigenvalues above `−psd_tol`.
    pub fn check(&self, trace_tol: f64, psd_tol: f64) -> Result<(), AnalysisError> {
        if self.dim() != 1 << self.qubits() || self.matrix.ncols() != self.dim() {
            return Err(AnalysisError::InvalidState(format!(
                "{}x{} matrix for {} qubits",
                self.matrix.nrows(),
                self.matrix.ncols(),
                self.qubits()
            )));
        }
        let h = self.hermiticity_defect();
        if h > 1e-12 {
            return Err(AnalysisError::InvalidState(format!("not Hermitian (defect {h:e})")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > trace_tol {
            return Err(AnalysisError::InvalidState(format!("trace {t}")));
        }
        let min = self.eigenvalues()[0];
        if min < -psd_tol {
            return Err(AnalysisError::InvalidState(format!("eigenvalue {min:e}")));
        }
        Ok(())
    }

    fn position(&self, q: QubitLabel) -> Result<usize, AnalysisError> {
        self.labels
            .iter()
            .position(|&l| l == q)
            .ok_or(AnalysisError::LabelNotPresent(q))
    }

    /// Bit mask of qubit `q` in the basis index.
    pub fn mask(&self, q: QubitLabel) -> Result<usize, AnalysisError> {
        let p = self.position(q)?;
        Ok(1 << (self.qubits() - 1 - p))
    }

    /// `U ρ U†` with the single-qubit `u` acting on `q`.
    pub fn apply_single(&self, q: QubitLabel, u: [[Complex64; 2]; 2]) -> Result<Self, AnalysisError> {
        let mask = self.mask(q)?;
        let d = self.dim();
        let full = DMatrix::from_fn(d, d, |i, j| {
            if i & !mask != j & !mask {
                return ZERO;
            }
            u[usize::from(i & mask != 0)][usize::from(j & mask != 0)]
        });
        Ok(Self {
            labels: self.labels.clone(),
            matrix: &full * &self.matrix * full.adjoint(),
        })
    }

    pub fn apply_gate(&self, gate: &Gate) -> Result<Self, AnalysisError> {
        self.apply_single(gate.qubit(), gate.matrix())
    }

    /// Arithmetic mean; each term enters as its offset from the first so
    /// identical inputs average to themselves exactly.
    pub fn average(items: &[&Self]) -> Result<Self, AnalysisError> {
        let first = items.first().ok_or(AnalysisError::EmptySelection)?;
        let n = items.len() as f64;
        let mut acc = DMatrix::<Complex64>::zeros(first.dim(), first.dim());
        for r in items.iter().skip(1) {
            if r.labels != first.labels {
                return Err(AnalysisError::InvalidState("label sets differ".into()));
            }
            acc += &r.matrix - &first.matrix;
        }
        Ok(Self {
            labels: first.labels.clone(),
            matrix: &first.matrix + acc / Complex64::new(n, 0.0),
        })
    }
}

/// Partial trace over resonators, waveguide modes and unselected qubits.
/// Amplitude left in resonators or the line counts towards the vacuum of the
/// selected node qubits.
pub fn reduce(state: &NetworkState, labels: &[QubitLabel]) -> Result<ReducedDensityMatrix, AnalysisError> {
    if labels.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(AnalysisError::DuplicateLabel(*l));
        }
        let ok = match *l {
            QubitLabel::Node(n) => n < state.layout.nodes(),
            QubitLabel::Switch(m) => m < state.layout.resonators(),
        };
        if !ok {
            return Err(AnalysisError::UnknownLabel(*l));
        }
    }
    let n = labels.len();
    let dim = 1usize << n;
    let bit = |p: usize| 1usize << (n - 1 - p);
    let node_bit: BTreeMap<usize, usize> = labels
        .iter()
        .enumerate()
        .filter_map(|(p, l)| match *l {
            QubitLabel::Node(i) => Some((i, bit(p))),
            _ => None,
        })
        .collect();
    let switch_sel: Vec<(u32, usize)> = labels
        .iter()
        .enumerate()
        .filter_map(|(p, l)| match *l {
            QubitLabel::Switch(m) => Some((1u32 << m, bit(p))),
            _ => None,
        })
        .collect();
    let selected_switch_mask: u32 = switch_sel.iter().map(|s| s.0).fold(0, |a, b| a | b);

    // Environment key: unselected switch bits plus the component holding the
    // excitation outside the selected qubits (None for vacuum).
    let mut env: BTreeMap<(u32, Option<usize>), Vec<Complex64>> = BTreeMap::new();
    for b in &state.branches {
        let sw_index: usize = switch_sel
            .iter()
            .filter(|(m, _)| b.bits & m != 0)
            .map(|(_, p)| p)
            .sum();
        let rest = b.bits & !selected_switch_mask;
        for (idx, &a) in b.amps.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let (sys_bit, env_comp) = match state.layout.component(idx) {
                Component::Vacuum => (0, None),
                Component::Qubit(i) => match node_bit.get(&i) {
                    Some(&p) => (p, None),
                    None => (0, Some(idx)),
                },
                _ => (0, Some(idx)),
            };
            let phi = env.entry((rest, env_comp)).or_insert_with(|| vec![ZERO; dim]);
            phi[sw_index | sys_bit] += b.weight * a;
        }
    }
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for phi in env.values() {
        for i in 0..dim {
            if phi[i] == ZERO {
                continue;
            }
            for j in 0..dim {
                m[(i, j)] += phi[i] * phi[j].conj();
            }
        }
    }
    Ok(ReducedDensityMatrix {
        labels: labels.to_vec(),
        matrix: m,
    })
}

/// `max_θ ⟨ψ_θ|ρ|ψ_θ⟩` for `ψ_θ = (|a⟩ + e^{iθ}|b⟩)/√2`.
pub fn fidelity_two_state(rho: &ReducedDensityMatrix, a: usize, b: usize) -> f64 {
    let m = &rho.matrix;
    0.5 * (m[(a, a)].re + m[(b, b)].re) + m[(a, b)].norm()
}

/// Overlap with `(|01⟩ + e^{iθ}|10⟩)/√2`, maximized over θ.
pub fn fidelity_bell(rho: &ReducedDensityMatrix) -> Result<f64, AnalysisError> {
    expect_qubits(rho, 2)?;
    Ok(clamp_unit(fidelity_two_state(rho, 0b01, 0b10)))
}

/// Overlap with `(|000⟩ + e^{iθ}|111⟩)/√2`, maximized over θ.
pub fn fidelity_ghz(rho: &ReducedDensityMatrix) -> Result<f64, AnalysisError> {
    expect_qubits(rho, 3)?;
    Ok(clamp_unit(fidelity_two_state(rho, 0, 7)))
}

/// Overlap with `Σ_k e^{iθ_k}|0..1_k..0⟩/√n` (θ of the first qubit fixed at
/// zero), maximized over the phases.
pub fn fidelity_w(rho: &ReducedDensityMatrix) -> Result<f64, AnalysisError> {
    let n = rho.qubits();
    if n < 2 {
        return Err(AnalysisError::WrongDimension { expected: 3, got: n });
    }
    let idx: Vec<usize> = (0..n).map(|k| 1 << (n - 1 - k)).collect();
    let sub = DMatrix::from_fn(n, n, |i, j| rho.matrix[(idx[i], idx[j])]);
    let best = if n == 3 {
        maximize_w3(&sub)
    } else {
        maximize_w_multistart(&sub)
    };
    Ok(clamp_unit(best))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn expect_qubits(rho: &ReducedDensityMatrix, n: usize) -> Result<(), AnalysisError> {
    if rho.qubits() != n || rho.dim() != 1 << n {
        return Err(AnalysisError::WrongDimension {
            expected: n,
            got: rho.qubits(),
        });
    }
    Ok(())
}

/// `(1/n) Σ_ij ρ_ij e^{i(θ_j − θ_i)}` on the single-excitation block.
fn w_value(sub: &DMatrix<Complex64>, theta: &[f64]) -> f64 {
    let n = theta.len();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += sub[(i, j)] * Complex64::from_polar(1.0, theta[j] - theta[i]);
        }
    }
    acc.re / n as f64
}

/// Cyclic coordinate ascent; each phase update is the closed-form optimum
/// `θ_j = arg Σ_{i≠j} ρ_ij* e^{iθ_i}` with the others held fixed.
fn coordinate_ascent(sub: &DMatrix<Complex64>, theta: &mut [f64]) -> f64 {
    let n = theta.len();
    let mut value = w_value(sub, theta);
    for _ in 0..10_000 {
        let mut moved: f64 = 0.0;
        for j in 1..n {
            let mut s = ZERO;
            for i in 0..n {
                if i != j {
                    s += sub[(i, j)] * Complex64::from_polar(1.0, -theta[i]);
                }
            }
            if s.norm() == 0.0 {
                continue;
            }
            let new = -s.arg();
            let d = (new - theta[j] + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            moved = moved.max(d.abs());
            theta[j] = new;
        }
        let next = w_value(sub, theta);
        let gain = next - value;
        value = next;
        if moved < 1e-9 && gain.abs() < 1e-15 {
            break;
        }
    }
    value
}

fn maximize_w3(sub: &DMatrix<Complex64>) -> f64 {
    const GRID: usize = 64;
    let step = 2.0 * std::f64::consts::PI / GRID as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in 0..GRID {
        for b in 0..GRID {
            let th = [0.0, a as f64 * step, b as f64 * step];
            let v = w_value(sub, &th);
            if v > best.0 {
                best = (v, th[1], th[2]);
            }
        }
    }
    let mut theta = [0.0, best.1, best.2];
    coordinate_ascent(sub, &mut theta).max(best.0)
}

fn maximize_w_multistart(sub: &DMatrix<Complex64>) -> f64 {
    let n = sub.nrows();
    let mut best = f64::NEG_INFINITY;
    for start in 0..16 {
        let mut theta: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    // Golden-ratio spread of starting phases.
                    (start as f64 * 0.618_033_988_749_895 * (k as f64 + 1.0)).fract()
                        * 2.0
                        * std::f64::consts::PI
                }
            })
            .collect();
        best = best.max(coordinate_ascent(sub, &mut theta));
    }
    best
}

/// Transfer fidelity corrected for qubit decay and photon loss:
/// `(1 − p_loss)·F·exp(−(p₁+p₂)/T₁)`, with `p_j = ∫|q_j|² dt`.
pub fn qst_decohered_fidelity(f_coh: f64, p1: f64, p2: f64, t1: f64, p_loss: f64) -> f64 {
    let decay = if t1.is_infinite() { 1.0 } else { (-(p1 + p2) / t1).exp() };
    (1.0 - p_loss) * f_coh * decay
}

/// Target fidelity of a reduced state for the plan's target. Photon loss is
/// applied first, then the terminal gates.
pub fn protocol_fidelity(plan: &ProtocolPlan, rho: &ReducedDensityMatrix, p_loss: f64) -> Result<f64, AnalysisError> {
    let mut r = apply_photon_loss(rho, p_loss, &plan.loss_qubits)?;
    for g in &plan.terminal_gates {
        r = r.apply_gate(g)?;
    }
    match plan.target {
        Target::Transfer => {
            let m = r.mask(QubitLabel::Node(1))?;
            Ok(clamp_unit(
                (0..r.dim()).filter(|i| i & m != 0).map(|i| r.population(i)).sum(),
            ))
        }
        Target::Bell => fidelity_bell(&r),
        Target::Ghz => fidelity_ghz(&r),
        Target::W { .. } => fidelity_w(&r),
        Target::Route { .. } => Err(AnalysisError::InvalidState(
            "routing runs are scored by their population split".into(),
        )),
    }
}

/// Coherent transfer sweep and the decay-limited optimum per `T₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub taus: Vec<f64>,
    pub coherent: Vec<f64>,
    /// `p₁ + p₂` per duration (s).
    pub exposure: Vec<f64>,
    pub t1: Vec<f64>,
    pub p_loss: f64,
    /// `decohered[i][k]` for `t1[i]` and `taus[k]`.
    pub decohered: Vec<Vec<f64>>,
    pub tau_opt: Vec<f64>,
    pub fidelity_opt: Vec<f64>,
}

/// One coherent transfer run: `(F, p₁ + p₂)`.
pub fn qst_point(net: &Network, tau: f64, opts: &Options) -> Result<(f64, f64), AnalysisError> {
    let plan = plan_qst(net, tau)?;
    let mut obs = Observation::default().with_exposure();
    let (state, _) = plan.simulate(net, opts, Some(&mut obs))?;
    let f = state.population(Component::Qubit(1));
    let e = &obs.exposure[0];
    Ok((f, e[0] + e[1]))
}

pub fn sweep_optimal_tau(
    net: &Network,
    t1_list: &[f64],
    tau_grid: &[f64],
    p_loss: f64,
    opts: &Options,
) -> Result<SweepResult, AnalysisError> {
    if tau_grid.len() < 3 {
        return Err(AnalysisError::GridTooSmall);
    }
    let points: Vec<(f64, f64)> = tau_grid
        .par_iter()
        .map(|&tau| qst_point(net, tau, opts))
        .collect::<Result<_, _>>()?;
    let coherent: Vec<f64> = points.iter().map(|p| p.0).collect();
    let exposure: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut decohered = Vec::with_capacity(t1_list.len());
    let mut tau_opt = Vec::with_capacity(t1_list.len());
    let mut fidelity_opt = Vec::with_capacity(t1_list.len());
    for &t1 in t1_list {
        let curve: Vec<f64> = points
            .iter()
            .map(|&(f, p)| qst_decohered_fidelity(f, p, 0.0, t1, p_loss))
            .collect();
        let (k, _) = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        if k == 0 || k == curve.len() - 1 {
            return Err(AnalysisError::MaximumOnEdge {
                t1,
                tau: tau_grid[k],
            });
        }
        let (x, y) = parabolic_peak(
            [tau_grid[k - 1], tau_grid[k], tau_grid[k + 1]],
            [curve[k - 1], curve[k], curve[k + 1]],
        );
        tau_opt.push(x);
        fidelity_opt.push(y.max(curve[k]));
        decohered.push(curve);
    }
    Ok(SweepResult {
        taus: tau_grid.to_vec(),
        coherent,
        exposure,
        t1: t1_list.to_vec(),
        p_loss,
        decohered,
        tau_opt,
        fidelity_opt,
    })
}

/// Vertex of the parabola through three points; falls back to the middle
/// point when they are collinear.
pub fn parabolic_peak(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if !(a < 0.0) {
        return (x[1], y[1]);
    }
    let b = d1 - a * (x[0] + x[1]);
    let xv = (-b / (2.0 * a)).clamp(x[0], x[2]);
    let yv = y[1] + d1 * (xv - x[1]) + a * (xv - x[0]) * (xv - x[1]);
    (xv, yv)
}
