//! Qubit relaxation by Monte Carlo wavefunction trajectories, photon loss on
//! averaged reduced states, and bootstrap estimates over an ensemble.
//!
//! Each trajectory draws from its own ChaCha8 stream: the generator is
//! seeded with the master seed and the stream number is the trajectory
//! index. Bootstrap resampling uses stream `u64::MAX`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{reduce, AnalysisError, ReducedDensityMatrix};
use crate::network::{evolve, evolve_branch, Network, NetworkError, NetworkState, Program};
use crate::ode::Options;
use crate::protocols::{ProtocolError, ProtocolPlan, QubitLabel};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Stream reserved for bootstrap resampling.
pub const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidSpec(String),
    #[error("sample size {sample} exceeds ensemble size {ensemble}")]
    SampleTooLarge { sample: usize, ensemble: usize },
    #[error("bootstrap needs at least one resample and a non-empty sample")]
    EmptyBootstrap,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relaxation time of node qubits (s); infinite disables it.
    pub t1: f64,
    /// Relaxation time of switch qubits (s); defaults to `t1`.
    pub switch_t1: Option<f64>,
    /// Photon loss probability per link traversal.
    pub p_loss: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::coherent()
    }
}

impl NoiseSpec {
    pub fn coherent() -> Self {
        Self {
            t1: f64::INFINITY,
            switch_t1: None,
            p_loss: 0.0,
        }
    }

    pub fn uniform(t1: f64, p_loss: f64) -> Self {
        Self {
            t1,
            switch_t1: None,
            p_loss,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let t_ok = |t: f64| t > 0.0 && !t.is_nan();
        if !t_ok(self.t1) {
            return Err(NoiseError::InvalidSpec(format!("t1 must be positive, got {}", self.t1)));
        }
        if let Some(t) = self.switch_t1 {
            if !t_ok(t) {
                return Err(NoiseError::InvalidSpec(format!("switch t1 must be positive, got {t}")));
            }
        }
        if !(0.0..1.0).contains(&self.p_loss) {
            return Err(NoiseError::InvalidSpec(format!(
                "p_loss must lie in [0, 1), got {}",
                self.p_loss
            )));
        }
        Ok(())
    }

    pub fn node_rate(&self) -> f64 {
        1.0 / self.t1
    }

    pub fn switch_rate(&self) -> f64 {
        1.0 / self.switch_t1.unwrap_or(self.t1)
    }

    pub fn is_coherent(&self) -> bool {
        self.node_rate() == 0.0 && self.switch_rate() == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum JumpChannel {
    Node(usize),
    Switch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub channel: JumpChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: u64,
    /// Normalized final state.
    pub state: NetworkState,
    pub jumps: Vec<Jump>,
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw in `(0, 1]`.
fn unit_open_left(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Evolves `state` from `t0` to `t1` with relaxation on every qubit.
///
/// Between jumps the branch vectors follow the non-Hermitian drift and
/// branch weights decay analytically with the excited switches. A jump
/// fires when the total norm falls to a uniform threshold; its time is
/// located by regula falsi from the last checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory_program(
    net: &Network,
    program: &Program,
    state: NetworkState,
    t0: f64,
    t1: f64,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
    opts: &Options,
) -> Result<(NetworkState, Vec<Jump>), NoiseError> {
    noise.validate()?;
    let mut state = state;
    if noise.is_coherent() {
        evolve(net, program, &mut state, t0, t1, opts, None)?;
        return Ok((state, Vec::new()));
    }
    net.check_program(program)?;
    state.check()?;
    let gamma_node = noise.node_rate();
    let gamma_switch = noise.switch_rate();
    let program = program
        .clone()
        .with_node_decay(vec![gamma_node; net.nodes()]);

    // Segment edges: pulse-window edges plus a grid of roughly 1/κ.
    let mut edges = program.breakpoints(t0, t1);
    let dt = 1.0 / net.kappa();
    let n_grid = ((t1 - t0) / dt).ceil().max(1.0) as usize;
    for k in 1..n_grid {
        edges.push(t0 + (t1 - t0) * k as f64 / n_grid as f64);
    }
    edges.push(t1);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut jumps = Vec::new();
    let mut threshold = unit_open_left(rng);
    let mut t = t0;
    let mut edge = 0;
    while edge < edges.len() {
        let b = edges[edge];
        let trial = advance(net, &program, &state, t, b, gamma_switch, opts)?;
        if trial.norm_sqr() > threshold {
            state = trial;
            t = b;
            edge += 1;
            continue;
        }
        let (t_jump, at_jump) = locate_jump(net, &program, &state, t, b, gamma_switch, threshold, trial, opts)?;
        let channel = choose_channel(&at_jump, gamma_node, gamma_switch, unit_open_left(rng));
        state = apply_jump(at_jump, channel);
        state.normalize();
        jumps.push(Jump {
            time: t_jump,
            channel,
        });
        threshold = unit_open_left(rng);
        t = t_jump;
        if t >= b {
            edge += 1;
        }
    }
    state.normalize();
    Ok((state, jumps))
}

fn advance(
    net: &Network,
    program: &Program,
    state: &NetworkState,
    a: f64,
    b: f64,
    gamma_switch: f64,
    opts: &Options,
) -> Result<NetworkState, NoiseError> {
    let mut out = state.clone();
    if b <= a {
        return Ok(out);
    }
    for br in &mut out.branches {
        evolve_branch(net, program, &out.layout, br.bits, &mut br.amps, a, b, opts, None)?;
        let excited = br.bits.count_ones() as f64;
        if gamma_switch > 0.0 && excited > 0.0 {
            br.weight *= (-0.5 * excited * gamma_switch * (b - a)).exp();
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn locate_jump(
    net: &Network,
    program: &Program,
    start: &NetworkState,
    a: f64,
    b: f64,
    gamma_switch: f64,
    threshold: f64,
    at_b: NetworkState,
    opts: &Options,
) -> Result<(f64, NetworkState), NoiseError> {
    let mut lo = (a, start.norm_sqr() - threshold);
    let mut hi = (b, at_b.norm_sqr() - threshold, at_b);
    if lo.1 <= 0.0 {
        return Ok((a, start.clone()));
    }
    let mut side = 0i8;
    let tol = 1e-12 * (b - a).abs().max(f64::MIN_POSITIVE) + 1e-18;
    for _ in 0..200 {
        if hi.0 - lo.0 <= tol || hi.1 == 0.0 {
            break;
        }
        let mut t = (lo.0 * hi.1 - hi.0 * lo.1) / (hi.1 - lo.1);
        if !(t > lo.0 && t < hi.0) {
            t = 0.5 * (lo.0 + hi.0);
        }
        let s = advance(net, program, start, a, t, gamma_switch, opts)?;
        let f = s.norm_sqr() - threshold;
        if f > 0.0 {
            lo = (t, f);
            if side == -1 {
                hi.1 *= 0.5;
            }
            side = -1;
        } else {
            hi = (t, f, s);
            if side == 1 {
                lo.1 *= 0.5;
            }
            side = 1;
        }
    }
    Ok((hi.0, hi.2))
}

fn choose_channel(state: &NetworkState, gamma_node: f64, gamma_switch: f64, u: f64) -> JumpChannel {
    let lay = &state.layout;
    let mut rates: Vec<(JumpChannel, f64)> = Vec::new();
    for i in 0..lay.nodes() {
        let idx = lay.qubit(i);
        let p: f64 = state
            .branches
            .iter()
            .map(|b| b.weight.norm_sqr() * b.amps[idx].norm_sqr())
            .sum();
        rates.push((JumpChannel::Node(i), gamma_node * p));
    }
    for m in 0..lay.resonators() {
        let p: f64 = state
            .branches
            .iter()
            .filter(|b| b.bits >> m & 1 == 1)
            .map(|b| b.weighted_norm_sqr())
            .sum();
        rates.push((JumpChannel::Switch(m), gamma_switch * p));
    }
    let total: f64 = rates.iter().map(|r| r.1).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = rates[0].0;
    for (c, r) in rates {
        if r <= 0.0 {
            continue;
        }
        acc += r;
        last = c;
        if target <= acc {
            return c;
        }
    }
    last
}

fn apply_jump(mut state: NetworkState, channel: JumpChannel) -> NetworkState {
    match channel {
        JumpChannel::Node(i) => {
            let idx = state.layout.qubit(i);
            for b in &mut state.branches {
                let q = b.amps[idx];
                b.amps.iter_mut().for_each(|a| *a = ZERO);
                b.amps[0] = q;
            }
        }
        JumpChannel::Switch(m) => {
            let mask = 1u32 << m;
            state.branches.retain(|b| b.bits & mask != 0);
            for b in &mut state.branches {
                b.bits &= !mask;
            }
        }
    }
    state
}

/// One trajectory of a full protocol plan.
pub fn run_trajectory(
    net: &Network,
    plan: &ProtocolPlan,
    noise: &NoiseSpec,
    master_seed: u64,
    index: u64,
    opts: &Options,
) -> Result<Trajectory, NoiseError> {
    plan.validate(net)?;
    let mut rng = trajectory_rng(master_seed, index);
    let (state, jumps) = run_trajectory_program(
        net,
        &plan.program(),
        plan.initial_state(net)?,
        plan.start(),
        plan.end(),
        noise,
        &mut rng,
        opts,
    )?;
    Ok(Trajectory {
        index,
        state,
        jumps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub master_seed: u64,
    pub trajectories: Vec<Trajectory>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn jump_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.jumps.len()).sum()
    }

    /// Reduced state of every trajectory, in trajectory order.
    pub fn reduced(&self, labels: &[QubitLabel]) -> Result<Vec<ReducedDensityMatrix>, NoiseError> {
        self.trajectories
            .par_iter()
            .map(|t| reduce(&t.state, labels).map_err(NoiseError::from))
            .collect()
    }
}

/// Runs `n` trajectories in parallel; results are ordered by index and do
/// not depend on the thread count.
pub fn run_ensemble(
    net: &Network,
    plan: &ProtocolPlan,
    noise: &NoiseSpec,
    n: usize,
    master_seed: u64,
    opts: &Options,
) -> Result<Ensemble, NoiseError> {
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|i| run_trajectory(net, plan, noise, master_seed, i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble {
        master_seed,
        trajectories,
    })
}

/// Amplitude damping with probability `p_loss`, once for each listed qubit.
/// Qubits absent from the state are skipped.
pub fn apply_photon_loss(
    rho: &ReducedDensityMatrix,
    p_loss: f64,
    affected: &[QubitLabel],
) -> Result<ReducedDensityMatrix, AnalysisError> {
    if !(0.0..=1.0).contains(&p_loss) {
        return Err(AnalysisError::InvalidState(format!("p_loss {p_loss} outside [0, 1]")));
    }
    let mut out = rho.clone();
    if p_loss == 0.0 {
        return Ok(out);
    }
    let keep = (1.0 - p_loss).sqrt();
    let lost = p_loss.sqrt();
    for q in affected {
        let Ok(mask) = out.mask(*q) else { continue };
        let d = out.dim();
        let m = &out.matrix;
        let next = DMatrix::from_fn(d, d, |i, j| {
            let ei = i & mask != 0;
            let ej = j & mask != 0;
            // K0 = diag(1, √(1−p)), K1 = √p |0⟩⟨1|.
            let mut v = m[(i, j)]
                * match (ei, ej) {
                    (false, false) => 1.0,
                    (true, true) => 1.0 - p_loss,
                    _ => keep,
                };
            if !ei && !ej {
                v += m[(i | mask, j | mask)] * (lost * lost);
            }
            v
        });
        out.matrix = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub sample_size: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    pub stddev: f64,
    pub values: Vec<f64>,
}

/// Averages `sample_size` reduced states drawn without replacement, scores
/// the average with `score`, and repeats `resamples` times.
pub fn bootstrap_fidelity<F>(
    rhos: &[ReducedDensityMatrix],
    score: F,
    spec: &BootstrapSpec,
) -> Result<BootstrapResult, NoiseError>
where
    F: Fn(&ReducedDensityMatrix) -> Result<f64, AnalysisError> + Sync,
{
    if spec.resamples == 0 || spec.sample_size == 0 {
        return Err(NoiseError::EmptyBootstrap);
    }
    if spec.sample_size > rhos.len() {
        return Err(NoiseError::SampleTooLarge {
            sample: spec.sample_size,
            ensemble: rhos.len(),
        });
    }
    let mut rng = trajectory_rng(spec.master_seed, BOOTSTRAP_STREAM);
    let draws: Vec<Vec<usize>> = (0..spec.resamples)
        .map(|_| {
            let mut idx = sample(&mut rng, rhos.len(), spec.sample_size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let values = draws
        .par_iter()
        .map(|idx| {
            let picked: Vec<&ReducedDensityMatrix> = idx.iter().map(|&i| &rhos[i]).collect();
            let avg = ReducedDensityMatrix::average(&picked)?;
            score(&avg)
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let (mean, stddev) = mean_stddev(&values);
    Ok(BootstrapResult {
        mean,
        stddev,
        values,
    })
}

/// Mean and population standard deviation, accumulated as offsets from the
/// first value so a constant sequence yields exactly that value and zero.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let Some(&k) = values.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = values.len() as f64;
    let (s, s2) = values
        .iter()
        .fold((0.0, 0.0), |(s, s2), &x| (s + (x - k), s2 + (x - k) * (x - k)));
    let var = ((s2 - s * s / n) / n).max(0.0);
    (k + s / n, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_has_zero_spread() {
        let v = vec![0.123_456_789_012_345_6; 100];
        let (m, s) = mean_stddev(&v);
        assert_eq!(m, v[0]);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = trajectory_rng(7, 0).random();
        let b: u64 = trajectory_rng(7, 1).random();
        assert_ne!(a, b);
    }
}
