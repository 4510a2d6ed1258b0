//! Pulse programs, switch preparations and terminal gates for state
//! transfer, Bell, GHZ and W generation and directional routing, together
//! with the closed-form predictions each protocol is checked against.
//!
//! Every plan runs on `[−τ/2, τ/2]`. Within a transfer window the emitter
//! pulse is centered `t_p/2` before the window midpoint and the receiver
//! pulse, time-reversed, `t_p/2` after it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::emission_coefficients;
use crate::network::{
    evolve, Component, Layout, Network, NetworkError, NetworkState, Observation, Program,
};
use crate::ode::{Options, Stats};
use crate::pulse::PulseSchedule;

/// Guard interval between consecutive transfer windows, in units of `1/κ`.
pub const GUARD_GAP_KAPPA: f64 = 4.0;

const REL_TOL_CHI: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("tau = {tau:e} s is too short; need more than {min:e} s")]
    TauTooShort { tau: f64, min: f64 },
    #[error("the Bell protocol needs chi[s1] = kappa = {required:e} rad/s, got {got:e} rad/s")]
    BellCondition { required: f64, got: f64 },
    #[error("the W protocol needs switch shifts {required:?} rad/s on the emitting switches, got {got:?} rad/s")]
    WSchedule { required: Vec<f64>, got: Vec<f64> },
    #[error("routing needs a three-node chain, got {0} nodes")]
    RouteTopology(usize),
    #[error("simultaneous split emission needs both central switches closed")]
    SplitNeedsClosedSwitches,
    #[error("pulse windows overlap: {0}")]
    OverlappingWindows(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("plan document: {0}")]
    Parse(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A qubit that can appear in a reduced state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum QubitLabel {
    Node(usize),
    Switch(usize),
}

impl std::fmt::Display for QubitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QubitLabel::Node(i) => write!(f, "q{}", i + 1),
            QubitLabel::Switch(m) => write!(f, "s{}", m + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchPrep {
    Bit { value: bool },
    Superposition { zero: Complex64, one: Complex64 },
}

impl SwitchPrep {
    pub fn closed() -> Self {
        SwitchPrep::Bit { value: false }
    }

    pub fn open() -> Self {
        SwitchPrep::Bit { value: true }
    }

    /// `(amplitude of |0⟩, amplitude of |1⟩)`.
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match *self {
            SwitchPrep::Bit { value: false } => (one, zero),
            SwitchPrep::Bit { value: true } => (zero, one),
            SwitchPrep::Superposition { zero, one } => (zero, one),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    X { qubit: QubitLabel },
    /// `|0⟩⟨0| + e^{iφ}|1⟩⟨1|`.
    Phase { qubit: QubitLabel, phi: f64 },
}

impl Gate {
    pub fn qubit(&self) -> QubitLabel {
        match *self {
            Gate::X { qubit } | Gate::Phase { qubit, .. } => qubit,
        }
    }

    /// Row-major 2×2 matrix.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        match *self {
            Gate::X { .. } => [[z, o], [o, z]],
            Gate::Phase { phi, .. } => [[o, z], [z, Complex64::from_polar(1.0, phi)]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteOrder {
    LeftFirst,
    RightFirst,
    SimultaneousSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Transfer of the excitation to the receiving qubit.
    Transfer,
    Bell,
    Ghz,
    W { n: usize },
    Route { order: RouteOrder },
}

/// Immutable description of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub target: Target,
    /// Total duration (s); the plan spans `[−τ/2, τ/2]`.
    pub tau: f64,
    /// Node qubit that starts excited.
    pub initial_qubit: usize,
    /// One entry per switch.
    pub switch_prep: Vec<SwitchPrep>,
    pub schedules: Vec<PulseSchedule>,
    /// Applied in order to the reduced state.
    pub terminal_gates: Vec<Gate>,
    /// Qubits kept when reducing, first label most significant.
    pub labels: Vec<QubitLabel>,
    /// Qubits that received their excitation through a link; each sees the
    /// photon-loss channel once.
    pub loss_qubits: Vec<QubitLabel>,
}

impl ProtocolPlan {
    pub fn start(&self) -> f64 {
        -0.5 * self.tau
    }

    pub fn end(&self) -> f64 {
        0.5 * self.tau
    }

    pub fn program(&self) -> Program {
        Program::new(self.schedules.clone())
    }

    pub fn validate(&self, net: &Network) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidPlan(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.initial_qubit >= net.nodes() {
            return bad(format!("initial qubit {} does not exist", self.initial_qubit));
        }
        if self.switch_prep.len() != net.resonators() {
            return bad(format!(
                "expected {} switch preparations, got {}",
                net.resonators(),
                self.switch_prep.len()
            ));
        }
        for (m, p) in self.switch_prep.iter().enumerate() {
            let (a, b) = p.amplitudes();
            if !(((a.norm_sqr() + b.norm_sqr()) - 1.0).abs() <= 1e-12) {
                return bad(format!("switch {m} preparation is not normalized"));
            }
        }
        let (lo, hi) = (self.start(), self.end());
        let slack = 1e-12 * self.tau;
        for s in &self.schedules {
            if s.coupling >= net.resonators() {
                return Err(NetworkError::UnknownCoupling {
                    coupling: s.coupling,
                    resonators: net.resonators(),
                }
                .into());
            }
            s.validate().map_err(ProtocolError::InvalidPlan)?;
            if s.window.0 < lo - slack || s.window.1 > hi + slack {
                return bad(format!(
                    "schedule on coupling {} leaves [-tau/2, tau/2]",
                    s.coupling
                ));
            }
        }
        let known = |l: &QubitLabel| match *l {
            QubitLabel::Node(i) => i < net.nodes(),
            QubitLabel::Switch(m) => m < net.resonators(),
        };
        if self.labels.is_empty() {
            return bad("no qubits selected for the reduced state".into());
        }
        for l in self.labels.iter().chain(&self.loss_qubits) {
            if !known(l) {
                return bad(format!("qubit {l} does not exist"));
            }
        }
        for g in &self.terminal_gates {
            if !self.labels.contains(&g.qubit()) {
                return bad(format!("gate acts on {} outside the reduced state", g.qubit()));
            }
        }
        Ok(())
    }

    /// Switch configurations with nonzero amplitude and their joint weights.
    pub fn switch_branches(&self) -> Vec<(u32, Complex64)> {
        let mut out = vec![(0u32, Complex64::new(1.0, 0.0))];
        for (m, p) in self.switch_prep.iter().enumerate() {
            let (a0, a1) = p.amplitudes();
            let mut next = Vec::with_capacity(out.len() * 2);
            for &(bits, w) in &out {
                if a0 != Complex64::new(0.0, 0.0) {
                    next.push((bits, w * a0));
                }
                if a1 != Complex64::new(0.0, 0.0) {
                    next.push((bits | 1 << m, w * a1));
                }
            }
            out = next;
        }
        out
    }

    pub fn layout(&self, net: &Network) -> Layout {
        net.pruned_layout(&self.program(), &[Component::Qubit(self.initial_qubit)])
    }

    pub fn initial_state(&self, net: &Network) -> Result<NetworkState, ProtocolError> {
        Ok(NetworkState::excited(
            self.layout(net),
            Component::Qubit(self.initial_qubit),
            &self.switch_branches(),
        )?)
    }

    /// Coherent evolution over the whole plan.
    pub fn simulate(
        &self,
        net: &Network,
        opts: &Options,
        observation: Option<&mut Observation>,
    ) -> Result<(NetworkState, Stats), ProtocolError> {
        self.validate(net)?;
        let mut state = self.initial_state(net)?;
        let stats = evolve(
            net,
            &self.program(),
            &mut state,
            self.start(),
            self.end(),
            opts,
            observation,
        )?;
        Ok((state, stats))
    }

    pub fn to_toml(&self) -> Result<String, ProtocolError> {
        toml::to_string(self).map_err(|e| ProtocolError::Parse(e.to_string()))
    }

    /// Parses a plan document. Structural checks against a network are left
    /// to [`ProtocolPlan::validate`].
    pub fn from_toml(text: &str) -> Result<Self, ProtocolError> {
        let plan: Self = toml::from_str(text).map_err(|e| ProtocolError::Parse(e.to_string()))?;
        if !(plan.tau > 0.0 && plan.tau.is_finite()) {
            return Err(ProtocolError::Parse(format!("tau must be positive, got {}", plan.tau)));
        }
        for s in &plan.schedules {
            s.validate().map_err(ProtocolError::Parse)?;
        }
        for (m, p) in plan.switch_prep.iter().enumerate() {
            let (a, b) = p.amplitudes();
            if ![a.re, a.im, b.re, b.im].iter().all(|x| x.is_finite()) {
                return Err(ProtocolError::Parse(format!("switch {m} amplitudes are not finite")));
            }
        }
        for g in &plan.terminal_gates {
            if let Gate::Phase { phi, .. } = g {
                if !phi.is_finite() {
                    return Err(ProtocolError::Parse(format!("phase gate angle {phi} is not finite")));
                }
            }
        }
        Ok(plan)
    }
}

fn closed_switches(net: &Network) -> Vec<SwitchPrep> {
    vec![SwitchPrep::closed(); net.resonators()]
}

/// Emission from `from` and time-reversed capture at `to` within
/// `window`, centered on the window midpoint.
fn transfer_pulses(net: &Network, from: usize, to: usize, window: (f64, f64), scale: f64) -> [PulseSchedule; 2] {
    let kappa = net.kappa();
    let mid = 0.5 * (window.0 + window.1);
    let half = 0.5 * net.propagation_time();
    [
        PulseSchedule::sech(from, kappa, mid - half, window).with_scale(scale),
        PulseSchedule::sech(to, kappa, mid + half, window).reversed(),
    ]
}

fn check_window(net: &Network, duration: f64) -> Result<(), ProtocolError> {
    let min = 2.0 * net.propagation_time();
    if !(duration > min) {
        return Err(ProtocolError::TauTooShort { tau: duration, min });
    }
    let soft = 10.0 / net.kappa() + net.propagation_time();
    if duration < soft {
        log::warn!(
            "transfer window {duration:e} s is shorter than 10/kappa + t_p = {soft:e} s; pulse tails are truncated"
        );
    }
    Ok(())
}

/// State transfer from node 1 to node 2 with the emitter switch in `s1`.
pub fn plan_transfer(net: &Network, tau: f64, s1: SwitchPrep) -> Result<ProtocolPlan, ProtocolError> {
    check_window(net, tau)?;
    let window = (-0.5 * tau, 0.5 * tau);
    let mut prep = closed_switches(net);
    prep[0] = s1;
    Ok(ProtocolPlan {
        target: Target::Transfer,
        tau,
        initial_qubit: 0,
        switch_prep: prep,
        schedules: transfer_pulses(net, 0, 1, window, 1.0).to_vec(),
        terminal_gates: Vec::new(),
        labels: vec![QubitLabel::Node(1)],
        loss_qubits: vec![QubitLabel::Node(1)],
    })
}

pub fn plan_qst(net: &Network, tau: f64) -> Result<ProtocolPlan, ProtocolError> {
    plan_transfer(net, tau, SwitchPrep::closed())
}

pub fn plan_bell(net: &Network, tau: f64) -> Result<ProtocolPlan, ProtocolError> {
    let kappa = net.kappa();
    let got = net.spec().chi[0];
    if (got - kappa).abs() > REL_TOL_CHI * kappa {
        return Err(ProtocolError::BellCondition { required: kappa, got });
    }
    let mut plan = plan_transfer(net, tau, SwitchPrep::open())?;
    plan.target = Target::Bell;
    plan.labels = vec![QubitLabel::Node(0), QubitLabel::Node(1)];
    Ok(plan)
}

/// Phases measured from reference runs that the GHZ plan compensates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhzCalibration {
    /// Phase of the transferred amplitude with the switch closed.
    pub transfer_phase: f64,
    /// Amplitude left on the emitter with the switch open.
    pub remaining: Complex64,
}

pub fn calibrate_ghz(net: &Network, tau: f64, opts: &Options) -> Result<GhzCalibration, ProtocolError> {
    let closed = plan_transfer(net, tau, SwitchPrep::closed())?;
    let (s, _) = closed.simulate(net, opts, None)?;
    let q2 = s.branches[0].amps[s.layout.qubit(1)];
    let open = plan_transfer(net, tau, SwitchPrep::open())?;
    let (s, _) = open.simulate(net, opts, None)?;
    let q1 = s.branches[0].amps[s.layout.qubit(0)];
    Ok(GhzCalibration {
        transfer_phase: q2.arg(),
        remaining: q1,
    })
}

pub fn plan_ghz(net: &Network, tau: f64, cal: &GhzCalibration) -> Result<ProtocolPlan, ProtocolError> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s1 = SwitchPrep::Superposition {
        zero: Complex64::from_polar(h, -cal.transfer_phase),
        one: Complex64::new(h, 0.0),
    };
    let mut plan = plan_transfer(net, tau, s1)?;
    plan.target = Target::Ghz;
    plan.labels = vec![QubitLabel::Node(0), QubitLabel::Node(1), QubitLabel::Switch(0)];
    plan.terminal_gates = vec![
        Gate::X {
            qubit: QubitLabel::Node(1),
        },
        Gate::Phase {
            qubit: QubitLabel::Node(1),
            phi: -cal.remaining.arg(),
        },
    ];
    Ok(plan)
}

/// Shift required on the emitting switch of each W stage: `κ/√(N−k)`.
pub fn w_shift_schedule(n: usize, kappa: f64) -> Vec<f64> {
    (1..n).map(|k| kappa / ((n - k) as f64).sqrt()).collect()
}

/// Duration of each W stage for a total `tau`.
pub fn w_stage_duration(n: usize, tau: f64, kappa: f64) -> f64 {
    let gap = GUARD_GAP_KAPPA / kappa;
    (tau - (n as f64 - 2.0) * gap) / (n as f64 - 1.0)
}

/// Total W duration for a given stage duration.
pub fn w_total_duration(n: usize, stage: f64, kappa: f64) -> f64 {
    let gap = GUARD_GAP_KAPPA / kappa;
    (n as f64 - 1.0) * stage + (n as f64 - 2.0) * gap
}

/// Sets the emitting switches of a W run to the required shifts.
pub fn apply_w_schedule(chi: &mut [f64], kappa: f64) {
    let n = chi.len() / 2 + 1;
    for (k, x) in w_shift_schedule(n, kappa).into_iter().enumerate() {
        chi[2 * k] = x;
    }
}

pub fn plan_w(net: &Network, tau: f64) -> Result<ProtocolPlan, ProtocolError> {
    let n = net.nodes();
    let kappa = net.kappa();
    let required = w_shift_schedule(n, kappa);
    let got: Vec<f64> = (0..n - 1).map(|k| net.spec().chi[2 * k]).collect();
    if required
        .iter()
        .zip(&got)
        .any(|(r, g)| (r - g).abs() > REL_TOL_CHI * r)
    {
        return Err(ProtocolError::WSchedule { required, got });
    }
    let stage = w_stage_duration(n, tau, kappa);
    check_window(net, stage)?;
    let gap = GUARD_GAP_KAPPA / kappa;
    let mut prep = closed_switches(net);
    let mut schedules = Vec::with_capacity(2 * (n - 1));
    for k in 0..n - 1 {
        let a = -0.5 * tau + k as f64 * (stage + gap);
        let b = if k == n - 2 { 0.5 * tau } else { a + stage };
        prep[2 * k] = SwitchPrep::open();
        schedules.extend(transfer_pulses(net, 2 * k, 2 * k + 1, (a, b), 1.0));
    }
    Ok(ProtocolPlan {
        target: Target::W { n },
        tau,
        initial_qubit: 0,
        switch_prep: prep,
        schedules,
        terminal_gates: Vec::new(),
        labels: (0..n).map(QubitLabel::Node).collect(),
        loss_qubits: (1..n).map(QubitLabel::Node).collect(),
    })
}

/// Routing from the central node of a three-node chain. `open` gives the
/// bits of the central node's left and right switches.
pub fn plan_route(
    net: &Network,
    tau: f64,
    order: RouteOrder,
    open: (bool, bool),
) -> Result<ProtocolPlan, ProtocolError> {
    if net.nodes() != 3 {
        return Err(ProtocolError::RouteTopology(net.nodes()));
    }
    let mut prep = closed_switches(net);
    prep[1] = SwitchPrep::Bit { value: open.0 };
    prep[2] = SwitchPrep::Bit { value: open.1 };
    let (left, right) = ((1, 0), (2, 3));
    let schedules = match order {
        RouteOrder::SimultaneousSplit => {
            if open.0 || open.1 {
                return Err(ProtocolError::SplitNeedsClosedSwitches);
            }
            check_window(net, tau)?;
            let w = (-0.5 * tau, 0.5 * tau);
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let mut s = transfer_pulses(net, left.0, left.1, w, h).to_vec();
            s.extend(transfer_pulses(net, right.0, right.1, w, h));
            s
        }
        RouteOrder::LeftFirst | RouteOrder::RightFirst => {
            let gap = GUARD_GAP_KAPPA / net.kappa();
            let dur = 0.5 * (tau - gap);
            check_window(net, dur)?;
            let first = (-0.5 * tau, -0.5 * tau + dur);
            let second = (0.5 * tau - dur, 0.5 * tau);
            if first.1 >= second.0 {
                return Err(ProtocolError::OverlappingWindows(format!(
                    "[{:e}, {:e}] and [{:e}, {:e}]",
                    first.0, first.1, second.0, second.1
                )));
            }
            let (a, b) = if order == RouteOrder::LeftFirst {
                (left, right)
            } else {
                (right, left)
            };
            let mut s = transfer_pulses(net, a.0, a.1, first, 1.0).to_vec();
            s.extend(transfer_pulses(net, b.0, b.1, second, 1.0));
            s
        }
    };
    Ok(ProtocolPlan {
        target: Target::Route { order },
        tau,
        initial_qubit: 1,
        switch_prep: prep,
        schedules,
        terminal_gates: Vec::new(),
        labels: vec![QubitLabel::Node(0), QubitLabel::Node(1), QubitLabel::Node(2)],
        loss_qubits: vec![QubitLabel::Node(0), QubitLabel::Node(2)],
    })
}

/// Where the excitation ended up after a routing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteOutcome {
    pub left: f64,
    pub right: f64,
    pub emitter: f64,
}

/// Populations of the left side (node 1, its resonator and link 1), the
/// right side (node 3, its resonator and link 2) and the central node.
pub fn route_outcome(state: &NetworkState) -> RouteOutcome {
    let p = |c| state.population(c);
    RouteOutcome {
        left: p(Component::Qubit(0)) + p(Component::Resonator(0)) + state.link_population(0),
        right: p(Component::Qubit(2)) + p(Component::Resonator(3)) + state.link_population(1),
        emitter: p(Component::Qubit(1)) + p(Component::Resonator(1)) + p(Component::Resonator(2)),
    }
}

/// Markovian prediction for a routing run; `chi` holds the shifts of the
/// central node's left and right switches.
pub fn predicted_route(order: RouteOrder, open: (bool, bool), chi: (f64, f64), kappa: f64) -> RouteOutcome {
    let eff = |o: bool, x: f64| emission_coefficients(if o { x } else { 0.0 }, kappa);
    let l = eff(open.0, chi.0);
    let r = eff(open.1, chi.1);
    match order {
        RouteOrder::SimultaneousSplit => RouteOutcome {
            left: 0.5,
            right: 0.5,
            emitter: 0.0,
        },
        RouteOrder::LeftFirst => RouteOutcome {
            left: l.beta.norm_sqr(),
            right: l.alpha.norm_sqr() * r.beta.norm_sqr(),
            emitter: l.alpha.norm_sqr() * r.alpha.norm_sqr(),
        },
        RouteOrder::RightFirst => RouteOutcome {
            left: r.alpha.norm_sqr() * l.beta.norm_sqr(),
            right: r.beta.norm_sqr(),
            emitter: r.alpha.norm_sqr() * l.alpha.norm_sqr(),
        },
    }
}

/// `¼(1 + χ/√(χ²+κ²))²`.
pub fn predicted_ghz_fidelity(chi: f64, kappa: f64) -> f64 {
    let a = chi / (chi * chi + kappa * kappa).sqrt();
    0.25 * (1.0 + a) * (1.0 + a)
}

/// Shift above which the GHZ fidelity exceeds one half.
pub fn ghz_witness_threshold(kappa: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    ((3.0 - 2.0 * s2) / (2.0 * s2 - 2.0)).sqrt() * kappa
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_threshold_value() {
        assert!((ghz_witness_threshold(1.0) - 0.455).abs() < 1e-3);
        assert!((predicted_ghz_fidelity(ghz_witness_threshold(1.0), 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn w_schedule_three_nodes() {
        let s = w_shift_schedule(3, 1.0);
        assert!((s[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(s[1], 1.0);
    }

    #[test]
    fn superposed_switch_splits_branches() {
        let net = Network::new(Default::default()).unwrap();
        let cal = GhzCalibration {
            transfer_phase: 0.3,
            remaining: Complex64::new(0.5, 0.5),
        };
        let plan = plan_ghz(&net, 300e-9, &cal).unwrap();
        let b = plan.switch_branches();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].0, 0);
        assert_eq!(b[1].0, 1);
    }
}
