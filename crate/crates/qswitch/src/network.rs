//! Single-excitation dynamics of a chain of nodes joined by rectangular
//! waveguide links, in the frame rotating at the carrier.
//!
//! Node `i` owns a qubit and up to two transfer resonators: resonator `2i−1`
//! faces left and resonator `2i` faces right. Link `j` joins resonator `2j`
//! (its left end) to resonator `2j+1` (its right end). Switch `m` shifts
//! resonator `m` by `chi[m]` when its bit is set.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{self, DenseStep, OdeError, Options, Stats, System};
use crate::pulse::PulseSchedule;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network parameter: {0}")]
    InvalidSpec(String),
    #[error("carrier {omega_tr:e} rad/s is below the waveguide cutoff {cutoff:e} rad/s")]
    BelowCutoff { omega_tr: f64, cutoff: f64 },
    #[error("no waveguide mode lies within the selected window")]
    EmptyModeSet,
    #[error("schedule references coupling {coupling}, but the network has {resonators} resonators")]
    UnknownCoupling { coupling: usize, resonators: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("state does not match the network layout: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Integrator(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeSelection {
    /// Every mode with `|ω_k − ω_tr| ≤ half_width` (rad/s).
    Window { half_width: f64 },
    /// The `count` modes closest to the carrier.
    Count { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: usize,
    /// Carrier angular frequency (rad/s).
    pub omega_tr: f64,
    /// Resonator decay rate into the line (rad/s).
    pub kappa: f64,
    /// Length of each link (m).
    pub length: f64,
    /// Broad wall dimension of the guide (m).
    pub broad_wall: f64,
    /// Dispersive shift of each switch (rad/s), one per resonator.
    pub chi: Vec<f64>,
    pub modes: ModeSelection,
    /// Group velocity used for couplings and delays instead of the
    /// dispersion relation (m/s).
    pub v_g_override: Option<f64>,
    /// Cancels the static self-energy left over by truncating the mode set.
    pub self_energy_compensation: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let kappa = 2.0 * PI * 10e6;
        Self {
            nodes: 3,
            omega_tr: 2.0 * PI * 8e9,
            kappa,
            length: 10.0,
            broad_wall: 0.0286,
            chi: vec![kappa; 4],
            modes: ModeSelection::Window {
                half_width: 40.0 * kappa,
            },
            v_g_override: None,
            self_energy_compensation: true,
        }
    }
}

impl NetworkSpec {
    pub fn resonators(&self) -> usize {
        2 * self.nodes.saturating_sub(1)
    }

    pub fn links(&self) -> usize {
        self.nodes.saturating_sub(1)
    }

    pub fn cutoff(&self) -> f64 {
        SPEED_OF_LIGHT * PI / self.broad_wall
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidSpec(m));
        if self.nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if self.nodes > 16 {
            return bad(format!("at most 16 nodes are supported, got {}", self.nodes));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("omega_tr", self.omega_tr),
            ("length", self.length),
            ("broad_wall", self.broad_wall),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.chi.len() != self.resonators() {
            return bad(format!(
                "expected {} switch shifts, got {}",
                self.resonators(),
                self.chi.len()
            ));
        }
        if let Some(c) = self.chi.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return bad(format!("switch shifts must be non-negative, got {c}"));
        }
        if let Some(v) = self.v_g_override {
            if !(v > 0.0 && v <= SPEED_OF_LIGHT) {
                return bad(format!("group velocity override must lie in (0, c], got {v}"));
            }
        }
        match self.modes {
            ModeSelection::Window { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                return bad(format!("mode window must be positive, got {half_width}"));
            }
            ModeSelection::Count { count: 0 } => return Err(NetworkError::EmptyModeSet),
            _ => {}
        }
        if self.omega_tr <= self.cutoff() {
            return Err(NetworkError::BelowCutoff {
                omega_tr: self.omega_tr,
                cutoff: self.cutoff(),
            });
        }
        Ok(())
    }

    /// Frequency of the `k`-th longitudinal mode (rad/s).
    pub fn mode_frequency(&self, k: usize) -> f64 {
        let a = PI / self.broad_wall;
        let b = k as f64 * PI / self.length;
        SPEED_OF_LIGHT * (a * a + b * b).sqrt()
    }

    /// Mode index whose frequency is nearest `omega` from below or above.
    fn mode_index_at(&self, omega: f64) -> f64 {
        let a = PI / self.broad_wall;
        let kz2 = (omega / SPEED_OF_LIGHT).powi(2) - a * a;
        if kz2 <= 0.0 {
            0.0
        } else {
            kz2.sqrt() * self.length / PI
        }
    }
}

/// Group velocity at the carrier, `dω/dk_z`, or the override when set.
pub fn group_velocity(spec: &NetworkSpec) -> f64 {
    spec.v_g_override
        .unwrap_or_else(|| dispersion_group_velocity(spec.omega_tr, spec.broad_wall))
}

/// `c·√(1 − (cπ/(l_c ω))²)`; zero at and below cutoff.
pub fn dispersion_group_velocity(omega: f64, broad_wall: f64) -> f64 {
    let r = SPEED_OF_LIGHT * PI / (broad_wall * omega);
    if r >= 1.0 {
        0.0
    } else {
        SPEED_OF_LIGHT * (1.0 - r * r).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: usize,
    pub omega: f64,
    /// `ω_k − ω_tr` (rad/s).
    pub detuning: f64,
    pub coupling: f64,
    /// `(−1)^k`, the relative sign at the right end of the link.
    pub sign: f64,
}

/// Modes of one link; every link of the chain shares the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

pub fn build_modes(spec: &NetworkSpec) -> Result<ModeSet, NetworkError> {
    spec.validate()?;
    let v_g = group_velocity(spec);
    let coupling = |omega: f64| (spec.kappa * v_g * omega / (2.0 * spec.omega_tr * spec.length)).sqrt();
    let mode = |k: usize| {
        let omega = spec.mode_frequency(k);
        Mode {
            index: k,
            omega,
            detuning: omega - spec.omega_tr,
            coupling: coupling(omega),
            sign: if k % 2 == 0 { 1.0 } else { -1.0 },
        }
    };
    let modes: Vec<Mode> = match spec.modes {
        ModeSelection::Window { half_width } => {
            let lo = spec.mode_index_at(spec.omega_tr - half_width).floor().max(1.0) as usize;
            let hi = spec.mode_index_at(spec.omega_tr + half_width).ceil() as usize + 1;
            (lo..=hi)
                .map(mode)
                .filter(|m| m.detuning.abs() <= half_width)
                .collect()
        }
        ModeSelection::Count { count } => {
            let center = spec.mode_index_at(spec.omega_tr).round().max(1.0) as usize;
            let lo = center.saturating_sub(count + 1).max(1);
            let mut all: Vec<Mode> = (lo..=center + count + 1).map(mode).collect();
            all.sort_by(|a, b| {
                a.detuning
                    .abs()
                    .total_cmp(&b.detuning.abs())
                    .then(a.index.cmp(&b.index))
            });
            all.truncate(count);
            all.sort_by_key(|m| m.index);
            all
        }
    };
    if modes.is_empty() {
        return Err(NetworkError::EmptyModeSet);
    }
    Ok(ModeSet { modes })
}

/// Quantities derived from a spec and its mode set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub group_velocity: f64,
    /// `L / v_g` (s).
    pub propagation_time: f64,
    /// Local mode spacing at the carrier (rad/s).
    pub free_spectral_range: f64,
    /// Detuning of the mode closest to the carrier (rad/s).
    pub nearest_detuning: f64,
    pub modes_per_link: usize,
    /// Frequency shifts applied to each resonator and across each link
    /// (rad/s); zero when compensation is off.
    pub self_shift: f64,
    pub cross_shift: f64,
}

/// Static self-energy of the truncated mode set minus that of an unbounded
/// comb with the spacing and coupling of the mode nearest the carrier.
///
/// The comb sums are closed-form: `Σ 1/(n+f) = π cot πf` and
/// `Σ (−1)^n/(n+f) = π / sin πf`. Returns `(self, cross)` so that
/// `ċ += i·self·c + i·cross·c_partner` restores the unbounded comb.
pub fn self_energy_shifts(spec: &NetworkSpec, modes: &ModeSet) -> (f64, f64) {
    let k0_pos = modes
        .modes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.detuning.abs().total_cmp(&b.1.detuning.abs()))
        .map(|(i, _)| i)
        .expect("mode set is non-empty");
    let m0 = modes.modes[k0_pos];
    let spacing = local_spacing(spec, m0.index);
    let f = m0.detuning / spacing;
    let g0sq = m0.coupling * m0.coupling;

    let mut shift_self = 0.0;
    let mut shift_cross = 0.0;
    for (i, m) in modes.modes.iter().enumerate() {
        if i == k0_pos {
            continue;
        }
        let e = m.coupling * m.coupling / -m.detuning;
        shift_self += e;
        shift_cross += m.sign * e;
    }
    let (cot_part, csc_part) = if f.abs() < 1e-6 {
        let p2 = PI * PI;
        let p4 = p2 * p2;
        (
            -p2 * f / 3.0 - p4 * f.powi(3) / 45.0,
            p2 * f / 6.0 + 7.0 * p4 * f.powi(3) / 360.0,
        )
    } else {
        (
            PI / (PI * f).tan() - 1.0 / f,
            PI / (PI * f).sin() - 1.0 / f,
        )
    };
    shift_self += g0sq / spacing * cot_part;
    shift_cross += m0.sign * g0sq / spacing * csc_part;
    (shift_self, shift_cross)
}

fn local_spacing(spec: &NetworkSpec, k: usize) -> f64 {
    if k >= 2 {
        0.5 * (spec.mode_frequency(k + 1) - spec.mode_frequency(k - 1))
    } else {
        spec.mode_frequency(k + 1) - spec.mode_frequency(k)
    }
}

/// Immutable evaluator for one spec: mode set, derived constants and the
/// chain topology.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    modes: ModeSet,
    derived: Derived,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self, NetworkError> {
        let modes = build_modes(&spec)?;
        let v_g = group_velocity(&spec);
        let (self_shift, cross_shift) = if spec.self_energy_compensation {
            self_energy_shifts(&spec, &modes)
        } else {
            (0.0, 0.0)
        };
        let nearest = modes
            .modes
            .iter()
            .min_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()))
            .expect("mode set is non-empty");
        let derived = Derived {
            group_velocity: v_g,
            propagation_time: spec.length / v_g,
            free_spectral_range: local_spacing(&spec, nearest.index),
            nearest_detuning: nearest.detuning,
            modes_per_link: modes.len(),
            self_shift,
            cross_shift,
        };
        Ok(Self {
            spec,
            modes,
            derived,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn derived(&self) -> &Derived {
        &self.derived
    }

    pub fn kappa(&self) -> f64 {
        self.spec.kappa
    }

    pub fn propagation_time(&self) -> f64 {
        self.derived.propagation_time
    }

    pub fn nodes(&self) -> usize {
        self.spec.nodes
    }

    pub fn resonators(&self) -> usize {
        self.spec.resonators()
    }

    pub fn links(&self) -> usize {
        self.spec.links()
    }

    /// Node owning resonator `m`.
    pub fn node_of(m: usize) -> usize {
        m.div_ceil(2)
    }

    /// Link that resonator `m` feeds, and whether it sits at the link's
    /// right end.
    pub fn link_of(m: usize) -> (usize, bool) {
        (m / 2, m % 2 == 1)
    }

    /// The resonator at the other end of the same link.
    pub fn partner(m: usize) -> usize {
        m ^ 1
    }

    /// Full layout with every link active.
    pub fn full_layout(&self) -> Layout {
        Layout::new(self.nodes(), self.modes.len(), vec![true; self.links()])
    }

    /// Layout keeping only the links reachable from `excited` components
    /// through couplings that `program` switches on.
    pub fn pruned_layout(&self, program: &Program, excited: &[Component]) -> Layout {
        let n = self.nodes();
        let r = self.resonators();
        let mut coupled = vec![false; r];
        for s in &program.schedules {
            if s.coupling < r && !s.is_zero() {
                coupled[s.coupling] = true;
            }
        }
        let mut node_seen = vec![false; n];
        let mut res_seen = vec![false; r];
        let mut link_seen = vec![false; self.links()];
        let mut stack: Vec<Component> = excited.to_vec();
        while let Some(c) = stack.pop() {
            match c {
                Component::Vacuum => {}
                Component::Qubit(i) => {
                    if i >= n || node_seen[i] {
                        continue;
                    }
                    node_seen[i] = true;
                    for m in [2 * i, (2 * i).wrapping_sub(1)] {
                        if m < r && Self::node_of(m) == i && coupled[m] {
                            stack.push(Component::Resonator(m));
                        }
                    }
                }
                Component::Resonator(m) => {
                    if m >= r || res_seen[m] {
                        continue;
                    }
                    res_seen[m] = true;
                    if coupled[m] {
                        stack.push(Component::Qubit(Self::node_of(m)));
                    }
                    let (j, _) = Self::link_of(m);
                    stack.push(Component::Mode(j, 0));
                }
                Component::Mode(j, _) => {
                    if j >= link_seen.len() || link_seen[j] {
                        continue;
                    }
                    link_seen[j] = true;
                    stack.push(Component::Resonator(2 * j));
                    stack.push(Component::Resonator(2 * j + 1));
                }
            }
        }
        Layout::new(n, self.modes.len(), link_seen)
    }

    pub fn check_program(&self, program: &Program) -> Result<(), NetworkError> {
        let r = self.resonators();
        for s in &program.schedules {
            if s.coupling >= r {
                return Err(NetworkError::UnknownCoupling {
                    coupling: s.coupling,
                    resonators: r,
                });
            }
            s.validate().map_err(NetworkError::InvalidSchedule)?;
        }
        if !program.node_decay.is_empty() && program.node_decay.len() != self.nodes() {
            return Err(NetworkError::InvalidSchedule(format!(
                "expected {} node decay rates, got {}",
                self.nodes(),
                program.node_decay.len()
            )));
        }
        Ok(())
    }
}

/// One amplitude slot of a branch vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Vacuum,
    Qubit(usize),
    Resonator(usize),
    /// Link and position within its mode set.
    Mode(usize, usize),
}

/// Index map `[vacuum, q_0.., c_0.., ψ of each active link..]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    nodes: usize,
    modes_per_link: usize,
    active: Vec<bool>,
    link_offset: Vec<Option<usize>>,
    dim: usize,
}

impl Layout {
    pub fn new(nodes: usize, modes_per_link: usize, active: Vec<bool>) -> Self {
        let resonators = 2 * nodes.saturating_sub(1);
        let mut offset = 1 + nodes + resonators;
        let link_offset = active
            .iter()
            .map(|&a| {
                if a {
                    let o = offset;
                    offset += modes_per_link;
                    Some(o)
                } else {
                    None
                }
            })
            .collect();
        Self {
            nodes,
            modes_per_link,
            active,
            link_offset,
            dim: offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn resonators(&self) -> usize {
        2 * self.nodes.saturating_sub(1)
    }

    pub fn modes_per_link(&self) -> usize {
        self.modes_per_link
    }

    pub fn is_link_active(&self, j: usize) -> bool {
        self.active.get(j).copied().unwrap_or(false)
    }

    pub fn active_links(&self) -> &[bool] {
        &self.active
    }

    pub const VACUUM: usize = 0;

    pub fn qubit(&self, i: usize) -> usize {
        debug_assert!(i < self.nodes);
        1 + i
    }

    pub fn resonator(&self, m: usize) -> usize {
        debug_assert!(m < self.resonators());
        1 + self.nodes + m
    }

    /// Index range of link `j`'s modes, when the link is active.
    pub fn link(&self, j: usize) -> Option<std::ops::Range<usize>> {
        self.link_offset
            .get(j)
            .copied()
            .flatten()
            .map(|o| o..o + self.modes_per_link)
    }

    pub fn index(&self, c: Component) -> Option<usize> {
        match c {
            Component::Vacuum => Some(Self::VACUUM),
            Component::Qubit(i) if i < self.nodes => Some(self.qubit(i)),
            Component::Resonator(m) if m < self.resonators() => Some(self.resonator(m)),
            Component::Mode(j, k) if k < self.modes_per_link => {
                self.link(j).map(|r| r.start + k)
            }
            _ => None,
        }
    }

    /// Inverse of [`Layout::index`].
    pub fn component(&self, idx: usize) -> Component {
        if idx == 0 {
            return Component::Vacuum;
        }
        if idx <= self.nodes {
            return Component::Qubit(idx - 1);
        }
        let r = self.resonators();
        if idx <= self.nodes + r {
            return Component::Resonator(idx - 1 - self.nodes);
        }
        for (j, o) in self.link_offset.iter().enumerate() {
            if let Some(o) = *o {
                if idx >= o && idx < o + self.modes_per_link {
                    return Component::Mode(j, idx - o);
                }
            }
        }
        panic!("index {idx} outside layout of dimension {}", self.dim)
    }
}

/// Couplings and non-Hermitian qubit decay applied during an evolution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub schedules: Vec<PulseSchedule>,
    /// Energy decay rate `1/T₁` per node qubit (1/s); empty means none.
    pub node_decay: Vec<f64>,
}

impl Program {
    pub fn new(schedules: Vec<PulseSchedule>) -> Self {
        Self {
            schedules,
            node_decay: Vec::new(),
        }
    }

    pub fn with_node_decay(mut self, rates: Vec<f64>) -> Self {
        self.node_decay = rates;
        self
    }

    /// Window edges strictly inside `(t0, t1)`, sorted and deduplicated.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .schedules
            .iter()
            .filter(|s| !s.is_zero())
            .flat_map(|s| [s.window.0, s.window.1])
            .filter(|&t| t > t0 && t < t1)
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

/// Amplitudes attached to one configuration of the switch register.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    /// Bit `m` holds switch `m`.
    pub bits: u32,
    pub weight: Complex64,
    pub amps: Vec<Complex64>,
}

impl BranchState {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn weighted_norm_sqr(&self) -> f64 {
        self.weight.norm_sqr() * self.norm_sqr()
    }
}

/// Superposition over switch configurations with distinct bit patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layout: Layout,
    pub branches: Vec<BranchState>,
}

impl NetworkState {
    /// Single excitation on `component` in every branch of `switches`, given
    /// as `(bits, weight)` pairs.
    pub fn excited(
        layout: Layout,
        component: Component,
        switches: &[(u32, Complex64)],
    ) -> Result<Self, NetworkError> {
        let idx = layout.index(component).ok_or_else(|| {
            NetworkError::LayoutMismatch(format!("{component:?} is not part of the layout"))
        })?;
        let dim = layout.dim();
        let branches = switches
            .iter()
            .map(|&(bits, weight)| {
                let mut amps = vec![ZERO; dim];
                amps[idx] = Complex64::new(1.0, 0.0);
                BranchState { bits, weight, amps }
            })
            .collect();
        let s = Self { layout, branches };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), NetworkError> {
        let dim = self.layout.dim();
        for (i, b) in self.branches.iter().enumerate() {
            if b.amps.len() != dim {
                return Err(NetworkError::LayoutMismatch(format!(
                    "branch {i} has {} amplitudes, layout has {dim}",
                    b.amps.len()
                )));
            }
            if self.branches[..i].iter().any(|o| o.bits == b.bits) {
                return Err(NetworkError::LayoutMismatch(format!(
                    "switch configuration {:#b} appears twice",
                    b.bits
                )));
            }
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.branches.iter().map(BranchState::weighted_norm_sqr).sum()
    }

    /// Scales branch weights so the state has unit norm.
    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for b in &mut self.branches {
                b.weight /= n;
            }
        }
    }

    /// `Σ_b |w_b|²·|amp_b(component)|²`.
    pub fn population(&self, component: Component) -> f64 {
        match self.layout.index(component) {
            Some(i) => self
                .branches
                .iter()
                .map(|b| b.weight.norm_sqr() * b.amps[i].norm_sqr())
                .sum(),
            None => 0.0,
        }
    }

    /// Total weighted norm carried by link `j`'s modes.
    pub fn link_population(&self, j: usize) -> f64 {
        match self.layout.link(j) {
            Some(r) => self
                .branches
                .iter()
                .map(|b| b.weight.norm_sqr() * b.amps[r.clone()].iter().map(|a| a.norm_sqr()).sum::<f64>())
                .sum(),
            None => 0.0,
        }
    }

    pub fn branch(&self, bits: u32) -> Option<&BranchState> {
        self.branches.iter().find(|b| b.bits == bits)
    }
}

/// Right-hand side for one branch: the switch bits fix each resonator's
/// dispersive shift.
pub struct BranchRhs<'a> {
    net: &'a Network,
    program: &'a Program,
    layout: &'a Layout,
    chi: Vec<f64>,
    half_decay: Vec<f64>,
}

const MAX_RESONATORS: usize = 30;

impl<'a> BranchRhs<'a> {
    pub fn new(net: &'a Network, program: &'a Program, layout: &'a Layout, bits: u32) -> Self {
        let chi = net
            .spec
            .chi
            .iter()
            .enumerate()
            .map(|(m, &x)| if bits >> m & 1 == 1 { x } else { 0.0 })
            .collect();
        let half_decay = if program.node_decay.is_empty() {
            vec![0.0; net.nodes()]
        } else {
            program.node_decay.iter().map(|g| 0.5 * g).collect()
        };
        Self {
            net,
            program,
            layout,
            chi,
            half_decay,
        }
    }
}

impl System for BranchRhs<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let lay = self.layout;
        let n = lay.nodes();
        let r = lay.resonators();
        let mut g = [0.0; MAX_RESONATORS];
        for s in &self.program.schedules {
            g[s.coupling] += s.value(t);
        }

        dy[Layout::VACUUM] = ZERO;
        for i in 0..n {
            let qi = lay.qubit(i);
            dy[qi] = -self.half_decay[i] * y[qi];
        }
        let d = &self.net.derived;
        for m in 0..r {
            let cm = lay.resonator(m);
            let qi = lay.qubit(Network::node_of(m));
            dy[qi] += -I * g[m] * y[cm];
            let partner = lay.resonator(Network::partner(m));
            dy[cm] = -I * g[m] * y[qi] - I * self.chi[m] * y[cm]
                + I * (d.self_shift * y[cm] + d.cross_shift * y[partner]);
        }
        let modes = &self.net.modes.modes;
        for j in 0..self.net.links() {
            let Some(range) = lay.link(j) else { continue };
            let left = lay.resonator(2 * j);
            let right = lay.resonator(2 * j + 1);
            let (cl, cr) = (y[left], y[right]);
            let mut acc_l = ZERO;
            let mut acc_r = ZERO;
            for (k, idx) in range.enumerate() {
                let md = &modes[k];
                let psi = y[idx];
                let gpsi = psi * md.coupling;
                acc_l += gpsi;
                acc_r += gpsi * md.sign;
                dy[idx] = -I * (psi * md.detuning + (cl + cr * md.sign) * md.coupling);
            }
            dy[left] += -I * acc_l;
            dy[right] += -I * acc_r;
        }
    }
}

/// Four-point Gauss–Legendre nodes and weights on `[0, 1]`.
const GL4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// What to record while evolving; filled in place, one entry per branch.
#[derive(Debug, Clone, Default)]
pub struct Observation {
    /// Sample times within the evolution interval, non-decreasing.
    pub grid: Vec<f64>,
    /// Layout indices to sample.
    pub components: Vec<usize>,
    /// `samples[b][t][c]`: amplitude of `components[c]` at `grid[t]` in
    /// branch `b`, without the branch weight.
    pub samples: Vec<Vec<Vec<Complex64>>>,
    /// `exposure[b][i] = ∫|q_i|² dt` for node qubit `i` in branch `b`.
    pub exposure: Vec<Vec<f64>>,
    pub track_exposure: bool,
}

impl Observation {
    pub fn sampling(grid: Vec<f64>, components: Vec<usize>) -> Self {
        Self {
            grid,
            components,
            ..Self::default()
        }
    }

    pub fn with_exposure(mut self) -> Self {
        self.track_exposure = true;
        self
    }

    fn wants_dense(&self) -> bool {
        self.track_exposure || (!self.grid.is_empty() && !self.components.is_empty())
    }
}

/// Evolves one branch vector across `[t0, t1]`, restarting the integrator at
/// every pulse-window edge.
pub fn evolve_branch(
    net: &Network,
    program: &Program,
    layout: &Layout,
    bits: u32,
    amps: &mut [Complex64],
    t0: f64,
    t1: f64,
    opts: &Options,
    mut observer: Option<&mut dyn FnMut(&DenseStep)>,
) -> Result<Stats, NetworkError> {
    let rhs = BranchRhs::new(net, program, layout, bits);
    if amps.len() != layout.dim() {
        return Err(NetworkError::LayoutMismatch(format!(
            "branch has {} amplitudes, layout has {}",
            amps.len(),
            layout.dim()
        )));
    }
    let mut stats = Stats::default();
    let mut a = t0;
    let mut edges = program.breakpoints(t0, t1);
    edges.push(t1);
    for b in edges {
        let obs: Option<&mut dyn FnMut(&DenseStep)> = match observer {
            Some(ref mut f) => Some(&mut **f),
            None => None,
        };
        stats += ode::integrate(&rhs, a, b, amps, opts, obs)?;
        a = b;
    }
    Ok(stats)
}

/// Evolves every branch of `state` from `t0` to `t1`. Branches never mix,
/// so each is integrated on its own.
pub fn evolve(
    net: &Network,
    program: &Program,
    state: &mut NetworkState,
    t0: f64,
    t1: f64,
    opts: &Options,
    mut observation: Option<&mut Observation>,
) -> Result<Stats, NetworkError> {
    net.check_program(program)?;
    state.check()?;
    if state.layout.nodes() != net.nodes() || state.layout.modes_per_link() != net.modes.len() {
        return Err(NetworkError::LayoutMismatch(
            "state layout was built for a different network".into(),
        ));
    }
    if let Some(obs) = observation.as_deref_mut() {
        if obs.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(NetworkError::LayoutMismatch("observation grid is not monotone".into()));
        }
        if let Some(&c) = obs.components.iter().find(|&&c| c >= state.layout.dim()) {
            return Err(NetworkError::LayoutMismatch(format!("component index {c} out of range")));
        }
        obs.samples.clear();
        obs.exposure.clear();
    }
    let mut stats = Stats::default();
    let layout = state.layout.clone();
    for branch in &mut state.branches {
        match observation.as_deref_mut() {
            Some(obs) if obs.wants_dense() => {
                let (samples, exposure, s) =
                    evolve_observed(net, program, &layout, branch, t0, t1, opts, obs)?;
                obs.samples.push(samples);
                obs.exposure.push(exposure);
                stats += s;
            }
            _ => {
                stats += evolve_branch(
                    net,
                    program,
                    &layout,
                    branch.bits,
                    &mut branch.amps,
                    t0,
                    t1,
                    opts,
                    None,
                )?;
            }
        }
    }
    Ok(stats)
}

#[allow(clippy::type_complexity)]
fn evolve_observed(
    net: &Network,
    program: &Program,
    layout: &Layout,
    branch: &mut BranchState,
    t0: f64,
    t1: f64,
    opts: &Options,
    obs: &Observation,
) -> Result<(Vec<Vec<Complex64>>, Vec<f64>, Stats), NetworkError> {
    let comps = &obs.components;
    let grid: Vec<f64> = obs
        .grid
        .iter()
        .copied()
        .filter(|&t| t >= t0 && t <= t1)
        .collect();
    let mut samples: Vec<Vec<Complex64>> = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        samples.push(comps.iter().map(|&c| branch.amps[c]).collect());
        next += 1;
    }
    let qidx: Vec<usize> = (0..layout.nodes()).map(|i| layout.qubit(i)).collect();
    let mut exposure = vec![0.0; layout.nodes()];
    let track = obs.track_exposure;
    let mut cb = |d: &DenseStep| {
        while next < grid.len() && grid[next] <= d.end() {
            let t = grid[next];
            samples.push(comps.iter().map(|&c| d.component(t, c)).collect());
            next += 1;
        }
        if track {
            let h = d.step();
            for &(x, w) in &GL4 {
                let t = d.start() + x * h;
                for (e, &qi) in exposure.iter_mut().zip(&qidx) {
                    *e += w * h * d.component(t, qi).norm_sqr();
                }
            }
        }
    };
    let stats = evolve_branch(
        net,
        program,
        layout,
        branch.bits,
        &mut branch.amps,
        t0,
        t1,
        opts,
        Some(&mut cb),
    )?;
    if grid.last() == Some(&t1) {
        if let Some(last) = samples.last_mut() {
            *last = comps.iter().map(|&c| branch.amps[c]).collect();
        }
    }
    Ok((samples, exposure, stats))
}
