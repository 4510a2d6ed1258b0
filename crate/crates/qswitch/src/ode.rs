//! Adaptive Dormand–Prince 8(5,3) integration of complex-valued systems.
//!
//! Error control follows Hairer's DOP853: the fifth-order estimate is
//! weighted against the third-order one, and accepted steps can expose a
//! seventh-order continuous extension for dense sampling.

use num_complex::Complex64;
use thiserror::Error;

/// Right-hand side of `y' = f(t, y)` over complex state vectors.
pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub tolerances: Tolerances,
    /// First trial step; estimated from the initial derivative when absent.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            initial_step: None,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub rhs_evals: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, other: Self) {
        self.rhs_evals += other.rhs_evals;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t:e}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {limit} steps at t = {t:e}")]
    TooManySteps { t: f64, limit: usize },
    #[error("non-finite state at t = {t:e}")]
    NonFinite { t: f64 },
    #[error("integration interval [{t0:e}, {t1:e}] is not forward")]
    BackwardInterval { t0: f64, t1: f64 },
    #[error("state has length {got}, system expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Continuous extension of one accepted step, valid on `[t0, t0 + h]`.
pub struct DenseStep<'a> {
    t0: f64,
    h: f64,
    rcont: &'a [Vec<Complex64>; 8],
}

impl DenseStep<'_> {
    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Interpolated value of component `i` at time `t`.
    pub fn component(&self, t: f64, i: usize) -> Complex64 {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = self.rcont;
        r[0][i]
            + (r[1][i]
                + (r[2][i]
                    + (r[3][i]
                        + (r[4][i] + (r[5][i] + (r[6][i] + r[7][i] * s) * s1) * s) * s1)
                        * s)
                    * s1)
                * s
    }

    /// Interpolated full state at time `t`.
    pub fn state(&self, t: f64, out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.component(t, i);
        }
    }
}

/// Integrates `y` from `t0` to `t1` in place.
///
/// When `observer` is given, dense coefficients are built for every accepted
/// step (three extra right-hand-side evaluations per step) and handed over in
/// time order. The final state equals the last step's endpoint exactly.
pub fn integrate<S: System + ?Sized>(
    sys: &S,
    t0: f64,
    t1: f64,
    y: &mut [Complex64],
    opts: &Options,
    mut observer: Option<&mut dyn FnMut(&DenseStep)>,
) -> Result<Stats, OdeError> {
    let n = sys.dim();
    if y.len() != n {
        return Err(OdeError::DimensionMismatch {
            got: y.len(),
            expected: n,
        });
    }
    if !(t1 >= t0) {
        return Err(OdeError::BackwardInterval { t0, t1 });
    }
    let mut stats = Stats::default();
    if t1 == t0 {
        return Ok(stats);
    }

    let tol = opts.tolerances;
    let mut w = Work::new(n);
    let mut t = t0;
    let span = t1 - t0;

    sys.rhs(t, y, &mut w.k1);
    stats.rhs_evals += 1;

    let mut h = match opts.initial_step {
        Some(h) if h > 0.0 => h.min(span),
        _ => {
            let (h, evals) = initial_step(sys, t, y, &w.k1.clone(), span, tol, &mut w);
            stats.rhs_evals += evals;
            h
        }
    };

    let mut controller = Controller::default();
    loop {
        let remaining = t1 - t;
        let last = h >= remaining * (1.0 - 1e-12) || t + h >= t1;
        if last {
            h = remaining;
        }
        if h <= f64::EPSILON * t.abs().max(span) * 0.1 {
            return Err(OdeError::StepUnderflow { t });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps {
                t,
                limit: opts.max_steps,
            });
        }

        w.stages(sys, t, y, h);
        stats.rhs_evals += 11;
        let err = w.error_norm(y, h, tol);
        if !err.is_finite() {
            return Err(OdeError::NonFinite { t });
        }

        match controller.propose(err, h) {
            Step::Accept(h_next) => {
                stats.accepted += 1;
                let t_new = if last { t1 } else { t + h };
                sys.rhs(t_new, &w.y_new, &mut w.k_new);
                stats.rhs_evals += 1;
                if let Some(obs) = observer.as_mut() {
                    w.dense(sys, t, y, h);
                    stats.rhs_evals += 3;
                    obs(&DenseStep {
                        t0: t,
                        h,
                        rcont: &w.rcont,
                    });
                }
                y.copy_from_slice(&w.y_new);
                std::mem::swap(&mut w.k1, &mut w.k_new);
                t = t_new;
                if last {
                    return Ok(stats);
                }
                h = h_next;
            }
            Step::Reject(h_retry) => {
                stats.rejected += 1;
                h = h_retry;
            }
        }
    }
}

fn initial_step<S: System + ?Sized>(
    sys: &S,
    t: f64,
    y: &[Complex64],
    f0: &[Complex64],
    h_max: f64,
    tol: Tolerances,
    w: &mut Work,
) -> (f64, usize) {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sk = tol.atol + tol.rtol * yi.norm();
        dnf += (fi.norm() / sk).powi(2);
        dny += (yi.norm() / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6 * h_max
    } else {
        0.01 * (dny / dnf).sqrt()
    };
    h = h.min(h_max);
    for ((yt, yi), fi) in w.y_tmp.iter_mut().zip(y).zip(f0) {
        *yt = yi + fi * h;
    }
    sys.rhs(t + h, &w.y_tmp, &mut w.k2);
    let mut der2 = 0.0;
    for ((yi, fi), f1) in y.iter().zip(f0).zip(&w.k2) {
        let sk = tol.atol + tol.rtol * yi.norm();
        der2 += ((f1 - fi).norm() / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6 * h_max)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    ((100.0 * h).min(h1).min(h_max), 1)
}

enum Step {
    Accept(f64),
    Reject(f64),
}

struct Controller {
    rejected_last: bool,
}

impl Default for Controller {
    fn default() -> Self {
        Self {
            rejected_last: false,
        }
    }
}

impl Controller {
    const SAFE: f64 = 0.9;
    const ALPHA: f64 = 1.0 / 8.0;
    const MIN_SCALE: f64 = 0.333;
    const MAX_SCALE: f64 = 6.0;

    fn propose(&mut self, err: f64, h: f64) -> Step {
        if err <= 1.0 {
            let mut scale = if err == 0.0 {
                Self::MAX_SCALE
            } else {
                (Self::SAFE * err.powf(-Self::ALPHA)).clamp(Self::MIN_SCALE, Self::MAX_SCALE)
            };
            if self.rejected_last {
                scale = scale.min(1.0);
            }
            self.rejected_last = false;
            Step::Accept(h * scale)
        } else {
            self.rejected_last = true;
            let scale = (Self::SAFE * err.powf(-Self::ALPHA)).max(Self::MIN_SCALE);
            Step::Reject(h * scale)
        }
    }
}

struct Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    k5: Vec<Complex64>,
    k6: Vec<Complex64>,
    k7: Vec<Complex64>,
    k8: Vec<Complex64>,
    k9: Vec<Complex64>,
    k10: Vec<Complex64>,
    k_new: Vec<Complex64>,
    y_tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
    rcont: [Vec<Complex64>; 8],
}

impl Work {
    fn new(n: usize) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); n];
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            k5: z(),
            k6: z(),
            k7: z(),
            k8: z(),
            k9: z(),
            k10: z(),
            k_new: z(),
            y_tmp: z(),
            y_new: z(),
            rcont: [z(), z(), z(), z(), z(), z(), z(), z()],
        }
    }

    /// Twelve-stage step; leaves the eighth-order update in `y_new` and the
    /// weighted stage sum in `k4`. Stage 11 lands in `k2`, stage 12 in `k3`.
    fn stages<S: System + ?Sized>(&mut self, sys: &S, t: f64, y: &[Complex64], h: f64) {
        use tableau::*;
        let n = y.len();
        for i in 0..n {
            self.y_tmp[i] = y[i] + self.k1[i] * (h * A21);
        }
        sys.rhs(t + C2 * h, &self.y_tmp, &mut self.k2);
        for i in 0..n {
            self.y_tmp[i] = y[i] + (self.k1[i] * A31 + self.k2[i] * A32) * h;
        }
        sys.rhs(t + C3 * h, &self.y_tmp, &mut self.k3);
        for i in 0..n {
            self.y_tmp[i] = y[i] + (self.k1[i] * A41 + self.k3[i] * A43) * h;
        }
        sys.rhs(t + C4 * h, &self.y_tmp, &mut self.k4);
        for i in 0..n {
            self.y_tmp[i] = y[i] + (self.k1[i] * A51 + self.k3[i] * A53 + self.k4[i] * A54) * h;
        }
        sys.rhs(t + C5 * h, &self.y_tmp, &mut self.k5);
        for i in 0..n {
            self.y_tmp[i] = y[i] + (self.k1[i] * A61 + self.k4[i] * A64 + self.k5[i] * A65) * h;
        }
        sys.rhs(t + C6 * h, &self.y_tmp, &mut self.k6);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A71 + self.k4[i] * A74 + self.k5[i] * A75 + self.k6[i] * A76) * h;
        }
        sys.rhs(t + C7 * h, &self.y_tmp, &mut self.k7);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A81
                    + self.k4[i] * A84
                    + self.k5[i] * A85
                    + self.k6[i] * A86
                    + self.k7[i] * A87)
                    * h;
        }
        sys.rhs(t + C8 * h, &self.y_tmp, &mut self.k8);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A91
                    + self.k4[i] * A94
                    + self.k5[i] * A95
                    + self.k6[i] * A96
                    + self.k7[i] * A97
                    + self.k8[i] * A98)
                    * h;
        }
        sys.rhs(t + C9 * h, &self.y_tmp, &mut self.k9);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A101
                    + self.k4[i] * A104
                    + self.k5[i] * A105
                    + self.k6[i] * A106
                    + self.k7[i] * A107
                    + self.k8[i] * A108
                    + self.k9[i] * A109)
                    * h;
        }
        sys.rhs(t + C10 * h, &self.y_tmp, &mut self.k10);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A111
                    + self.k4[i] * A114
                    + self.k5[i] * A115
                    + self.k6[i] * A116
                    + self.k7[i] * A117
                    + self.k8[i] * A118
                    + self.k9[i] * A119
                    + self.k10[i] * A1110)
                    * h;
        }
        sys.rhs(t + C11 * h, &self.y_tmp, &mut self.k2);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A121
                    + self.k4[i] * A124
                    + self.k5[i] * A125
                    + self.k6[i] * A126
                    + self.k7[i] * A127
                    + self.k8[i] * A128
                    + self.k9[i] * A129
                    + self.k10[i] * A1210
                    + self.k2[i] * A1211)
                    * h;
        }
        sys.rhs(t + h, &self.y_tmp, &mut self.k3);
        for i in 0..n {
            self.k4[i] = self.k1[i] * B1
                + self.k6[i] * B6
                + self.k7[i] * B7
                + self.k8[i] * B8
                + self.k9[i] * B9
                + self.k10[i] * B10
                + self.k2[i] * B11
                + self.k3[i] * B12;
            self.y_new[i] = y[i] + self.k4[i] * h;
        }
    }

    fn error_norm(&self, y: &[Complex64], h: f64, tol: Tolerances) -> f64 {
        use tableau::*;
        let n = y.len();
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for i in 0..n {
            let sk = tol.atol + tol.rtol * y[i].norm().max(self.y_new[i].norm());
            let e3 = self.k4[i] - self.k1[i] * BHH1 - self.k9[i] * BHH2 - self.k3[i] * BHH3;
            let e5 = self.k1[i] * ER1
                + self.k6[i] * ER6
                + self.k7[i] * ER7
                + self.k8[i] * ER8
                + self.k9[i] * ER9
                + self.k10[i] * ER10
                + self.k2[i] * ER11
                + self.k3[i] * ER12;
            err3 += (e3.norm() / sk).powi(2);
            err5 += (e5.norm() / sk).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        h.abs() * err5 * (1.0 / (n as f64 * deno)).sqrt()
    }

    /// Builds the continuous extension; requires `k_new = f(t + h, y_new)`.
    fn dense<S: System + ?Sized>(&mut self, sys: &S, t: f64, y: &[Complex64], h: f64) {
        use tableau::*;
        let n = y.len();
        for i in 0..n {
            let ydiff = self.y_new[i] - y[i];
            let bspl = self.k1[i] * h - ydiff;
            self.rcont[0][i] = y[i];
            self.rcont[1][i] = ydiff;
            self.rcont[2][i] = bspl;
            self.rcont[3][i] = ydiff - self.k_new[i] * h - bspl;
            self.rcont[4][i] = self.k1[i] * D41
                + self.k6[i] * D46
                + self.k7[i] * D47
                + self.k8[i] * D48
                + self.k9[i] * D49
                + self.k10[i] * D410
                + self.k2[i] * D411
                + self.k3[i] * D412;
            self.rcont[5][i] = self.k1[i] * D51
                + self.k6[i] * D56
                + self.k7[i] * D57
                + self.k8[i] * D58
                + self.k9[i] * D59
                + self.k10[i] * D510
                + self.k2[i] * D511
                + self.k3[i] * D512;
            self.rcont[6][i] = self.k1[i] * D61
                + self.k6[i] * D66
                + self.k7[i] * D67
                + self.k8[i] * D68
                + self.k9[i] * D69
                + self.k10[i] * D610
                + self.k2[i] * D611
                + self.k3[i] * D612;
            self.rcont[7][i] = self.k1[i] * D71
                + self.k6[i] * D76
                + self.k7[i] * D77
                + self.k8[i] * D78
                + self.k9[i] * D79
                + self.k10[i] * D710
                + self.k2[i] * D711
                + self.k3[i] * D712;
        }
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A141
                    + self.k7[i] * A147
                    + self.k8[i] * A148
                    + self.k9[i] * A149
                    + self.k10[i] * A1410
                    + self.k2[i] * A1411
                    + self.k3[i] * A1412
                    + self.k_new[i] * A1413)
                    * h;
        }
        sys.rhs(t + C14 * h, &self.y_tmp, &mut self.k10);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A151
                    + self.k6[i] * A156
                    + self.k7[i] * A157
                    + self.k8[i] * A158
                    + self.k2[i] * A1511
                    + self.k3[i] * A1512
                    + self.k_new[i] * A1513
                    + self.k10[i] * A1514)
                    * h;
        }
        sys.rhs(t + C15 * h, &self.y_tmp, &mut self.k2);
        for i in 0..n {
            self.y_tmp[i] = y[i]
                + (self.k1[i] * A161
                    + self.k6[i] * A166
                    + self.k7[i] * A167
                    + self.k8[i] * A168
                    + self.k9[i] * A169
                    + self.k_new[i] * A1613
                    + self.k10[i] * A1614
                    + self.k2[i] * A1615)
                    * h;
        }
        sys.rhs(t + C16 * h, &self.y_tmp, &mut self.k3);
        for i in 0..n {
            self.rcont[4][i] = (self.rcont[4][i]
                + self.k_new[i] * D413
                + self.k10[i] * D414
                + self.k2[i] * D415
                + self.k3[i] * D416)
                * h;
            self.rcont[5][i] = (self.rcont[5][i]
                + self.k_new[i] * D513
                + self.k10[i] * D514
                + self.k2[i] * D515
                + self.k3[i] * D516)
                * h;
            self.rcont[6][i] = (self.rcont[6][i]
                + self.k_new[i] * D613
                + self.k10[i] * D614
                + self.k2[i] * D615
                + self.k3[i] * D616)
                * h;
            self.rcont[7][i] = (self.rcont[7][i]
                + self.k_new[i] * D713
                + self.k10[i] * D714
                + self.k2[i] * D715
                + self.k3[i] * D716)
                * h;
        }
    }
}

#[allow(clippy::excessive_precision, clippy::unreadable_literal)]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488e-01;
    pub const C3: f64 = 0.789002279381515978178381316732e-01;
    pub const C4: f64 = 0.118350341907227396726757197510e+00;
    pub const C5: f64 = 0.281649658092772603273242802490e+00;
    pub const C6: f64 = 0.333333333333333333333333333333e+00;
    pub const C7: f64 = 0.25e+00;
    pub const C8: f64 = 0.307692307692307692307692307692e+00;
    pub const C9: f64 = 0.651282051282051282051282051282e+00;
    pub const C10: f64 = 0.6e+00;
    pub const C11: f64 = 0.857142857142857142857142857142e+00;
    pub const C14: f64 = 0.1e+00;
    pub const C15: f64 = 0.2e+00;
    pub const C16: f64 = 0.777777777777777777777777777778e+00;

    pub const B1: f64 = 5.42937341165687622380535766363e-2;
    pub const B6: f64 = 4.45031289275240888144113950566e0;
    pub const B7: f64 = 1.89151789931450038304281599044e0;
    pub const B8: f64 = -5.8012039600105847814672114227e0;
    pub const B9: f64 = 3.1116436695781989440891606237e-1;
    pub const B10: f64 = -1.52160949662516078556178806805e-1;
    pub const B11: f64 = 2.01365400804030348374776537501e-1;
    pub const B12: f64 = 4.47106157277725905176885569043e-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512e+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547e+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412e-01;

    pub const ER1: f64 = 0.1312004499419488073250102996e-01;
    pub const ER6: f64 = -0.1225156446376204440720569753e+01;
    pub const ER7: f64 = -0.4957589496572501915214079952e+00;
    pub const ER8: f64 = 0.1664377182454986536961530415e+01;
    pub const ER9: f64 = -0.3503288487499736816886487290e+00;
    pub const ER10: f64 = 0.3341791187130174790297318841e+00;
    pub const ER11: f64 = 0.8192320648511571246570742613e-01;
    pub const ER12: f64 = -0.2235530786388629525884427845e-01;

    pub const A21: f64 = 5.26001519587677318785587544488e-2;
    pub const A31: f64 = 1.97250569845378994544595329183e-2;
    pub const A32: f64 = 5.91751709536136983633785987549e-2;
    pub const A41: f64 = 2.95875854768068491816892993775e-2;
    pub const A43: f64 = 8.87627564304205475450678981324e-2;
    pub const A51: f64 = 2.41365134159266685502369798665e-1;
    pub const A53: f64 = -8.84549479328286085344864962717e-1;
    pub const A54: f64 = 9.24834003261792003115737966543e-1;
    pub const A61: f64 = 3.7037037037037037037037037037e-2;
    pub const A64: f64 = 1.70828608729473871279604482173e-1;
    pub const A65: f64 = 1.25467687566822425016691814123e-1;
    pub const A71: f64 = 3.7109375e-2;
    pub const A74: f64 = 1.70252211019544039314978060272e-1;
    pub const A75: f64 = 6.02165389804559606850219397283e-2;
    pub const A76: f64 = -1.7578125e-2;
    pub const A81: f64 = 3.70920001185047927108779319836e-2;
    pub const A84: f64 = 1.70383925712239993810214054705e-1;
    pub const A85: f64 = 1.07262030446373284651809199168e-1;
    pub const A86: f64 = -1.53194377486244017527936158236e-2;
    pub const A87: f64 = 8.27378916381402288758473766002e-3;
    pub const A91: f64 = 6.24110958716075717114429577812e-1;
    pub const A94: f64 = -3.36089262944694129406857109825e0;
    pub const A95: f64 = -8.68219346841726006818189891453e-1;
    pub const A96: f64 = 2.75920996994467083049415600797e1;
    pub const A97: f64 = 2.01540675504778934086186788979e1;
    pub const A98: f64 = -4.34898841810699588477366255144e1;
    pub const A101: f64 = 4.77662536438264365890433908527e-1;
    pub const A104: f64 = -2.48811461997166764192642586468e0;
    pub const A105: f64 = -5.90290826836842996371446475743e-1;
    pub const A106: f64 = 2.12300514481811942347288949897e1;
    pub const A107: f64 = 1.52792336328824235832596922938e1;
    pub const A108: f64 = -3.32882109689848629194453265587e1;
    pub const A109: f64 = -2.03312017085086261358222928593e-2;
    pub const A111: f64 = -9.3714243008598732571704021658e-1;
    pub const A114: f64 = 5.18637242884406370830023853209e0;
    pub const A115: f64 = 1.09143734899672957818500254654e0;
    pub const A116: f64 = -8.14978701074692612513997267357e0;
    pub const A117: f64 = -1.85200656599969598641566180701e1;
    pub const A118: f64 = 2.27394870993505042818970056734e1;
    pub const A119: f64 = 2.49360555267965238987089396762e0;
    pub const A1110: f64 = -3.0467644718982195003823669022e0;
    pub const A121: f64 = 2.27331014751653820792359768449e0;
    pub const A124: f64 = -1.05344954667372501984066689879e1;
    pub const A125: f64 = -2.00087205822486249909675718444e0;
    pub const A126: f64 = -1.79589318631187989172765950534e1;
    pub const A127: f64 = 2.79488845294199600508499808837e1;
    pub const A128: f64 = -2.85899827713502369474065508674e0;
    pub const A129: f64 = -8.87285693353062954433549289258e0;
    pub const A1210: f64 = 1.23605671757943030647266201528e1;
    pub const A1211: f64 = 6.43392746015763530355970484046e-1;

    pub const A141: f64 = 5.61675022830479523392909219681e-2;
    pub const A147: f64 = 2.53500210216624811088794765333e-1;
    pub const A148: f64 = -2.46239037470802489917441475441e-1;
    pub const A149: f64 = -1.24191423263816360469010140626e-1;
    pub const A1410: f64 = 1.5329179827876569731206322685e-1;
    pub const A1411: f64 = 8.20105229563468988491666602057e-3;
    pub const A1412: f64 = 7.56789766054569976138603589584e-3;
    pub const A1413: f64 = -8.298e-3;
    pub const A151: f64 = 3.18346481635021405060768473261e-2;
    pub const A156: f64 = 2.83009096723667755288322961402e-2;
    pub const A157: f64 = 5.35419883074385676223797384372e-2;
    pub const A158: f64 = -5.49237485713909884646569340306e-2;
    pub const A1511: f64 = -1.08347328697249322858509316994e-4;
    pub const A1512: f64 = 3.82571090835658412954920192323e-4;
    pub const A1513: f64 = -3.40465008687404560802977114492e-4;
    pub const A1514: f64 = 1.41312443674632500278074618366e-1;
    pub const A161: f64 = -4.28896301583791923408573538692e-1;
    pub const A166: f64 = -4.69762141536116384314449447206e0;
    pub const A167: f64 = 7.68342119606259904184240953878e0;
    pub const A168: f64 = 4.06898981839711007970213554331e0;
    pub const A169: f64 = 3.56727187455281109270669543021e-1;
    pub const A1613: f64 = -1.39902416515901462129418009734e-3;
    pub const A1614: f64 = 2.9475147891527723389556272149e0;
    pub const A1615: f64 = -9.15095847217987001081870187138e0;

    pub const D41: f64 = -0.84289382761090128651353491142e+01;
    pub const D46: f64 = 0.56671495351937776962531783590e+00;
    pub const D47: f64 = -0.30689499459498916912797304727e+01;
    pub const D48: f64 = 0.23846676565120698287728149680e+01;
    pub const D49: f64 = 0.21170345824450282767155149946e+01;
    pub const D410: f64 = -0.87139158377797299206789907490e+00;
    pub const D411: f64 = 0.22404374302607882758541771650e+01;
    pub const D412: f64 = 0.63157877876946881815570249290e+00;
    pub const D413: f64 = -0.88990336451333310820698117400e-01;
    pub const D414: f64 = 0.18148505520854727256656404962e+02;
    pub const D415: f64 = -0.91946323924783554000451984436e+01;
    pub const D416: f64 = -0.44360363875948939664310572000e+01;
    pub const D51: f64 = 0.10427508642579134603413151009e+02;
    pub const D56: f64 = 0.24228349177525818288430175319e+03;
    pub const D57: f64 = 0.16520045171727028198505394887e+03;
    pub const D58: f64 = -0.37454675472269020279518312152e+03;
    pub const D59: f64 = -0.22113666853125306036270938578e+02;
    pub const D510: f64 = 0.77334326684722638389603898808e+01;
    pub const D511: f64 = -0.30674084731089398182061213626e+02;
    pub const D512: f64 = -0.93321305264302278729567221706e+01;
    pub const D513: f64 = 0.15697238121770843886131091075e+02;
    pub const D514: f64 = -0.31139403219565177677282850411e+02;
    pub const D515: f64 = -0.93529243588444783865713862664e+01;
    pub const D516: f64 = 0.35816841486394083752465898540e+02;
    pub const D61: f64 = 0.19985053242002433820987653617e+02;
    pub const D66: f64 = -0.38703730874935176555105901742e+03;
    pub const D67: f64 = -0.18917813819516756882830838328e+03;
    pub const D68: f64 = 0.52780815920542364900561016686e+03;
    pub const D69: f64 = -0.11573902539959630126141871134e+02;
    pub const D610: f64 = 0.68812326946963000169666922661e+01;
    pub const D611: f64 = -0.10006050966910838403183860980e+01;
    pub const D612: f64 = 0.77771377980534432092869265740e+00;
    pub const D613: f64 = -0.27782057523535084065932004339e+01;
    pub const D614: f64 = -0.60196695231264120758267380846e+02;
    pub const D615: f64 = 0.84320405506677161018159903784e+02;
    pub const D616: f64 = 0.11992291136182789328035130030e+02;
    pub const D71: f64 = -0.25693933462703749003312586129e+02;
    pub const D76: f64 = -0.15418974869023643374053993627e+03;
    pub const D77: f64 = -0.23152937917604549567536039109e+03;
    pub const D78: f64 = 0.35763911791061412378285349910e+03;
    pub const D79: f64 = 0.93405324183624310003907691704e+02;
    pub const D710: f64 = -0.37458323136451633156875139351e+02;
    pub const D711: f64 = 0.10409964950896230045147246184e+03;
    pub const D712: f64 = 0.29840293426660503123344363579e+02;
    pub const D713: f64 = -0.43533456590011143754432175058e+02;
    pub const D714: f64 = 0.96324553959188282948394950600e+02;
    pub const D715: f64 = -0.39177261675615439165231486172e+02;
    pub const D716: f64 = -0.14972683625798562581422125276e+03;
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rotation {
        omega: f64,
    }

    impl System for Rotation {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
            dy[0] = Complex64::new(0.0, -self.omega) * y[0];
        }
    }

    #[test]
    fn rotation_matches_exponential() {
        let sys = Rotation { omega: 3.0 };
        let mut y = [Complex64::new(1.0, 0.0)];
        integrate(&sys, 0.0, 10.0, &mut y, &Options::default(), None).unwrap();
        let exact = Complex64::new(0.0, -30.0).exp();
        assert!((y[0] - exact).norm() < 1e-8, "{}", (y[0] - exact).norm());
    }

    #[test]
    fn dense_output_matches_exponential() {
        let sys = Rotation { omega: 2.0 };
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut worst = 0.0f64;
        let mut steps = 0;
        let mut obs = |d: &DenseStep| {
            steps += 1;
            for j in 0..=10 {
                let t = d.start() + d.step() * j as f64 / 10.0;
                let exact = Complex64::new(0.0, -2.0 * t).exp();
                worst = worst.max((d.component(t, 0) - exact).norm());
            }
        };
        integrate(&sys, 0.0, 5.0, &mut y, &Options::default(), Some(&mut obs)).unwrap();
        assert!(steps > 1);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn zero_length_interval_is_identity() {
        let sys = Rotation { omega: 1.0 };
        let mut y = [Complex64::new(0.3, 0.4)];
        let stats = integrate(&sys, 1.0, 1.0, &mut y, &Options::default(), None).unwrap();
        assert_eq!(stats.rhs_evals, 0);
        assert_eq!(y[0], Complex64::new(0.3, 0.4));
    }

    #[test]
    fn backward_interval_rejected() {
        let sys = Rotation { omega: 1.0 };
        let mut y = [Complex64::new(1.0, 0.0)];
        let err = integrate(&sys, 1.0, 0.0, &mut y, &Options::default(), None).unwrap_err();
        assert!(matches!(err, OdeError::BackwardInterval { .. }));
    }
}
