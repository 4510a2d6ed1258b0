//! Executes a resolved configuration and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use qswitch::analysis::{protocol_fidelity, reduce, sweep_optimal_tau, SweepResult};
use qswitch::emitter::oracle_battery;
use qswitch::network::{Component, Network, Observation};
use qswitch::noise::{bootstrap_fidelity, run_ensemble, BootstrapSpec, NoiseSpec};
use qswitch::ode::Options;
use qswitch::protocols::{
    apply_w_schedule, calibrate_ghz, plan_bell, plan_ghz, plan_qst, plan_route, plan_w,
    predicted_ghz_fidelity, predicted_route, route_outcome, w_shift_schedule, w_total_duration,
    ProtocolPlan, RouteOrder, GUARD_GAP_KAPPA,
};
use toml::{Table, Value};

use crate::config::{micros, nanos, ExperimentConfig, ExperimentName, SweepTarget, Tau};
use crate::output::{schema_version, Cell, CsvTable, RunLog};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "QSWITCH_OUT";
pub const DEFAULT_OUT: &str = "qswitch-out";

pub const EMITTER_CHECK_RATIOS: [f64; 6] = [0.0, 0.3, 1.0, 2.0, 5.0, 20.0];
pub const EMITTER_CHECK_TOLERANCE: f64 = 1e-8;
const EMITTER_CHECK_POINTS: usize = 801;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub tables: Vec<&'static str>,
    /// Checks that did not meet their tolerance (`emitter-check` only).
    pub failed_checks: usize,
}

/// `--out`, then the configured directory, then `QSWITCH_OUT`, then
/// [`DEFAULT_OUT`].
pub fn output_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn uses_w(cfg: &ExperimentConfig) -> bool {
    cfg.protocol.name == ExperimentName::W
        || (cfg.protocol.name == ExperimentName::SweepT1 && cfg.protocol.target == SweepTarget::W)
}

/// Fills every default that depends on other fields, so the result
/// serializes to a complete manifest. Idempotent.
pub fn resolve(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut r = cfg.clone();
    r.derived = None;
    if r.network.chi_over_kappa.is_none() {
        let mut chi = vec![1.0; r.network.switches()];
        if uses_w(&r) {
            apply_w_schedule(&mut chi, 1.0);
        }
        r.network.chi_over_kappa = Some(chi);
    }
    if r.noise.p_loss.is_none() && r.noise.attenuation_db_per_km.is_none() {
        r.noise.p_loss = Some(crate::config::DEFAULT_P_LOSS);
    }
    r.monte_carlo.sample_size = Some(r.monte_carlo.sample_size());
    r
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    opts: Options,
    log: RunLog,
    derived: Table,
    tables: Vec<CsvTable>,
    failed_checks: usize,
}

/// Runs the experiment named in `cfg` and writes `manifest.toml`, the result
/// tables and `run.log` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let errors = cfg.semantic_errors();
    if !errors.is_empty() {
        return Err(crate::schema::SchemaErrors(errors).into());
    }
    let cfg = resolve(cfg);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut ctx = Ctx {
        cfg: &cfg,
        opts: Options::default(),
        log: RunLog::default(),
        derived: Table::new(),
        tables: Vec::new(),
        failed_checks: 0,
    };
    ctx.log.line(format!(
        "qswitch {} experiment={} seed={} trajectories={}",
        env!("CARGO_PKG_VERSION"),
        cfg.protocol.name,
        cfg.monte_carlo.seed,
        cfg.monte_carlo.trajectories
    ));
    let start = Instant::now();
    let result = match cfg.monte_carlo.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(|| execute(&mut ctx)),
        None => execute(&mut ctx),
    };
    if let Err(e) = &result {
        ctx.log.line(format!("error: {e:#}"));
    }
    ctx.log.line(format!("elapsed {:.3} s", start.elapsed().as_secs_f64()));
    let written: Vec<&'static str> = ctx.tables.iter().map(|t| t.file).collect();
    if result.is_ok() {
        for t in &ctx.tables {
            t.write(out_dir)?;
        }
        let mut schemas = Table::new();
        for f in &written {
            schemas.insert((*f).into(), Value::Integer(schema_version(f).unwrap_or(0) as i64));
        }
        ctx.derived.insert("schemas".into(), Value::Table(schemas));
        write_manifest(&cfg, &ctx.derived, out_dir)?;
    }
    ctx.log.write(out_dir)?;
    result?;
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        tables: written,
        failed_checks: ctx.failed_checks,
    })
}

fn write_manifest(cfg: &ExperimentConfig, derived: &Table, dir: &Path) -> Result<()> {
    let mut text = cfg.to_toml();
    let mut wrapper = Table::new();
    wrapper.insert("derived".into(), Value::Table(derived.clone()));
    text.push('\n');
    text.push_str(&toml::to_string(&wrapper).context("serializing derived values")?);
    let path = dir.join("manifest.toml");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn floats(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(Value::Float).collect())
}

fn execute(ctx: &mut Ctx) -> Result<()> {
    let net = build_network(ctx, None)?;
    match ctx.cfg.protocol.name {
        ExperimentName::Qst => run_qst(ctx, &net),
        ExperimentName::Bell | ExperimentName::Ghz | ExperimentName::W => {
            let t1 = ctx.cfg.noise.t1_us;
            let tau = single_tau(ctx, &net, ctx.cfg.protocol.name)?;
            let row = fidelity_point(ctx, &net, ctx.cfg.protocol.name, tau, t1)?;
            let mut t = CsvTable::new("fidelity.csv", FIDELITY_HEADER);
            t.push(row);
            ctx.tables.push(t);
            Ok(())
        }
        ExperimentName::Route => run_route(ctx, &net),
        ExperimentName::SweepTau => run_sweep_tau(ctx, &net),
        ExperimentName::SweepChi => run_sweep_chi(ctx),
        ExperimentName::SweepT1 => run_sweep_t1(ctx, &net),
        ExperimentName::EmitterCheck => run_emitter_check(ctx, &net),
    }
}

/// Network from the configuration, with the first switch shift replaced
/// when `chi0` is given.
fn build_network(ctx: &mut Ctx, chi0: Option<f64>) -> Result<Network> {
    let mut ncfg = ctx.cfg.network.clone();
    if let Some(x) = chi0 {
        let mut chi = ncfg.chi_ratios();
        chi[0] = x;
        ncfg.chi_over_kappa = Some(chi);
    }
    let net = Network::new(ncfg.to_spec()).context("building network")?;
    if chi0.is_none() {
        record_network(ctx, &net);
    }
    Ok(net)
}

fn record_network(ctx: &mut Ctx, net: &Network) {
    let d = net.derived();
    let k = net.kappa();
    let mut t = Table::new();
    t.insert("kappa_rad_s".into(), Value::Float(k));
    t.insert("omega_tr_rad_s".into(), Value::Float(net.spec().omega_tr));
    t.insert("chi_rad_s".into(), floats(net.spec().chi.iter().copied()));
    t.insert("group_velocity_m_s".into(), Value::Float(d.group_velocity));
    t.insert("propagation_time_ns".into(), Value::Float(d.propagation_time * 1e9));
    t.insert(
        "free_spectral_range_mhz".into(),
        Value::Float(d.free_spectral_range / (2.0 * std::f64::consts::PI * 1e6)),
    );
    t.insert("nearest_detuning_over_kappa".into(), Value::Float(d.nearest_detuning / k));
    t.insert("modes_per_link".into(), Value::Integer(d.modes_per_link as i64));
    t.insert("mode_set_size".into(), Value::Integer((d.modes_per_link * net.links()) as i64));
    t.insert("self_shift_over_kappa".into(), Value::Float(d.self_shift / k));
    t.insert("cross_shift_over_kappa".into(), Value::Float(d.cross_shift / k));
    ctx.derived.insert("network".into(), Value::Table(t));
    let p_loss = ctx.cfg.noise.loss_probability(ctx.cfg.network.length_m);
    ctx.derived.insert("p_loss".into(), Value::Float(p_loss));
    if uses_w(ctx.cfg) {
        let n = net.nodes();
        ctx.derived.insert("w_shift_schedule_over_kappa".into(), floats(w_shift_schedule(n, 1.0)));
        ctx.derived.insert("w_shift_schedule_rad_s".into(), floats(w_shift_schedule(n, k)));
    }
    ctx.log.line(format!(
        "network: {} nodes, {} modes per link, t_p = {:.3} ns, v_g = {:.6e} m/s",
        net.nodes(),
        d.modes_per_link,
        d.propagation_time * 1e9,
        d.group_velocity
    ));
}

fn noise(ctx: &Ctx, t1_us: f64) -> NoiseSpec {
    let mut n = ctx.cfg.noise.to_spec(ctx.cfg.network.length_m);
    n.t1 = micros(t1_us);
    n
}

fn tau_sweep(ctx: &mut Ctx, net: &Network, t1_us: &[f64]) -> Result<SweepResult> {
    let grid = ctx.cfg.protocol.tau_grid.points(net.kappa(), net.propagation_time());
    let t1: Vec<f64> = t1_us.iter().copied().map(micros).collect();
    let p_loss = ctx.cfg.noise.loss_probability(ctx.cfg.network.length_m);
    let start = Instant::now();
    let sw = sweep_optimal_tau(net, &t1, &grid, p_loss, &ctx.opts).context(
        "locating tau_opt; widen protocol.tau_grid or give tau_ns explicitly (tau_opt needs a finite t1_us)",
    )?;
    ctx.log.line(format!(
        "tau sweep: {} durations x {} T1 values in {:.2} s",
        grid.len(),
        t1.len(),
        start.elapsed().as_secs_f64()
    ));
    Ok(sw)
}

/// Total duration of `exp` when every transfer window lasts `window`.
fn duration_from_window(ctx: &Ctx, net: &Network, exp: ExperimentName, window: f64) -> f64 {
    let k = net.kappa();
    match exp {
        ExperimentName::W => w_total_duration(net.nodes(), window, k),
        ExperimentName::Route if ctx.cfg.protocol.order != RouteOrder::SimultaneousSplit => {
            2.0 * window + GUARD_GAP_KAPPA / k
        }
        _ => window,
    }
}

/// Durations for `exp` at each `T₁`; `auto` uses one shared sweep.
fn taus_for(ctx: &mut Ctx, net: &Network, exp: ExperimentName, t1_us: &[f64]) -> Result<Vec<f64>> {
    match ctx.cfg.protocol.tau_ns {
        Tau::Ns(x) => Ok(vec![nanos(x); t1_us.len()]),
        Tau::Auto => {
            let sw = tau_sweep(ctx, net, t1_us)?;
            let taus: Vec<f64> = sw
                .tau_opt
                .iter()
                .map(|&w| duration_from_window(ctx, net, exp, w))
                .collect();
            ctx.derived.insert(
                "tau_opt_ns".into(),
                floats(sw.tau_opt.iter().map(|t| t * 1e9)),
            );
            ctx.derived.insert("tau_t1_us".into(), floats(t1_us.iter().copied()));
            Ok(taus)
        }
    }
}

fn single_tau(ctx: &mut Ctx, net: &Network, exp: ExperimentName) -> Result<f64> {
    let t1 = ctx.cfg.noise.t1_us;
    let tau = taus_for(ctx, net, exp, &[t1])?[0];
    ctx.derived.insert("tau_ns".into(), Value::Float(tau * 1e9));
    ctx.log.line(format!("tau = {:.4} ns", tau * 1e9));
    Ok(tau)
}

const FIDELITY_HEADER: &[&str] = &[
    "experiment",
    "nodes",
    "chi_over_kappa",
    "t1_s",
    "p_loss",
    "tau_s",
    "trajectories",
    "resamples",
    "sample_size",
    "seed",
    "jumps",
    "fidelity_coherent",
    "fidelity_mean",
    "fidelity_stddev",
];

fn plan_for(ctx: &Ctx, net: &Network, exp: ExperimentName, tau: f64) -> Result<ProtocolPlan> {
    let plan = match exp {
        ExperimentName::Bell => plan_bell(net, tau)
            .context("bell needs network.chi_over_kappa[0] = 1 (chi = kappa on the emitter switch)")?,
        ExperimentName::Ghz => {
            let cal = calibrate_ghz(net, tau, &ctx.opts).context("calibrating GHZ phases")?;
            plan_ghz(net, tau, &cal)?
        }
        ExperimentName::W => plan_w(net, tau)
            .context("w needs chi_over_kappa = 1/sqrt(N-k) on the emitting switch of stage k")?,
        other => bail!("{other} is not an entangling protocol"),
    };
    Ok(plan)
}

/// Coherent and noisy fidelity of one protocol run, as a fidelity row.
fn fidelity_point(ctx: &mut Ctx, net: &Network, exp: ExperimentName, tau: f64, t1_us: f64) -> Result<Vec<Cell>> {
    let start = Instant::now();
    let plan = plan_for(ctx, net, exp, tau)?;
    let noise = noise(ctx, t1_us);
    let (state, _) = plan.simulate(net, &ctx.opts, None).context("coherent run")?;
    let rho = reduce(&state, &plan.labels)?;
    let f_coh = protocol_fidelity(&plan, &rho, 0.0)?;
    let mc = &ctx.cfg.monte_carlo;
    let ens = run_ensemble(net, &plan, &noise, mc.trajectories, mc.seed, &ctx.opts).context("trajectory ensemble")?;
    let rhos = ens.reduced(&plan.labels)?;
    let spec = BootstrapSpec {
        resamples: mc.resamples,
        sample_size: mc.sample_size(),
        master_seed: mc.seed,
    };
    let b = bootstrap_fidelity(&rhos, |r| protocol_fidelity(&plan, r, noise.p_loss), &spec)?;
    let chi0 = net.spec().chi[0] / net.kappa();
    ctx.log.line(format!(
        "{exp}: chi/kappa = {chi0}, T1 = {t1_us} us, tau = {:.4} ns, F_coherent = {f_coh:.6}, F = {:.6} +- {:.2e}, {} jumps, {:.2} s",
        tau * 1e9,
        b.mean,
        b.stddev,
        ens.jump_count(),
        start.elapsed().as_secs_f64()
    ));
    Ok(vec![
        exp.as_str().into(),
        net.nodes().into(),
        chi0.into(),
        noise.t1.into(),
        noise.p_loss.into(),
        tau.into(),
        mc.trajectories.into(),
        mc.resamples.into(),
        mc.sample_size().into(),
        mc.seed.into(),
        ens.jump_count().into(),
        f_coh.into(),
        b.mean.into(),
        b.stddev.into(),
    ])
}

fn sweep_tables(sw: &SweepResult) -> (CsvTable, CsvTable) {
    let mut curves = CsvTable::new(
        "sweep_tau.csv",
        &["tau_s", "t1_s", "p_loss", "fidelity_coherent", "exposure_s", "fidelity_decohered"],
    );
    for (i, &t1) in sw.t1.iter().enumerate() {
        for (k, &tau) in sw.taus.iter().enumerate() {
            curves.push(vec![
                tau.into(),
                t1.into(),
                sw.p_loss.into(),
                sw.coherent[k].into(),
                sw.exposure[k].into(),
                sw.decohered[i][k].into(),
            ]);
        }
    }
    let mut opt = CsvTable::new("tau_opt.csv", &["t1_s", "tau_opt_s", "fidelity_opt", "infidelity_opt"]);
    for (i, &t1) in sw.t1.iter().enumerate() {
        opt.push(vec![
            t1.into(),
            sw.tau_opt[i].into(),
            sw.fidelity_opt[i].into(),
            (1.0 - sw.fidelity_opt[i]).into(),
        ]);
    }
    (curves, opt)
}

fn run_qst(ctx: &mut Ctx, net: &Network) -> Result<()> {
    let t1_us = ctx.cfg.noise.t1_us;
    let tau = match ctx.cfg.protocol.tau_ns {
        Tau::Ns(x) => nanos(x),
        Tau::Auto => {
            let sw = tau_sweep(ctx, net, &[t1_us])?;
            let (curves, opt) = sweep_tables(&sw);
            ctx.tables.push(curves);
            ctx.tables.push(opt);
            sw.tau_opt[0]
        }
    };
    ctx.derived.insert("tau_ns".into(), Value::Float(tau * 1e9));
    let plan = plan_qst(net, tau)?;
    let layout = plan.layout(net);
    let points = ctx.cfg.protocol.trace_points;
    let grid: Vec<f64> = (0..points)
        .map(|i| plan.start() + plan.tau * i as f64 / (points - 1) as f64)
        .collect();
    let comps = vec![layout.qubit(0), layout.qubit(1)];
    let mut obs = Observation::sampling(grid.clone(), comps).with_exposure();
    let (state, stats) = plan.simulate(net, &ctx.opts, Some(&mut obs))?;
    let f = state.population(Component::Qubit(1));
    let exposure = obs.exposure[0][0] + obs.exposure[0][1];
    let noise = noise(ctx, t1_us);
    let f_dec = qswitch::analysis::qst_decohered_fidelity(f, exposure, 0.0, noise.t1, noise.p_loss);
    ctx.log.line(format!(
        "qst: tau = {:.4} ns, 1 - F = {:.3e}, exposure = {:.4e} s, decohered 1 - F = {:.3e}, {} rhs evaluations",
        tau * 1e9,
        1.0 - f,
        exposure,
        1.0 - f_dec,
        stats.rhs_evals
    ));
    let mut t = CsvTable::new(
        "qst.csv",
        &["tau_s", "fidelity_coherent", "exposure_s", "t1_s", "p_loss", "fidelity_decohered"],
    );
    t.push(vec![
        tau.into(),
        f.into(),
        exposure.into(),
        noise.t1.into(),
        noise.p_loss.into(),
        f_dec.into(),
    ]);
    ctx.tables.push(t);
    let mut trace = CsvTable::new("qst_trace.csv", &["t_s", "q1_population", "q2_population"]);
    for (i, &t) in grid.iter().enumerate() {
        let s = &obs.samples[0][i];
        trace.push(vec![t.into(), s[0].norm_sqr().into(), s[1].norm_sqr().into()]);
    }
    ctx.tables.push(trace);
    Ok(())
}

fn run_route(ctx: &mut Ctx, net: &Network) -> Result<()> {
    let order = ctx.cfg.protocol.order;
    let open = ctx.cfg.protocol.open;
    let tau = single_tau(ctx, net, ExperimentName::Route)?;
    let plan = plan_route(net, tau, order, (open[0], open[1]))?;
    let (state, _) = plan.simulate(net, &ctx.opts, None)?;
    let o = route_outcome(&state);
    let chi = &net.spec().chi;
    let p = predicted_route(order, (open[0], open[1]), (chi[1], chi[2]), net.kappa());
    ctx.log.line(format!(
        "route {order:?} open={open:?}: left {:.6}, right {:.6}, emitter {:.6}",
        o.left, o.right, o.emitter
    ));
    let mut t = CsvTable::new(
        "route.csv",
        &[
            "order",
            "open_left",
            "open_right",
            "tau_s",
            "left",
            "right",
            "emitter",
            "predicted_left",
            "predicted_right",
            "predicted_emitter",
        ],
    );
    let order_name = match order {
        RouteOrder::LeftFirst => "left_first",
        RouteOrder::RightFirst => "right_first",
        RouteOrder::SimultaneousSplit => "simultaneous_split",
    };
    t.push(vec![
        order_name.into(),
        open[0].into(),
        open[1].into(),
        tau.into(),
        o.left.into(),
        o.right.into(),
        o.emitter.into(),
        p.left.into(),
        p.right.into(),
        p.emitter.into(),
    ]);
    ctx.tables.push(t);
    Ok(())
}

fn run_sweep_tau(ctx: &mut Ctx, net: &Network) -> Result<()> {
    let t1 = ctx.cfg.protocol.t1_us_list.clone();
    let sw = tau_sweep(ctx, net, &t1)?;
    for (i, t) in t1.iter().enumerate() {
        ctx.log.line(format!(
            "T1 = {t} us: tau_opt = {:.3} ns, 1 - F = {:.4e}",
            sw.tau_opt[i] * 1e9,
            1.0 - sw.fidelity_opt[i]
        ));
    }
    let (curves, opt) = sweep_tables(&sw);
    ctx.tables.push(curves);
    ctx.tables.push(opt);
    Ok(())
}

fn run_sweep_chi(ctx: &mut Ctx) -> Result<()> {
    let base = build_network(ctx, None)?;
    let t1 = ctx.cfg.protocol.t1_us_list.clone();
    let taus = taus_for(ctx, &base, ExperimentName::Ghz, &t1)?;
    let mut header = FIDELITY_HEADER.to_vec();
    header.push("fidelity_predicted");
    let mut t = CsvTable::new("sweep_chi.csv", &header);
    for x in ctx.cfg.protocol.chi_over_kappa_list.clone() {
        let net = build_network(ctx, Some(x))?;
        for (i, &t1_us) in t1.iter().enumerate() {
            let mut row = fidelity_point(ctx, &net, ExperimentName::Ghz, taus[i], t1_us)?;
            row.push(predicted_ghz_fidelity(x * net.kappa(), net.kappa()).into());
            t.push(row);
        }
    }
    ctx.tables.push(t);
    Ok(())
}

fn run_sweep_t1(ctx: &mut Ctx, net: &Network) -> Result<()> {
    let exp = ctx.cfg.protocol.target.experiment();
    let t1 = ctx.cfg.protocol.t1_us_list.clone();
    let taus = taus_for(ctx, net, exp, &t1)?;
    let mut t = CsvTable::new("sweep_t1.csv", FIDELITY_HEADER);
    for (i, &t1_us) in t1.iter().enumerate() {
        let row = fidelity_point(ctx, net, exp, taus[i], t1_us)?;
        t.push(row);
    }
    ctx.tables.push(t);
    Ok(())
}

fn run_emitter_check(ctx: &mut Ctx, net: &Network) -> Result<()> {
    let checks = oracle_battery(
        net.kappa(),
        &EMITTER_CHECK_RATIOS,
        EMITTER_CHECK_POINTS,
        EMITTER_CHECK_TOLERANCE,
        &ctx.opts,
    )?;
    let mut t = CsvTable::new(
        "emitter_check.csv",
        &["check", "chi_over_kappa", "deviation", "tolerance", "pass"],
    );
    for c in &checks {
        let pass = c.passed();
        if !pass {
            ctx.failed_checks += 1;
        }
        let line = format!(
            "{:<20} chi/kappa = {:<5} deviation = {:.3e}  {}",
            c.name,
            c.chi_over_kappa,
            c.deviation,
            if pass { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        ctx.log.record(line);
        t.push(vec![
            c.name.into(),
            c.chi_over_kappa.into(),
            c.deviation.into(),
            c.tolerance.into(),
            pass.into(),
        ]);
    }
    ctx.tables.push(t);
    Ok(())
}
