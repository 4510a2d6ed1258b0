use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qswitch_cli::config::ExperimentConfig;
use qswitch_cli::runner;
use qswitch_cli::schema::SchemaErrors;
use toml::{Table, Value};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECKS: u8 = 3;

#[derive(Parser)]
#[command(name = "qswitch", version, about = "Simulate quantum state transfer and entanglement generation through dispersive switches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Configuration file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of the trajectory and bootstrap streams
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Number of Monte Carlo trajectories
    #[arg(long)]
    trajectories: Option<usize>,
    /// Output directory [default: $QSWITCH_OUT or qswitch-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Qubit relaxation time in microseconds (`inf` disables relaxation)
    #[arg(long)]
    t1_us: Option<f64>,
    /// Photon loss probability per link
    #[arg(long)]
    p_loss: Option<f64>,
    /// Protocol duration in nanoseconds, or `auto` for the decay-limited optimum
    #[arg(long)]
    tau_ns: Option<String>,
    /// Bootstrap resamples
    #[arg(long)]
    resamples: Option<usize>,
    /// Trajectories averaged per bootstrap resample
    #[arg(long)]
    sample_size: Option<usize>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    LeftFirst,
    RightFirst,
    SimultaneousSplit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Bell,
    Ghz,
    W,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a configuration file
    Run {
        /// Configuration or manifest file
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Coherent state transfer with population trace
    Qst {
        #[command(flatten)]
        common: Common,
    },
    /// Bell pair between the first two nodes
    Bell {
        #[command(flatten)]
        common: Common,
    },
    /// GHZ state of two nodes and the emitter's switch
    Ghz {
        #[command(flatten)]
        common: Common,
        /// Dispersive shift of the emitter's switch in units of kappa
        #[arg(long)]
        chi_over_kappa: Option<f64>,
    },
    /// W state across a chain of nodes
    W {
        #[command(flatten)]
        common: Common,
        /// Number of nodes
        #[arg(long)]
        n: Option<usize>,
    },
    /// Routing from the central node of a three-node chain
    Route {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        order: Option<Order>,
        /// Excite the central node's left switch
        #[arg(long)]
        open_left: Option<bool>,
        /// Excite the central node's right switch
        #[arg(long)]
        open_right: Option<bool>,
    },
    /// Transfer infidelity against duration and the optimum per T1
    SweepTau {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        t1_us_list: Option<Vec<f64>>,
    },
    /// GHZ fidelity against the switch shift
    SweepChi {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        chi_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        t1_us_list: Option<Vec<f64>>,
    },
    /// Entangling fidelity against T1
    SweepT1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long, value_delimiter = ',')]
        t1_us_list: Option<Vec<f64>>,
    },
    /// Compare the emitter integration with its closed form
    EmitterCheck {
        #[command(flatten)]
        common: Common,
    },
}

/// The table under `name`, created if absent; `None` when the document
/// already holds a non-table there, which the schema check reports.
fn section<'a>(table: &'a mut Table, name: &str) -> Option<&'a mut Table> {
    table
        .entry(name.to_string())
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
}

fn set(table: &mut Table, sec: &str, key: &str, v: Option<Value>) {
    if let (Some(v), Some(t)) = (v, section(table, sec)) {
        t.insert(key.into(), v);
    }
}

fn float_list(xs: &Option<Vec<f64>>) -> Option<Value> {
    xs.as_ref()
        .map(|v| Value::Array(v.iter().map(|x| Value::Float(*x)).collect()))
}

fn load(path: Option<&Path>) -> Result<Table, SchemaErrors> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| SchemaErrors(vec![format!("reading {}: {e}", path.display())]))?;
    text.parse::<Table>()
        .map_err(|e| SchemaErrors(vec![format!("{}: {}", path.display(), e.message())]))
}

fn apply_common(t: &mut Table, c: &Common) {
    set(t, "monte_carlo", "seed", c.seed.map(|s| Value::Integer(s as i64)));
    set(t, "monte_carlo", "trajectories", c.trajectories.map(|n| Value::Integer(n as i64)));
    set(t, "monte_carlo", "resamples", c.resamples.map(|n| Value::Integer(n as i64)));
    set(t, "monte_carlo", "sample_size", c.sample_size.map(|n| Value::Integer(n as i64)));
    set(t, "monte_carlo", "threads", c.threads.map(|n| Value::Integer(n as i64)));
    set(t, "noise", "t1_us", c.t1_us.map(Value::Float));
    set(t, "noise", "p_loss", c.p_loss.map(Value::Float));
    set(
        t,
        "protocol",
        "tau_ns",
        c.tau_ns.as_ref().map(|s| match s.parse::<f64>() {
            Ok(x) => Value::Float(x),
            Err(_) => Value::String(s.clone()),
        }),
    );
}

/// Builds the document for one invocation: file contents, then flags.
fn assemble(cmd: &Command) -> Result<(Table, &Common), SchemaErrors> {
    let (name, common) = match cmd {
        Command::Run { file, common } => {
            if common.config.is_some() {
                return Err(SchemaErrors(vec!["run takes the configuration as its argument; drop --config".into()]));
            }
            let mut t = load(Some(file))?;
            apply_common(&mut t, common);
            return Ok((t, common));
        }
        Command::Qst { common } => ("qst", common),
        Command::Bell { common } => ("bell", common),
        Command::Ghz { common, .. } => ("ghz", common),
        Command::W { common, .. } => ("w", common),
        Command::Route { common, .. } => ("route", common),
        Command::SweepTau { common, .. } => ("sweep-tau", common),
        Command::SweepChi { common, .. } => ("sweep-chi", common),
        Command::SweepT1 { common, .. } => ("sweep-t1", common),
        Command::EmitterCheck { common } => ("emitter-check", common),
    };
    let mut t = load(common.config.as_deref())?;
    set(&mut t, "protocol", "name", Some(Value::String(name.into())));
    apply_common(&mut t, common);
    match cmd {
        Command::Ghz { chi_over_kappa: Some(x), .. } => {
            let Some(net) = section(&mut t, "network") else {
                return Ok((t, common));
            };
            let nodes = net.get("nodes").and_then(Value::as_integer).unwrap_or(3).max(2) as usize;
            let mut chi: Vec<Value> = match net.get("chi_over_kappa") {
                Some(Value::Array(a)) => a.clone(),
                _ => vec![Value::Float(1.0); 2 * (nodes - 1)],
            };
            if chi.is_empty() {
                chi.push(Value::Float(*x));
            } else {
                chi[0] = Value::Float(*x);
            }
            net.insert("chi_over_kappa".into(), Value::Array(chi));
        }
        Command::W { n, .. } => set(&mut t, "network", "nodes", n.map(|n| Value::Integer(n as i64))),
        Command::Route {
            order,
            open_left,
            open_right,
            ..
        } => {
            let order = order.map(|o| {
                Value::String(
                    match o {
                        Order::LeftFirst => "left_first",
                        Order::RightFirst => "right_first",
                        Order::SimultaneousSplit => "simultaneous_split",
                    }
                    .into(),
                )
            });
            set(&mut t, "protocol", "order", order);
            if open_left.is_some() || open_right.is_some() {
                let current = section(&mut t, "protocol")
                    .and_then(|p| p.get("open"))
                    .and_then(Value::as_array)
                    .cloned()
                    .unwrap_or_else(|| vec![Value::Boolean(true), Value::Boolean(true)]);
                let pick = |flag: &Option<bool>, i: usize| {
                    flag.map(Value::Boolean)
                        .or_else(|| current.get(i).cloned())
                        .unwrap_or(Value::Boolean(true))
                };
                let open = vec![pick(open_left, 0), pick(open_right, 1)];
                set(&mut t, "protocol", "open", Some(Value::Array(open)));
            }
        }
        Command::SweepTau { t1_us_list, .. } => set(&mut t, "protocol", "t1_us_list", float_list(t1_us_list)),
        Command::SweepChi {
            chi_list, t1_us_list, ..
        } => {
            set(&mut t, "protocol", "chi_over_kappa_list", float_list(chi_list));
            set(&mut t, "protocol", "t1_us_list", float_list(t1_us_list));
        }
        Command::SweepT1 {
            target, t1_us_list, ..
        } => {
            let target = target.map(|x| {
                Value::String(
                    match x {
                        Target::Bell => "bell",
                        Target::Ghz => "ghz",
                        Target::W => "w",
                    }
                    .into(),
                )
            });
            set(&mut t, "protocol", "target", target);
            set(&mut t, "protocol", "t1_us_list", float_list(t1_us_list));
        }
        _ => {}
    }
    Ok((t, common))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (table, common) = match assemble(&cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cfg = match ExperimentConfig::from_table(table) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = runner::output_dir(common.out.as_deref(), &cfg);
    match runner::run(&cfg, &out) {
        Ok(o) => {
            println!("results in {} ({})", o.out_dir.display(), o.tables.join(", "));
            if o.failed_checks > 0 {
                eprintln!("{} check(s) failed", o.failed_checks);
                ExitCode::from(EXIT_CHECKS)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
