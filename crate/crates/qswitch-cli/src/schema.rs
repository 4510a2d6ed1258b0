//! Structural validation of configuration documents. Every unknown key and
//! mistyped value is reported, not only the first.

use std::fmt;

use toml::{Table, Value};

use crate::config::ExperimentName;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaErrors(pub Vec<String>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Uint,
    Float,
    Bool,
    Path,
    Experiment,
    Order,
    Target,
    Tau,
    FloatList,
    StringList,
    BoolPair,
    Section(&'static [(&'static str, Kind)]),
    Any,
}

const NETWORK: &[(&str, Kind)] = &[
    ("nodes", Kind::Uint),
    ("carrier_ghz", Kind::Float),
    ("kappa_mhz", Kind::Float),
    ("length_m", Kind::Float),
    ("broad_wall_m", Kind::Float),
    ("chi_over_kappa", Kind::FloatList),
    ("mode_window_over_kappa", Kind::Float),
    ("mode_count", Kind::Uint),
    ("group_velocity_over_c", Kind::Float),
    ("self_energy_compensation", Kind::Bool),
];

const NOISE: &[(&str, Kind)] = &[
    ("t1_us", Kind::Float),
    ("switch_t1_us", Kind::Float),
    ("p_loss", Kind::Float),
    ("attenuation_db_per_km", Kind::Float),
];

const TAU_GRID: &[(&str, Kind)] = &[
    ("start_over_kappa", Kind::Float),
    ("stop_over_kappa", Kind::Float),
    ("step_over_kappa", Kind::Float),
    ("add_propagation_time", Kind::Bool),
];

const PROTOCOL: &[(&str, Kind)] = &[
    ("name", Kind::Experiment),
    ("tau_ns", Kind::Tau),
    ("order", Kind::Order),
    ("open", Kind::BoolPair),
    ("target", Kind::Target),
    ("t1_us_list", Kind::FloatList),
    ("chi_over_kappa_list", Kind::FloatList),
    ("tau_grid", Kind::Section(TAU_GRID)),
    ("trace_points", Kind::Uint),
];

const MONTE_CARLO: &[(&str, Kind)] = &[
    ("trajectories", Kind::Uint),
    ("resamples", Kind::Uint),
    ("sample_size", Kind::Uint),
    ("seed", Kind::Uint),
    ("threads", Kind::Uint),
];

const OUTPUT: &[(&str, Kind)] = &[("directory", Kind::Path), ("formats", Kind::StringList)];

const ROOT: &[(&str, Kind)] = &[
    ("network", Kind::Section(NETWORK)),
    ("noise", Kind::Section(NOISE)),
    ("protocol", Kind::Section(PROTOCOL)),
    ("monte_carlo", Kind::Section(MONTE_CARLO)),
    ("output", Kind::Section(OUTPUT)),
    ("derived", Kind::Any),
];

fn describe(v: &Value) -> String {
    match v {
        Value::String(s) => format!("string \"{s}\""),
        Value::Integer(i) => format!("integer {i}"),
        Value::Float(x) => format!("float {x}"),
        Value::Boolean(b) => format!("boolean {b}"),
        Value::Datetime(d) => format!("datetime {d}"),
        Value::Array(_) => "array".into(),
        Value::Table(_) => "table".into(),
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn one_of(v: &Value, options: &[&str]) -> bool {
    matches!(v, Value::String(s) if options.contains(&s.as_str()))
}

/// Checks `v` against `kind`, pushing errors under `path`. Integers given
/// for float fields are rewritten as floats.
fn check(path: &str, v: &mut Value, kind: Kind, errors: &mut Vec<String>) {
    let bad = |expected: &str, v: &Value| format!("{path}: expected {expected}, got {}", describe(v));
    match kind {
        Kind::Any => {}
        Kind::Uint => {
            if !matches!(v, Value::Integer(i) if *i >= 0) {
                errors.push(bad("a non-negative integer", v));
            }
        }
        Kind::Float => match as_float(v) {
            Some(x) => *v = Value::Float(x),
            None => errors.push(bad("a number", v)),
        },
        Kind::Bool => {
            if !v.is_bool() {
                errors.push(bad("a boolean", v));
            }
        }
        Kind::Path => {
            if !v.is_str() {
                errors.push(bad("a path string", v));
            }
        }
        Kind::Experiment => {
            let names: Vec<&str> = ExperimentName::ALL.iter().map(|n| n.as_str()).collect();
            if !one_of(v, &names) {
                errors.push(bad(&format!("one of {}", names.join(", ")), v));
            }
        }
        Kind::Order => {
            let names = ["left_first", "right_first", "simultaneous_split"];
            if !one_of(v, &names) {
                errors.push(bad(&format!("one of {}", names.join(", ")), v));
            }
        }
        Kind::Target => {
            let names = ["bell", "ghz", "w"];
            if !one_of(v, &names) {
                errors.push(bad(&format!("one of {}", names.join(", ")), v));
            }
        }
        Kind::Tau => {
            if let Some(x) = as_float(v) {
                *v = Value::Float(x);
            } else if !one_of(v, &["auto"]) {
                errors.push(bad("a duration in ns or \"auto\"", v));
            }
        }
        Kind::FloatList => match v {
            Value::Array(items) => {
                for (i, item) in items.iter_mut().enumerate() {
                    match as_float(item) {
                        Some(x) => *item = Value::Float(x),
                        None => errors.push(format!("{path}[{i}]: expected a number, got {}", describe(item))),
                    }
                }
            }
            _ => errors.push(bad("an array of numbers", v)),
        },
        Kind::StringList => match v {
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    if !item.is_str() {
                        errors.push(format!("{path}[{i}]: expected a string, got {}", describe(item)));
                    }
                }
            }
            _ => errors.push(bad("an array of strings", v)),
        },
        Kind::BoolPair => match v {
            Value::Array(items) if items.len() == 2 && items.iter().all(Value::is_bool) => {}
            _ => errors.push(bad("an array of two booleans", v)),
        },
        Kind::Section(fields) => match v {
            Value::Table(t) => check_table(path, t, fields, errors),
            _ => errors.push(bad("a table", v)),
        },
    }
}

fn check_table(prefix: &str, table: &mut Table, fields: &[(&str, Kind)], errors: &mut Vec<String>) {
    for (key, value) in table.iter_mut() {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match fields.iter().find(|(k, _)| k == key) {
            Some(&(_, kind)) => check(&path, value, kind, errors),
            None => {
                let known: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
                errors.push(format!("{path}: unknown key (expected one of {})", known.join(", ")));
            }
        }
    }
}

/// Validates the structure of a parsed document and coerces integer
/// literals in float fields.
pub fn check_and_normalize(table: &mut Table) -> Result<(), SchemaErrors> {
    let mut errors = Vec::new();
    check_table("", table, ROOT, &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(SchemaErrors(errors))
    }
}
