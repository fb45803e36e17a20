//! Flat `key = value` configuration files.
//!
//! Every accepted key is listed in [`CONFIG_KEYS`] together with its default
//! written as a value literal; the CLI prints this table in its help text.
//! Unknown keys are rejected. `scenario` is applied first so explicit noise
//! keys override the scenario's presets regardless of order in the file.

use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::harness::{ScenarioConfig, ScenarioId};
use crate::tracker::Algorithm;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax error: {0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub struct ConfigKey {
    pub name: &'static str,
    /// Default as a value literal.
    pub default: &'static str,
    pub help: &'static str,
}

macro_rules! keys {
    ($( $name:literal = $default:literal : $help:literal ),* $(,)?) => {
        &[ $( ConfigKey { name: $name, default: $default, help: $help } ),* ]
    };
}

pub const CONFIG_KEYS: &[ConfigKey] = keys![
    "scenario" = "\"a\"": "noise preset: a, b, c or d (sets sigma_p, sigma_a_low, sigma_a_high)",
    "sigma_p" = "1.0": "RSSI shadowing std, dB",
    "sigma_a_low" = "1.0": "GPS noise std of high-performance nodes, m",
    "sigma_a_high" = "5.0": "GPS noise std of the remaining nodes, m",
    "high_perf_fraction" = "0.5": "fraction of nodes with sigma_a_low (the highest node ids)",
    "intervals" = "[5, 10, 15, 20, 25, 30, 35, 40, 45, 50]": "sampling intervals, s",
    "algorithm" = "\"all\"": "wlsr, wlsrp, cbt, individual or all",
    "seed" = "1": "master seed",
    "audit" = "false": "check protocol invariants at every instant",
    "area_side" = "50000.0": "side of the square area, m",
    "n_nodes" = "40": "number of nodes",
    "duration" = "43200": "tracking period, s",
    "living_area_1_x" = "2500.0": "first living area center x, m",
    "living_area_1_y" = "2500.0": "first living area center y, m",
    "living_area_1_radius" = "500.0": "first living area radius, m",
    "living_area_2_x" = "47500.0": "second living area center x, m",
    "living_area_2_y" = "47500.0": "second living area center y, m",
    "living_area_2_radius" = "500.0": "second living area radius, m",
    "foraging_x" = "25000.0": "foraging area center x, m",
    "foraging_y" = "25000.0": "foraging area center y, m",
    "foraging_radius" = "1000.0": "foraging area radius, m",
    "max_speed" = "6.0": "maximum node speed, m/s",
    "target_spacing" = "20.0": "preferred inter-node spacing, m (also the separation distance)",
    "neighbor_radius" = "50.0": "flockmate radius, m",
    "w_separation" = "0.5": "separation rule weight",
    "w_alignment" = "0.3": "alignment rule weight",
    "w_cohesion" = "0.03": "cohesion rule weight",
    "w_goal" = "0.2": "goal-seeking weight",
    "rw_step_sigma" = "3.0": "random-walk step std per axis, m",
    "d0" = "1.0": "path-loss reference distance, m",
    "p0" = "-33.44": "received power at d0, dBm",
    "eta" = "3.567": "path-loss exponent",
    "total_period" = "43200.0": "energy model period T, s",
    "p_gps" = "0.074": "GPS power, W",
    "t_gps" = "5.0": "GPS hot-start fix time, s",
    "p_mcu" = "0.0132": "MCU power, W",
    "p_radio" = "0.0132": "radio power, W",
    "t_packet" = "0.00031": "packet air time, s",
    "packet_size" = "80.0": "packet size, bits",
    "bit_rate" = "256000.0": "radio bit rate, bit/s",
    "p_standby" = "1.2e-6": "standby power, W (folded into misc_energy)",
    "misc_energy" = "54.0": "flat miscellaneous energy per run, J",
    "misc_scale" = "1.0": "multiplier on misc_energy",
    "battery_capacity" = "3996.0": "battery capacity, J",
    "cluster_threshold" = "10": "clusters larger than this multilaterate",
    "n_anchors" = "6": "anchors per multilateration",
    "comm_range" = "100.0": "radio range, m",
];

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "expected a number")),
    }
}

fn unsigned(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(bad(key, "expected a non-negative integer")),
    }
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| bad(key, "expected a string"))
}

pub fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    ScenarioId::parse(s)
        .ok_or_else(|| format!("unknown scenario `{s}`; expected one of a, b, c, d"))
}

pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, String> {
    if s == "all" {
        return Ok(Algorithm::ALL.to_vec());
    }
    Algorithm::parse(s).map(|a| vec![a]).ok_or_else(|| {
        format!("unknown algorithm `{s}`; expected one of wlsr, wlsrp, cbt, individual, all")
    })
}

/// Parses `start:end:step` (inclusive of `end` when reached) or a single
/// interval.
pub fn parse_intervals(s: &str) -> Result<Vec<u32>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad interval `{p}` in `{s}`"))
    };
    let out: Vec<u32> = match parts.as_slice() {
        [one] => vec![num(one)?],
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step == 0 {
                return Err("interval step must be positive".into());
            }
            if a > b {
                return Err(format!("interval range `{s}` is empty"));
            }
            (a..=b).step_by(step as usize).collect()
        }
        _ => {
            return Err(format!(
                "intervals must look like start:end:step, got `{s}`"
            ))
        }
    };
    if out.contains(&0) {
        return Err("intervals must be at least 1 s".into());
    }
    Ok(out)
}

fn apply(cfg: &mut ScenarioConfig, key: &str, v: &Value) -> Result<(), ConfigError> {
    let f = || float(key, v);
    match key {
        "scenario" => {
            let id = parse_scenario(text(key, v)?).map_err(|e| bad(key, e))?;
            *cfg = cfg.with_scenario(id);
        }
        "sigma_p" => cfg.sigma_p = f()?,
        "sigma_a_low" => cfg.sigma_a_low = f()?,
        "sigma_a_high" => cfg.sigma_a_high = f()?,
        "high_perf_fraction" => cfg.high_perf_fraction = f()?,
        "intervals" => {
            cfg.intervals = match v {
                Value::Array(items) => items
                    .iter()
                    .map(|x| {
                        unsigned(key, x).and_then(|n| {
                            u32::try_from(n).map_err(|_| bad(key, "interval too large"))
                        })
                    })
                    .collect::<Result<_, _>>()?,
                Value::String(s) => parse_intervals(s).map_err(|e| bad(key, e))?,
                Value::Integer(_) => vec![unsigned(key, v)? as u32],
                _ => return Err(bad(key, "expected an array of seconds or start:end:step")),
            }
        }
        "algorithm" => cfg.algorithms = parse_algorithms(text(key, v)?).map_err(|e| bad(key, e))?,
        "seed" => cfg.seed = unsigned(key, v)?,
        "audit" => {
            cfg.audit = v
                .as_bool()
                .ok_or_else(|| bad(key, "expected true or false"))?
        }
        "area_side" => cfg.world.area_side = f()?,
        "n_nodes" => cfg.world.n_nodes = unsigned(key, v)? as usize,
        "duration" => {
            cfg.world.duration =
                u32::try_from(unsigned(key, v)?).map_err(|_| bad(key, "too large"))?
        }
        "living_area_1_x" => cfg.world.living_areas[0].center.x = f()?,
        "living_area_1_y" => cfg.world.living_areas[0].center.y = f()?,
        "living_area_1_radius" => cfg.world.living_areas[0].radius = f()?,
        "living_area_2_x" => cfg.world.living_areas[1].center.x = f()?,
        "living_area_2_y" => cfg.world.living_areas[1].center.y = f()?,
        "living_area_2_radius" => cfg.world.living_areas[1].radius = f()?,
        "foraging_x" => cfg.world.foraging_area.center.x = f()?,
        "foraging_y" => cfg.world.foraging_area.center.y = f()?,
        "foraging_radius" => cfg.world.foraging_area.radius = f()?,
        "max_speed" => cfg.world.max_speed = f()?,
        "target_spacing" => {
            cfg.world.target_spacing = f()?;
            cfg.flock.separation_distance = cfg.world.target_spacing;
        }
        "neighbor_radius" => cfg.flock.neighbor_radius = f()?,
        "w_separation" => cfg.flock.w_separation = f()?,
        "w_alignment" => cfg.flock.w_alignment = f()?,
        "w_cohesion" => cfg.flock.w_cohesion = f()?,
        "w_goal" => cfg.flock.w_goal = f()?,
        "rw_step_sigma" => cfg.flock.rw_step_sigma = f()?,
        "d0" => cfg.channel.d0 = f()?,
        "p0" => cfg.channel.p0 = f()?,
        "eta" => cfg.channel.eta = f()?,
        "total_period" => cfg.energy.total_period = f()?,
        "p_gps" => cfg.energy.p_gps = f()?,
        "t_gps" => cfg.energy.t_gps = f()?,
        "p_mcu" => cfg.energy.p_mcu = f()?,
        "p_radio" => cfg.energy.p_radio = f()?,
        "t_packet" => cfg.energy.t_packet = f()?,
        "packet_size" => cfg.energy.packet_size_bits = f()?,
        "bit_rate" => cfg.energy.bit_rate = f()?,
        "p_standby" => cfg.energy.p_standby = f()?,
        "misc_energy" => cfg.energy.misc_energy = f()?,
        "misc_scale" => cfg.energy.misc_scale = f()?,
        "battery_capacity" => cfg.energy.battery_capacity = f()?,
        "cluster_threshold" => cfg.tracker.cluster_threshold = unsigned(key, v)? as usize,
        "n_anchors" => cfg.tracker.n_anchors = unsigned(key, v)? as usize,
        "comm_range" => cfg.tracker.comm_range = f()?,
        other => return Err(ConfigError::UnknownKey(other.to_string())),
    }
    Ok(())
}

/// Parses config text on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = table.get("scenario") {
        apply(&mut cfg, "scenario", v)?;
    }
    for (key, v) in &table {
        if key != "scenario" {
            apply(&mut cfg, key, v)?;
        }
    }
    cfg.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Help text listing every config key with its default.
pub fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Config file keys (key = value, one per line):\n");
    for k in CONFIG_KEYS {
        s.push_str(&format!(
            "  {:width$}  {}  [default: {}]\n",
            k.name, k.help, k.default
        ));
    }
    s
}
