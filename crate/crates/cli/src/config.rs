//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Times are seconds and accept an
//! `ns`, `us`, `µs`, `ms` or `s` suffix. Every key is listed in [`KEYS`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use eulerdd::dgroup::{generators, pauli_group, two_element_group, GroupElement};
use eulerdd::engine::default_pulse_counts;
use eulerdd::{FitModel, Pauli, PulseShape, PulseWord, SequenceKind};
use thiserror::Error;

pub const KEYS: &[&str] = &[
    "experiment",
    "output",
    "sequence",
    "word",
    "pulses",
    "tau",
    "tau_d",
    "shape",
    "gaussian_half_width",
    "noise_amplitude",
    "noise_target_t1",
    "noise_rate_hz",
    "noise_step_hz",
    "noise_cutoff",
    "dephasing",
    "dephasing_t2star",
    "dephasing_sigma",
    "envelope_t2",
    "realizations",
    "seed",
    "dt",
    "threads",
    "times",
    "t_max",
    "t_points",
    "duration",
    "sample_rate",
    "realization",
    "target_t1",
    "group",
    "generators",
    "fit_exponent",
    "fit_model",
    "fit_weights",
    "larmor_hz",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("{}`{key}`: {message}", line_prefix(*line))]
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Conflict(String),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map_or_else(String::new, |l| format!("line {l}: "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fid,
    Relax,
    Dd,
    EulerianCheck,
    ExportNoise,
    Calibrate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fid => "fid",
            Experiment::Relax => "relax",
            Experiment::Dd => "dd",
            Experiment::EulerianCheck => "eulerian-check",
            Experiment::ExportNoise => "export-noise",
            Experiment::Calibrate => "calibrate",
        }
    }

    /// Whether the run produces an output file.
    pub fn needs_output(self) -> bool {
        self != Experiment::EulerianCheck
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fid" => Experiment::Fid,
            "relax" => Experiment::Relax,
            "dd" => Experiment::Dd,
            "eulerian-check" => Experiment::EulerianCheck,
            "export-noise" => Experiment::ExportNoise,
            "calibrate" => Experiment::Calibrate,
            _ => return Err("expected fid, relax, dd, eulerian-check, export-noise or calibrate".into()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DephasingMode {
    None,
    Static,
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWeights {
    InverseVariance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupName {
    Pauli,
    Z2(Pauli),
}

impl GroupName {
    pub fn elements(self) -> Vec<GroupElement> {
        match self {
            GroupName::Pauli => pauli_group(),
            GroupName::Z2(axis) => two_element_group(axis),
        }
    }

    fn text(self) -> String {
        match self {
            GroupName::Pauli => "pauli".into(),
            GroupName::Z2(axis) => format!("z2-{}", axis.symbol().to_ascii_lowercase()),
        }
    }
}

/// Parsed configuration. `None` fields were absent from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output: Option<PathBuf>,
    pub sequence: Option<SequenceKind>,
    pub pulses: Option<Vec<usize>>,
    pub tau: Option<f64>,
    pub tau_d: Option<f64>,
    pub shape: Option<PulseShape>,
    pub noise_amplitude: Option<f64>,
    pub noise_target_t1: Option<f64>,
    pub noise_rate_hz: Option<f64>,
    pub noise_step_hz: Option<f64>,
    pub noise_cutoff: Option<usize>,
    pub dephasing: Option<DephasingMode>,
    pub dephasing_t2star: Option<f64>,
    pub dephasing_sigma: Option<f64>,
    pub envelope_t2: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub threads: Option<usize>,
    pub times: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub t_points: Option<usize>,
    pub duration: Option<f64>,
    pub sample_rate: Option<f64>,
    pub realization: Option<u64>,
    pub target_t1: Option<f64>,
    pub group: Option<GroupName>,
    pub generators: Option<Vec<Pauli>>,
    pub fit_exponent: Option<u8>,
    pub fit_model: Option<FitModel>,
    pub fit_weights: Option<FitWeights>,
    pub larmor_hz: Option<f64>,
    lines: BTreeMap<&'static str, usize>,
}

fn time(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (number, exp10) = [("ns", -9), ("us", -6), ("µs", -6), ("ms", -3), ("s", 0)]
        .iter()
        .find_map(|(suffix, e)| s.strip_suffix(suffix).map(|n| (n.trim_end(), *e)))
        .unwrap_or((s, 0));
    let bad = || format!("`{s}` is not a time");
    // Shift the decimal exponent in text so `12.87us` parses to exactly `12.87e-6`.
    let (mantissa, exp) = match number.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
        None => (number, 0),
    };
    if mantissa.is_empty() {
        return Err(bad());
    }
    format!("{mantissa}e{}", exp + exp10).parse::<f64>().map_err(|_| bad())
}

fn number<T: FromStr>(s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a valid number", s.trim()))
}

fn pulse_list(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s == "default" {
        return Ok(default_pulse_counts());
    }
    if let Some((range, step)) = s.rsplit_once(':').filter(|_| s.matches(':').count() == 2) {
        let (a, b) = range.split_once(':').expect("two colons");
        let (a, b, step): (usize, usize, usize) = (number(a)?, number(b)?, number(step)?);
        if step == 0 || a > b {
            return Err("range must be `start:end:step` with start ≤ end and step > 0".into());
        }
        return Ok((a..=b).step_by(step).collect());
    }
    s.split(',').map(number).collect()
}

fn time_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(time).collect()
}

fn parse_sequence(s: &str) -> Result<SequenceKind, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "cpmg-y" | "cpmg" => Ok(SequenceKind::CpmgY),
        "xy4" => Ok(SequenceKind::Xy4),
        "xy8" => Ok(SequenceKind::Xy8),
        other => other
            .strip_prefix("custom:")
            .ok_or_else(|| "expected cpmg-y, xy4, xy8 or custom:<word>".to_string())
            .and_then(|w| w.to_ascii_uppercase().parse::<PulseWord>().map_err(|e| e.to_string()))
            .map(SequenceKind::Custom),
    }
}

fn parse_shape(s: &str) -> Result<PulseShape, String> {
    match s.trim() {
        "delta" => Ok(PulseShape::Delta),
        "square" => Ok(PulseShape::Square),
        "gaussian" => Ok(PulseShape::gaussian()),
        _ => Err("expected delta, square or gaussian".into()),
    }
}

fn parse_paulis(s: &str) -> Result<Vec<Pauli>, String> {
    s.split(',')
        .map(|g| {
            let g = g.trim();
            let mut chars = g.chars();
            match (chars.next().and_then(Pauli::from_symbol), chars.next()) {
                (Some(p), None) => Ok(p),
                _ => Err(format!("`{g}` is not one of I, X, Y, Z")),
            }
        })
        .collect()
}

fn list<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            output: None,
            sequence: None,
            pulses: None,
            tau: None,
            tau_d: None,
            shape: None,
            noise_amplitude: None,
            noise_target_t1: None,
            noise_rate_hz: None,
            noise_step_hz: None,
            noise_cutoff: None,
            dephasing: None,
            dephasing_t2star: None,
            dephasing_sigma: None,
            envelope_t2: None,
            realizations: None,
            seed: None,
            dt: None,
            threads: None,
            times: None,
            t_max: None,
            t_points: None,
            duration: None,
            sample_rate: None,
            realization: None,
            target_t1: None,
            group: None,
            generators: None,
            fit_exponent: None,
            fit_model: None,
            fit_weights: None,
            larmor_hz: None,
            lines: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&'static str, (String, usize)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
            if entries.insert(known, (value.trim().to_string(), line)).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
        }

        let (exp_text, exp_line) = entries
            .get("experiment")
            .cloned()
            .ok_or_else(|| ConfigError::Missing("experiment".into()))?;
        let experiment = exp_text.parse().map_err(|message| ConfigError::Invalid {
            line: Some(exp_line),
            key: "experiment".into(),
            message,
        })?;
        let mut cfg = RunConfig::new(experiment);
        for (key, (value, line)) in &entries {
            cfg.lines.insert(key, *line);
            cfg.set(key, value).map_err(|message| ConfigError::Invalid {
                line: Some(*line),
                key: key.to_string(),
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "experiment" => {}
            "output" => self.output = Some(PathBuf::from(v)),
            "sequence" => self.sequence = Some(parse_sequence(v)?),
            "word" => {
                let word: PulseWord = v
                    .trim()
                    .to_ascii_uppercase()
                    .parse()
                    .map_err(|e: eulerdd::GroupError| e.to_string())?;
                self.sequence = Some(SequenceKind::Custom(word));
            }
            "pulses" => self.pulses = Some(pulse_list(v)?),
            "tau" => self.tau = Some(time(v)?),
            "tau_d" => self.tau_d = Some(time(v)?),
            "shape" => {
                let half_width = match self.shape {
                    Some(PulseShape::Gaussian { half_width }) => Some(half_width),
                    _ => None,
                };
                let mut shape = parse_shape(v)?;
                if let (PulseShape::Gaussian { half_width: h }, Some(kept)) = (&mut shape, half_width) {
                    *h = kept;
                }
                self.shape = Some(shape);
            }
            "gaussian_half_width" => {
                let h: f64 = number(v)?;
                match &mut self.shape {
                    Some(PulseShape::Gaussian { half_width }) => *half_width = h,
                    _ => self.shape = Some(PulseShape::Gaussian { half_width: h }),
                }
            }
            "noise_amplitude" => self.noise_amplitude = Some(number(v)?),
            "noise_target_t1" => self.noise_target_t1 = Some(time(v)?),
            "noise_rate_hz" => self.noise_rate_hz = Some(number(v)?),
            "noise_step_hz" => self.noise_step_hz = Some(number(v)?),
            "noise_cutoff" => self.noise_cutoff = Some(number(v)?),
            "dephasing" => {
                self.dephasing = Some(match v.trim() {
                    "none" => DephasingMode::None,
                    "static" => DephasingMode::Static,
                    "envelope" => DephasingMode::Envelope,
                    _ => return Err("expected none, static or envelope".into()),
                })
            }
            "dephasing_t2star" => self.dephasing_t2star = Some(time(v)?),
            "dephasing_sigma" => self.dephasing_sigma = Some(number(v)?),
            "envelope_t2" => self.envelope_t2 = Some(time(v)?),
            "realizations" => self.realizations = Some(number(v)?),
            "seed" => self.seed = Some(number(v)?),
            "dt" => self.dt = Some(time(v)?),
            "threads" => self.threads = Some(number(v)?),
            "times" => self.times = Some(time_list(v)?),
            "t_max" => self.t_max = Some(time(v)?),
            "t_points" => self.t_points = Some(number(v)?),
            "duration" => self.duration = Some(time(v)?),
            "sample_rate" => self.sample_rate = Some(number(v)?),
            "realization" => self.realization = Some(number(v)?),
            "target_t1" => self.target_t1 = Some(time(v)?),
            "group" => {
                self.group = Some(match v.trim().to_ascii_lowercase().as_str() {
                    "pauli" => GroupName::Pauli,
                    "z2-x" => GroupName::Z2(Pauli::X),
                    "z2-y" => GroupName::Z2(Pauli::Y),
                    "z2-z" => GroupName::Z2(Pauli::Z),
                    _ => return Err("expected pauli, z2-x, z2-y or z2-z".into()),
                })
            }
            "generators" => self.generators = Some(parse_paulis(v)?),
            "fit_exponent" => self.fit_exponent = Some(number(v)?),
            "fit_model" => {
                self.fit_model = Some(match v.trim() {
                    "free" => FitModel::Free,
                    "fixed" => FitModel::FixedHalf,
                    _ => return Err("expected free or fixed".into()),
                })
            }
            "fit_weights" => {
                self.fit_weights = Some(match v.trim() {
                    "inverse-variance" => FitWeights::InverseVariance,
                    "uniform" => FitWeights::Uniform,
                    _ => return Err("expected inverse-variance or uniform".into()),
                })
            }
            "larmor_hz" => self.larmor_hz = Some(number(v)?),
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: self.lines.get(key).copied(),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn require<T>(&self, key: &str, value: &Option<T>) -> Result<(), ConfigError> {
        match value {
            Some(_) => Ok(()),
            None => Err(ConfigError::Missing(key.to_string())),
        }
    }

    fn positive(&self, key: &str, value: Option<f64>) -> Result<(), ConfigError> {
        match value {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(self.invalid(key, format!("must be positive, got {v}"))),
            _ => Ok(()),
        }
    }

    /// Checks every present value and the keys the experiment needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, value) in [
            ("tau", self.tau),
            ("noise_target_t1", self.noise_target_t1),
            ("noise_rate_hz", self.noise_rate_hz),
            ("noise_step_hz", self.noise_step_hz),
            ("dephasing_t2star", self.dephasing_t2star),
            ("envelope_t2", self.envelope_t2),
            ("dt", self.dt),
            ("t_max", self.t_max),
            ("duration", self.duration),
            ("sample_rate", self.sample_rate),
            ("target_t1", self.target_t1),
            ("larmor_hz", self.larmor_hz),
        ] {
            self.positive(key, value)?;
        }
        if let Some(tau_d) = self.tau_d {
            if !(tau_d.is_finite() && tau_d >= 0.0) {
                return Err(self.invalid("tau_d", format!("must be non-negative, got {tau_d}")));
            }
        }
        if let Some(PulseShape::Gaussian { half_width }) = self.shape {
            if !(half_width.is_finite() && half_width > 0.0) {
                return Err(self.invalid("gaussian_half_width", "must be positive"));
            }
        }
        for (key, value) in [
            ("noise_amplitude", self.noise_amplitude),
            ("dephasing_sigma", self.dephasing_sigma),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(self.invalid(key, format!("must be non-negative, got {v}")));
                }
            }
        }
        for (key, value) in [
            ("realizations", self.realizations),
            ("threads", self.threads),
            ("noise_cutoff", self.noise_cutoff),
            ("t_points", self.t_points),
        ] {
            if value == Some(0) {
                return Err(self.invalid(key, "must be at least 1"));
            }
        }
        if let Some(p) = &self.pulses {
            if p.is_empty() || p.contains(&0) || p.windows(2).any(|w| w[1] <= w[0]) {
                return Err(self.invalid("pulses", "must be positive and strictly increasing"));
            }
        }
        if let Some(ts) = &self.times {
            if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(self.invalid("times", "must be non-negative and strictly increasing"));
            }
        }
        if let Some(p) = self.fit_exponent {
            if p != 1 && p != 2 {
                return Err(self.invalid("fit_exponent", "must be 1 or 2"));
            }
        }
        if self.lines.contains_key("gaussian_half_width") && !matches!(self.shape, Some(PulseShape::Gaussian { .. })) {
            return Err(self.invalid("gaussian_half_width", "needs shape = gaussian"));
        }
        if self.lines.contains_key("sequence") && self.lines.contains_key("word") {
            return Err(self.invalid("word", "conflicts with sequence"));
        }
        if self.noise_amplitude.is_some() && self.noise_target_t1.is_some() {
            return Err(self.invalid("noise_target_t1", "conflicts with noise_amplitude"));
        }
        if self.dephasing_t2star.is_some() && self.dephasing_sigma.is_some() {
            return Err(self.invalid("dephasing_sigma", "conflicts with dephasing_t2star"));
        }
        if self.times.is_some() && (self.t_max.is_some() || self.t_points.is_some()) {
            return Err(self.invalid("times", "conflicts with t_max/t_points"));
        }
        if self.t_max.is_some() != self.t_points.is_some() {
            return Err(ConfigError::Missing(
                if self.t_max.is_some() { "t_points" } else { "t_max" }.into(),
            ));
        }
        if self.t_points == Some(1) {
            return Err(self.invalid("t_points", "must be at least 2"));
        }
        match self.dephasing {
            Some(DephasingMode::Static) if self.dephasing_t2star.is_none() && self.dephasing_sigma.is_none() => {
                return Err(ConfigError::Missing("dephasing_t2star".into()))
            }
            Some(DephasingMode::Envelope) if self.envelope_t2.is_none() => {
                return Err(ConfigError::Missing("envelope_t2".into()))
            }
            _ => {}
        }

        let has_times = self.times.is_some() || self.t_max.is_some();
        let no_envelope_mode = |what: &str| -> Result<(), ConfigError> {
            if self.dephasing == Some(DephasingMode::Envelope) {
                return Err(self.invalid("dephasing", format!("{what} needs none or static")));
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Fid => {
                if !has_times {
                    return Err(ConfigError::Missing("times".into()));
                }
                no_envelope_mode("fid")?;
            }
            Experiment::Relax => {
                if !has_times {
                    return Err(ConfigError::Missing("times".into()));
                }
                no_envelope_mode("relax")?;
            }
            Experiment::Dd => {
                self.require("sequence", &self.sequence)?;
                self.require("tau", &self.tau)?;
                let shape = self.shape.unwrap_or(PulseShape::Square);
                if !shape.is_delta() {
                    self.require("tau_d", &self.tau_d)?;
                    self.positive("tau_d", self.tau_d)?;
                }
            }
            Experiment::EulerianCheck => {
                self.require("word", &self.sequence)?;
                self.require("group", &self.group)?;
                self.require("generators", &self.generators)?;
            }
            Experiment::ExportNoise => {
                if self.noise_amplitude.is_none() && self.noise_target_t1.is_none() {
                    return Err(ConfigError::Missing("noise_amplitude".into()));
                }
                self.require("duration", &self.duration)?;
                self.require("sample_rate", &self.sample_rate)?;
            }
            Experiment::Calibrate => {
                if self.target_t1.is_none() && self.noise_target_t1.is_none() {
                    return Err(ConfigError::Missing("target_t1".into()));
                }
            }
        }
        Ok(())
    }

    /// Sample times, from `times` or `t_points` evenly over `[0, t_max]`.
    pub fn time_grid(&self) -> Option<Vec<f64>> {
        if let Some(ts) = &self.times {
            return Some(ts.clone());
        }
        let (t_max, n) = (self.t_max?, self.t_points?);
        Some((0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect())
    }

    pub fn pulse_counts(&self) -> Vec<usize> {
        self.pulses.clone().unwrap_or_else(default_pulse_counts)
    }

    pub fn generator_elements(&self) -> Vec<GroupElement> {
        generators(self.generators.as_deref().unwrap_or(&[]))
    }

    /// Canonical text that parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            writeln!(out, "{key} = {value}").expect("writing to a String cannot fail");
        };
        put("experiment", self.experiment.name().into());
        if let Some(v) = &self.output {
            put("output", v.display().to_string());
        }
        match &self.sequence {
            Some(SequenceKind::Custom(w)) => put("word", w.to_string()),
            Some(kind) => put("sequence", kind.name()),
            None => {}
        }
        if let Some(v) = &self.pulses {
            put("pulses", list(v));
        }
        let secs = |v: f64| format!("{v:e}");
        let opt = |v: Option<f64>| v.map(secs);
        for (key, value) in [("tau", opt(self.tau)), ("tau_d", opt(self.tau_d))] {
            if let Some(v) = value {
                put(key, v);
            }
        }
        match self.shape {
            Some(PulseShape::Delta) => put("shape", "delta".into()),
            Some(PulseShape::Square) => put("shape", "square".into()),
            Some(PulseShape::Gaussian { half_width }) => {
                put("shape", "gaussian".into());
                put("gaussian_half_width", format!("{half_width:?}"));
            }
            None => {}
        }
        for (key, value) in [
            ("noise_amplitude", self.noise_amplitude.map(|v| format!("{v:e}"))),
            ("noise_target_t1", opt(self.noise_target_t1)),
            ("noise_rate_hz", self.noise_rate_hz.map(|v| format!("{v:e}"))),
            ("noise_step_hz", self.noise_step_hz.map(|v| format!("{v:e}"))),
            ("noise_cutoff", self.noise_cutoff.map(|v| v.to_string())),
        ] {
            if let Some(v) = value {
                put(key, v);
            }
        }
        if let Some(mode) = self.dephasing {
            put(
                "dephasing",
                match mode {
                    DephasingMode::None => "none",
                    DephasingMode::Static => "static",
                    DephasingMode::Envelope => "envelope",
                }
                .into(),
            );
        }
        for (key, value) in [
            ("dephasing_t2star", opt(self.dephasing_t2star)),
            ("dephasing_sigma", self.dephasing_sigma.map(|v| format!("{v:e}"))),
            ("envelope_t2", opt(self.envelope_t2)),
            ("realizations", self.realizations.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("dt", opt(self.dt)),
            ("threads", self.threads.map(|v| v.to_string())),
        ] {
            if let Some(v) = value {
                put(key, v);
            }
        }
        if let Some(ts) = &self.times {
            put("times", ts.iter().map(|&t| secs(t)).collect::<Vec<_>>().join(", "));
        }
        for (key, value) in [
            ("t_max", opt(self.t_max)),
            ("t_points", self.t_points.map(|v| v.to_string())),
            ("duration", opt(self.duration)),
            ("sample_rate", self.sample_rate.map(|v| format!("{v:e}"))),
            ("realization", self.realization.map(|v| v.to_string())),
            ("target_t1", opt(self.target_t1)),
            ("group", self.group.map(GroupName::text)),
            (
                "generators",
                self.generators
                    .as_ref()
                    .map(|g| g.iter().map(|p| p.symbol().to_string()).collect::<Vec<_>>().join(", ")),
            ),
            ("fit_exponent", self.fit_exponent.map(|v| v.to_string())),
            ("fit_model", self.fit_model.map(|m| m.name().to_string())),
            (
                "fit_weights",
                self.fit_weights.map(|w| {
                    match w {
                        FitWeights::InverseVariance => "inverse-variance",
                        FitWeights::Uniform => "uniform",
                    }
                    .to_string()
                }),
            ),
            ("larmor_hz", self.larmor_hz.map(|v| format!("{v:e}"))),
        ] {
            if let Some(v) = value {
                put(key, v);
            }
        }
        out
    }
}
