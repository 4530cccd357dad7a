//! Experiment dispatch.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use eulerdd::engine::{calibrate_amplitude, run_dd_scan, run_fid, run_relaxation, Calibration};
use eulerdd::noise::{export_waveform, sample_realization, NoiseError};
use eulerdd::seed::{derive_seed, Stream};
use eulerdd::{
    build_cayley, check_larmor_resonance, fit_decay, fit_decay_unweighted, verify_average_decoupling, verify_eulerian,
    DecayCurve, DephasingSpec, EngineError, FitModel, GroupError, LarmorCheck, LorentzianNoiseSpec, Pauli, PulseShape,
    SequenceSpec, SimParams,
};
use thiserror::Error;

use crate::config::{ConfigError, DephasingMode, Experiment, FitWeights, RunConfig};

/// Larmor frequency used for the resonance check when none is configured.
pub const DEFAULT_LARMOR_HZ: f64 = 0.5e6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl RunError {
    /// 1 for configuration problems, 2 for failures during the run.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Command-line values layered over a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub threads: Option<usize>,
    /// Thread count from the environment, used when neither the flag nor
    /// the config sets one.
    pub threads_env: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Applies `ov` to `cfg`. `--seed` and `--realizations` replace config
/// values; `--out` and `--threads` must agree with the config when both are
/// set.
pub fn apply_overrides(mut cfg: RunConfig, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(seed) = ov.seed {
        cfg.seed = Some(seed);
    }
    if let Some(m) = ov.realizations {
        if m == 0 {
            return Err(ConfigError::Conflict("--realizations must be at least 1".into()));
        }
        cfg.realizations = Some(m);
    }
    if let Some(out) = &ov.out {
        match &cfg.output {
            Some(existing) if existing != out => {
                return Err(ConfigError::Conflict(format!(
                    "--out {} conflicts with output = {} in the config",
                    out.display(),
                    existing.display()
                )))
            }
            _ => cfg.output = Some(out.clone()),
        }
    }
    if let Some(t) = ov.threads {
        match cfg.threads {
            Some(existing) if existing != t => {
                return Err(ConfigError::Conflict(format!(
                    "--threads {t} conflicts with threads = {existing} in the config"
                )))
            }
            _ => cfg.threads = Some(t),
        }
    }
    if cfg.threads == Some(0) {
        return Err(ConfigError::Conflict("threads must be at least 1".into()));
    }
    if cfg.experiment.needs_output() && cfg.output.is_none() {
        return Err(ConfigError::Invalid {
            line: None,
            key: "output".into(),
            message: "no output path; pass --out or set it in the config".into(),
        });
    }
    Ok(cfg)
}

/// Files written by a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Result of an `eulerian-check`.
    pub eulerian_pass: Option<bool>,
}

/// Fit summary path next to the CSV: `out.csv` → `out.fit.txt`.
pub fn summary_path(output: &Path) -> PathBuf {
    output.with_extension("fit.txt")
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn say(log: &mut dyn Write, line: impl AsRef<str>) {
    // Progress output is best effort.
    let _ = writeln!(log, "{}", line.as_ref());
}

fn sim_params(cfg: &RunConfig, threads_env: Option<usize>) -> SimParams {
    SimParams {
        dt: cfg.dt,
        realizations: cfg.realizations.unwrap_or(1000),
        master_seed: cfg.seed.unwrap_or(0),
        envelope_t2: match cfg.dephasing {
            Some(DephasingMode::Envelope) => None,
            _ => cfg.envelope_t2,
        },
        threads: cfg.threads.or(threads_env),
    }
}

fn base_noise(cfg: &RunConfig) -> LorentzianNoiseSpec {
    let d = LorentzianNoiseSpec::default();
    LorentzianNoiseSpec {
        rate: cfg.noise_rate_hz.map_or(d.rate, |hz| TAU * hz),
        step_hz: cfg.noise_step_hz.unwrap_or(d.step_hz),
        n_max: cfg.noise_cutoff.unwrap_or(d.n_max),
        ..d
    }
}

/// Noise spec with its amplitude set directly or by calibration.
fn noise_spec(
    cfg: &RunConfig,
    params: &SimParams,
    log: &mut dyn Write,
) -> Result<(Option<LorentzianNoiseSpec>, Option<Calibration>), RunError> {
    let base = base_noise(cfg);
    base.validate()?;
    if let Some(a) = cfg.noise_amplitude {
        return Ok((Some(base.with_amplitude(a)), None));
    }
    if let Some(target) = cfg.noise_target_t1 {
        let cal = calibrate_amplitude(&base, target, None, params)?;
        say(
            log,
            format!(
                "calibrated noise amplitude {:.6e} rad/s (T1 = {:.4e} s after {} iterations)",
                cal.amplitude, cal.achieved_t1, cal.iterations
            ),
        );
        return Ok((Some(base.with_amplitude(cal.amplitude)), Some(cal)));
    }
    Ok((None, None))
}

fn dephasing_spec(cfg: &RunConfig) -> DephasingSpec {
    match cfg.dephasing.unwrap_or(DephasingMode::None) {
        DephasingMode::None => DephasingSpec::None,
        DephasingMode::Static => match (cfg.dephasing_t2star, cfg.dephasing_sigma) {
            (Some(t2), _) => DephasingSpec::from_t2_star(t2, 0),
            (None, Some(sigma)) => DephasingSpec::QuasiStatic { sigma, seed: 0 },
            (None, None) => DephasingSpec::None,
        },
        DephasingMode::Envelope => DephasingSpec::Envelope {
            t2: cfg.envelope_t2.unwrap_or(f64::INFINITY),
        },
    }
}

fn default_fit(experiment: Experiment) -> (u8, FitModel, FitWeights) {
    match experiment {
        Experiment::Fid => (2, FitModel::Free, FitWeights::InverseVariance),
        Experiment::Relax | Experiment::Calibrate => (1, FitModel::FixedHalf, FitWeights::Uniform),
        _ => (2, FitModel::FixedHalf, FitWeights::InverseVariance),
    }
}

fn summarize(
    cfg: &RunConfig,
    curve: &DecayCurve,
    noise: Option<&LorentzianNoiseSpec>,
    calibration: Option<&Calibration>,
    log: &mut dyn Write,
) -> String {
    let (p, model, weights) = default_fit(cfg.experiment);
    let p = cfg.fit_exponent.unwrap_or(p);
    let model = cfg.fit_model.unwrap_or(model);
    let weights = cfg.fit_weights.unwrap_or(weights);
    let mut text = format!("experiment = {}\n", cfg.experiment.name());
    if let Some(seq) = &cfg.sequence {
        text.push_str(&format!("sequence = {}\n", seq.name()));
    }
    if let Some(n) = noise {
        text.push_str(&format!("noise_amplitude_rad_s = {:e}\n", n.amplitude));
    }
    if let Some(c) = calibration {
        text.push_str(&format!(
            "calibrated_t1_s = {:e}\ncalibration_iterations = {}\n",
            c.achieved_t1, c.iterations
        ));
    }
    text.push_str(&format!(
        "fit_weights = {}\n",
        match weights {
            FitWeights::InverseVariance => "inverse-variance",
            FitWeights::Uniform => "uniform",
        }
    ));
    let fit = match weights {
        FitWeights::InverseVariance => fit_decay(curve, p, model),
        FitWeights::Uniform => fit_decay_unweighted(curve, p, model),
    };
    match fit {
        Ok(fit) => {
            say(log, format!("fit: {fit}"));
            text.push_str(&fit.to_key_values());
        }
        Err(e) => {
            say(log, format!("fit: not available ({e})"));
            text.push_str(&format!("fit_error = {e}\n"));
        }
    }
    text
}

fn write_curve(
    cfg: &RunConfig,
    curve: &DecayCurve,
    noise: Option<&LorentzianNoiseSpec>,
    calibration: Option<&Calibration>,
    log: &mut dyn Write,
) -> Result<Outcome, RunError> {
    let output = cfg
        .output
        .clone()
        .ok_or_else(|| ConfigError::Missing("output".into()))?;
    write_file(&output, &curve.to_csv())?;
    let summary = summary_path(&output);
    write_file(&summary, &summarize(cfg, curve, noise, calibration, log))?;
    say(log, format!("wrote {} and {}", output.display(), summary.display()));
    Ok(Outcome {
        files: vec![output, summary],
        eulerian_pass: None,
    })
}

fn larmor_line(tau_c: f64, f: f64) -> String {
    match check_larmor_resonance(tau_c, f) {
        LarmorCheck::Clear => format!(
            "larmor check: clear (tau_c = {:.1} ns, f = {:.3} MHz)",
            tau_c * 1e9,
            f * 1e-6
        ),
        LarmorCheck::Warning {
            k,
            resonant_tau_c,
            strong,
        } => format!(
            "larmor check: WARNING tau_c = {:.1} ns is near {k}/(2f) = {:.1} ns ({} resonance, f = {:.3} MHz)",
            tau_c * 1e9,
            resonant_tau_c * 1e9,
            if strong { "strong" } else { "weak" },
            f * 1e-6
        ),
    }
}

fn times(cfg: &RunConfig) -> Result<Vec<f64>, ConfigError> {
    cfg.time_grid().ok_or_else(|| ConfigError::Missing("times".into()))
}

/// Runs the experiment described by a validated config.
pub fn execute(cfg: &RunConfig, threads_env: Option<usize>, log: &mut dyn Write) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let params = sim_params(cfg, threads_env);
    params.validate().map_err(RunError::Engine)?;
    let dephasing = dephasing_spec(cfg);
    match cfg.experiment {
        Experiment::Fid => {
            let curve = run_fid(&dephasing, &times(cfg)?, &params)?;
            write_curve(cfg, &curve, None, None, log)
        }
        Experiment::Relax => {
            let (noise, cal) = noise_spec(cfg, &params, log)?;
            let curve = run_relaxation(noise.as_ref(), &dephasing, &times(cfg)?, &params)?;
            write_curve(cfg, &curve, noise.as_ref(), cal.as_ref(), log)
        }
        Experiment::Dd => {
            let kind = cfg
                .sequence
                .clone()
                .ok_or_else(|| ConfigError::Missing("sequence".into()))?;
            let counts = cfg.pulse_counts();
            let shape = cfg.shape.unwrap_or(PulseShape::Square);
            let seq = SequenceSpec::new(
                kind,
                *counts.last().expect("validated non-empty"),
                cfg.tau.ok_or_else(|| ConfigError::Missing("tau".into()))?,
                cfg.tau_d.unwrap_or(0.0),
                shape,
            );
            seq.validate().map_err(EngineError::from)?;
            say(
                log,
                larmor_line(seq.tau_c(), cfg.larmor_hz.unwrap_or(DEFAULT_LARMOR_HZ)),
            );
            let (noise, cal) = noise_spec(cfg, &params, log)?;
            let curve = run_dd_scan(&seq, &counts, noise.as_ref(), &dephasing, &params)?;
            write_curve(cfg, &curve, noise.as_ref(), cal.as_ref(), log)
        }
        Experiment::Calibrate => {
            let target = cfg
                .target_t1
                .or(cfg.noise_target_t1)
                .ok_or_else(|| ConfigError::Missing("target_t1".into()))?;
            let grid = cfg.time_grid();
            let base = base_noise(cfg);
            base.validate()?;
            let cal = calibrate_amplitude(&base, target, grid.as_deref(), &params)?;
            say(
                log,
                format!(
                    "calibrated noise amplitude {:.6e} rad/s (T1 = {:.4e} s after {} iterations)",
                    cal.amplitude, cal.achieved_t1, cal.iterations
                ),
            );
            let grid = grid.unwrap_or_else(|| (0..31).map(|i| 3.0 * target * i as f64 / 30.0).collect());
            let noise = base.with_amplitude(cal.amplitude);
            let curve = run_relaxation(Some(&noise), &DephasingSpec::None, &grid, &params)?;
            write_curve(cfg, &curve, Some(&noise), Some(&cal), log)
        }
        Experiment::ExportNoise => {
            let (noise, _) = noise_spec(cfg, &params, log)?;
            let noise = noise
                .expect("validated: amplitude or target present")
                .with_seed(derive_seed(params.master_seed, Stream::RunNoise, 0));
            let output = cfg
                .output
                .clone()
                .ok_or_else(|| ConfigError::Missing("output".into()))?;
            let realization = sample_realization(&noise, cfg.realization.unwrap_or(0));
            let rows = export_waveform(
                &noise,
                &realization,
                cfg.duration.ok_or_else(|| ConfigError::Missing("duration".into()))?,
                cfg.sample_rate
                    .ok_or_else(|| ConfigError::Missing("sample_rate".into()))?,
                &output,
            )?;
            say(log, format!("wrote {rows} samples to {}", output.display()));
            Ok(Outcome {
                files: vec![output],
                eulerian_pass: None,
            })
        }
        Experiment::EulerianCheck => {
            let word = cfg
                .sequence
                .clone()
                .ok_or_else(|| ConfigError::Missing("word".into()))?
                .word();
            let group = cfg.group.ok_or_else(|| ConfigError::Missing("group".into()))?;
            let graph = build_cayley(&group.elements(), &cfg.generator_elements())?;
            let report = verify_eulerian(&word, &graph);
            let average = verify_average_decoupling(&word, &[Pauli::X, Pauli::Y, Pauli::Z]);
            let mut text = if report.pass {
                format!("PASS: {word} is an Eulerian cycle\n")
            } else {
                format!("FAIL: {word}: {}\n", report.diagnostic)
            };
            text.push_str(&format!(
                "average decoupling of X, Y, Z: {}\n",
                if average { "yes" } else { "no" }
            ));
            let _ = log.write_all(text.as_bytes());
            let mut files = Vec::new();
            if let Some(out) = &cfg.output {
                write_file(out, &text)?;
                files.push(out.clone());
            }
            Ok(Outcome {
                files,
                eulerian_pass: Some(report.pass),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fid() -> RunConfig {
        RunConfig::parse("experiment = fid\ntimes = 0, 1us\noutput = a.csv\nthreads = 2\n").unwrap()
    }

    #[test]
    fn seed_and_realizations_override() {
        let ov = Overrides {
            seed: Some(5),
            realizations: Some(10),
            ..Overrides::default()
        };
        let cfg = apply_overrides(fid(), &ov).unwrap();
        assert_eq!((cfg.seed, cfg.realizations), (Some(5), Some(10)));
    }

    #[test]
    fn differing_out_or_threads_conflict() {
        let out = Overrides {
            out: Some("b.csv".into()),
            ..Overrides::default()
        };
        assert!(matches!(apply_overrides(fid(), &out), Err(ConfigError::Conflict(_))));
        let threads = Overrides {
            threads: Some(3),
            ..Overrides::default()
        };
        assert!(matches!(
            apply_overrides(fid(), &threads),
            Err(ConfigError::Conflict(_))
        ));
        let same = Overrides {
            out: Some("a.csv".into()),
            threads: Some(2),
            ..Overrides::default()
        };
        assert!(apply_overrides(fid(), &same).is_ok());
    }

    #[test]
    fn environment_threads_only_fill_a_gap() {
        let mut cfg = fid();
        assert_eq!(sim_params(&cfg, Some(8)).threads, Some(2));
        cfg.threads = None;
        assert_eq!(sim_params(&cfg, Some(8)).threads, Some(8));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::from(ConfigError::Missing("tau".into())).exit_code(), 1);
        assert_eq!(RunError::from(EngineError::InvalidParams("x".into())).exit_code(), 2);
    }

    #[test]
    fn summary_sits_next_to_the_csv() {
        assert_eq!(summary_path(Path::new("out/x.csv")), PathBuf::from("out/x.fit.txt"));
    }

    #[test]
    fn larmor_warning_names_the_resonance() {
        assert!(larmor_line(1924e-9, 0.5e6).contains("clear"));
        assert!(larmor_line(1e-6, 0.5e6).contains("WARNING"));
    }
}
