//! Config parsing and normalization.
//!
//! The on-disk format is TOML with one table per concern (model, thermal,
//! gates, sampling, truncation, output). Parsing is strict: unknown keys
//! are rejected, every validation error names the exact key path, and
//! sections a mode does not read are refused rather than silently ignored.
//! Normalization fills in defaults so the config echoed into output
//! metadata is complete; re-parsing that echo yields the same `RunConfig`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError};
use metts::propagator::SweepSchedule;
use metts::sampler::{default_dtau, DEFAULT_BURN_IN};

type Result<V> = std::result::Result<V, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EdThermal,
    SlmeSweep,
    MettsCanonical,
    MettsGrand,
    OracleFf,
    Stats,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EdThermal => "ed-thermal",
            Mode::SlmeSweep => "slme-sweep",
            Mode::MettsCanonical => "metts-canonical",
            Mode::MettsGrand => "metts-grand",
            Mode::OracleFf => "oracle-ff",
            Mode::Stats => "stats",
        }
    }

    fn samples(self) -> bool {
        matches!(self, Mode::MettsCanonical | Mode::MettsGrand)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    FirstOrder,
    SecondOrder,
    OmelyanFourthOrder,
}

impl ScheduleKind {
    pub fn build(self) -> SweepSchedule<f64> {
        match self {
            ScheduleKind::FirstOrder => SweepSchedule::first_order(),
            ScheduleKind::SecondOrder => SweepSchedule::second_order(),
            ScheduleKind::OmelyanFourthOrder => SweepSchedule::omelyan_fourth_order(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Jsonl => "jsonl",
            OutputFormat::Csv => "csv",
        }
    }
}

// ---------------------------------------------------------------------
// Raw schema: everything optional, unknown keys rejected by serde.
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    input: Option<PathBuf>,
    model: Option<RawModel>,
    thermal: Option<RawThermal>,
    gates: Option<RawGates>,
    sampling: Option<RawSampling>,
    truncation: Option<RawTruncation>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    l: Option<usize>,
    j: Option<f64>,
    u: Option<f64>,
    mu: Option<f64>,
    n_max: Option<usize>,
    hardcore: Option<bool>,
    n_total: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    beta: Option<f64>,
    dtau: Option<f64>,
    schedule: Option<ScheduleKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGates {
    tau: Option<f64>,
    n: Option<usize>,
    u_prime: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    n_samples: Option<usize>,
    burn_in: Option<usize>,
    seed: Option<u64>,
    initial: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruncation {
    max_bond: Option<usize>,
    cutoff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    format: Option<OutputFormat>,
}

// ---------------------------------------------------------------------
// Normalized config: fully resolved, echoed into output metadata.
// ---------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCfg {
    pub l: usize,
    pub j: f64,
    pub u: f64,
    pub mu: f64,
    pub n_max: usize,
    pub hardcore: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_total: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalCfg {
    pub beta: f64,
    pub dtau: f64,
    pub schedule: ScheduleKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatesCfg {
    /// None only in slme-sweep mode, where it selects the default tau grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub n: usize,
    pub u_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingCfg {
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub initial: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationCfg {
    pub max_bond: usize,
    pub cutoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputCfg {
    pub path: PathBuf,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gates: Option<GatesCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationCfg>,
    pub output: OutputCfg,
}

impl RunConfig {
    pub fn model(&self) -> &ModelCfg {
        self.model.as_ref().expect("mode guarantees a model section")
    }
    pub fn thermal(&self) -> &ThermalCfg {
        self.thermal.as_ref().expect("mode guarantees a thermal section")
    }
    pub fn gates(&self) -> &GatesCfg {
        self.gates.as_ref().expect("mode guarantees a gates section")
    }
    pub fn sampling(&self) -> &SamplingCfg {
        self.sampling.as_ref().expect("mode guarantees a sampling section")
    }
    pub fn truncation(&self) -> &TruncationCfg {
        self.truncation.as_ref().expect("mode guarantees a truncation section")
    }
}

/// Read, parse, and normalize a config file, applying command-line
/// overrides before validation so the echoed metadata shows effective
/// values.
pub fn load(path: &Path, seed: Option<u64>, output: Option<PathBuf>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, seed, output)
}

pub fn parse(text: &str, seed: Option<u64>, output: Option<PathBuf>) -> Result<RunConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
    normalize(raw, seed, output)
}

fn reject_section(present: bool, section: &str, mode: Mode) -> Result<()> {
    if present {
        return Err(config_err(
            section,
            format!("section is not used by mode {}", mode.name()),
        ));
    }
    Ok(())
}

fn normalize(raw: RawConfig, seed: Option<u64>, output: Option<PathBuf>) -> Result<RunConfig> {
    let mode = raw.mode;

    if seed.is_some() && !mode.samples() {
        return Err(CliError::Config(format!(
            "seed override: mode {} does not sample",
            mode.name()
        )));
    }

    if mode == Mode::Stats {
        reject_section(raw.model.is_some(), "model", mode)?;
        reject_section(raw.thermal.is_some(), "thermal", mode)?;
        reject_section(raw.gates.is_some(), "gates", mode)?;
        reject_section(raw.sampling.is_some(), "sampling", mode)?;
        reject_section(raw.truncation.is_some(), "truncation", mode)?;
        let input = raw
            .input
            .ok_or_else(|| config_err("input", "required for the stats mode"))?;
        return Ok(RunConfig {
            mode,
            input: Some(input),
            model: None,
            thermal: None,
            gates: None,
            sampling: None,
            truncation: None,
            output: normalize_output(raw.output, output, mode)?,
        });
    }
    reject_section(raw.input.is_some(), "input", mode)?;

    let model = normalize_model(raw.model, mode)?;
    let thermal = normalize_thermal(raw.thermal, model.hardcore)?;

    let gates = match mode {
        Mode::SlmeSweep | Mode::MettsCanonical | Mode::MettsGrand => {
            Some(normalize_gates(raw.gates, model.u, mode)?)
        }
        _ => {
            reject_section(raw.gates.is_some(), "gates", mode)?;
            None
        }
    };

    let (sampling, truncation) = if mode.samples() {
        let sampling = normalize_sampling(raw.sampling, seed, &model, mode)?;
        let truncation = normalize_truncation(raw.truncation)?;
        if thermal.beta > 0.0 {
            let half = 0.5 * thermal.beta;
            let steps = (half / thermal.dtau).round();
            if steps < 1.0 || (steps * thermal.dtau - half).abs() > 1e-12 {
                return Err(config_err(
                    "thermal.dtau",
                    format!("{} does not divide beta/2 = {half}", thermal.dtau),
                ));
            }
        }
        (Some(sampling), Some(truncation))
    } else {
        reject_section(raw.sampling.is_some(), "sampling", mode)?;
        reject_section(raw.truncation.is_some(), "truncation", mode)?;
        (None, None)
    };

    Ok(RunConfig {
        mode,
        input: None,
        model: Some(model),
        thermal: Some(thermal),
        gates,
        sampling,
        truncation,
        output: normalize_output(raw.output, output, mode)?,
    })
}

fn normalize_model(raw: Option<RawModel>, mode: Mode) -> Result<ModelCfg> {
    let m = raw.ok_or_else(|| {
        config_err("model", format!("section required for mode {}", mode.name()))
    })?;
    let l = m.l.ok_or_else(|| config_err("model.l", "required"))?;
    if l < 2 || l % 2 != 0 {
        return Err(config_err(
            "model.l",
            format!("must be an even chain length of at least 2 (got {l})"),
        ));
    }
    let j = m.j.unwrap_or(1.0);
    if !(j > 0.0) {
        return Err(config_err("model.j", format!("must be positive (got {j})")));
    }
    let hardcore = m.hardcore.unwrap_or(false);
    let n_max = match (hardcore, m.n_max) {
        (true, None) | (true, Some(1)) => 1,
        (true, Some(k)) => {
            return Err(config_err(
                "model.n_max",
                format!("hardcore bosons cap site occupation at 1 (got {k})"),
            ));
        }
        (false, None) => {
            return Err(config_err("model.n_max", "required unless hardcore = true"));
        }
        (false, Some(0)) => {
            return Err(config_err("model.n_max", "must be at least 1"));
        }
        (false, Some(k)) => k,
    };
    let u = m.u.unwrap_or(0.0);
    if !u.is_finite() {
        return Err(config_err("model.u", format!("must be finite (got {u})")));
    }
    if hardcore && u != 0.0 {
        return Err(config_err(
            "model.u",
            "hardcore bosons have no on-site interaction; drop u or set it to 0",
        ));
    }
    let mu = m.mu.unwrap_or(0.0);
    if !mu.is_finite() {
        return Err(config_err("model.mu", format!("must be finite (got {mu})")));
    }

    let n_total = match mode {
        Mode::MettsGrand | Mode::OracleFf => {
            if m.n_total.is_some() {
                return Err(config_err(
                    "model.n_total",
                    format!("not used by mode {}: the particle number fluctuates", mode.name()),
                ));
            }
            None
        }
        Mode::EdThermal | Mode::SlmeSweep => {
            let n = m.n_total.ok_or_else(|| {
                config_err(
                    "model.n_total",
                    format!("required for mode {} (fixed-number sector)", mode.name()),
                )
            })?;
            Some(n)
        }
        _ => m.n_total,
    };
    if let Some(n) = n_total {
        if n < 1 {
            return Err(config_err("model.n_total", "must be at least 1"));
        }
        if n > l * n_max {
            return Err(config_err(
                "model.n_total",
                format!("sector is empty: {n} particles on {l} sites with n_max {n_max}"),
            ));
        }
    }

    if mode == Mode::OracleFf && !hardcore {
        return Err(config_err(
            "model.hardcore",
            "oracle-ff maps hardcore bosons to free fermions; set hardcore = true",
        ));
    }

    Ok(ModelCfg { l, j, u, mu, n_max, hardcore, n_total })
}

fn normalize_thermal(raw: Option<RawThermal>, hardcore: bool) -> Result<ThermalCfg> {
    let t = raw.ok_or_else(|| config_err("thermal", "section required"))?;
    let beta = t.beta.ok_or_else(|| config_err("thermal.beta", "required"))?;
    if !(beta >= 0.0) {
        return Err(config_err(
            "thermal.beta",
            format!("must be non-negative (got {beta})"),
        ));
    }
    let dtau = t.dtau.unwrap_or_else(|| default_dtau(hardcore));
    if !(dtau > 0.0) {
        return Err(config_err("thermal.dtau", format!("must be positive (got {dtau})")));
    }
    Ok(ThermalCfg {
        beta,
        dtau,
        schedule: t.schedule.unwrap_or(ScheduleKind::SecondOrder),
    })
}

fn normalize_gates(raw: Option<RawGates>, u: f64, mode: Mode) -> Result<GatesCfg> {
    let g = raw.unwrap_or_default();
    if let Some(tau) = g.tau {
        if !(tau >= 0.0) {
            return Err(config_err("gates.tau", format!("must be non-negative (got {tau})")));
        }
    }
    let n = g.n.unwrap_or(1);
    if n < 1 {
        return Err(config_err("gates.n", "must be at least 1"));
    }
    let u_prime = g.u_prime.unwrap_or(u);
    if !u_prime.is_finite() {
        return Err(config_err("gates.u_prime", format!("must be finite (got {u_prime})")));
    }
    // For the sampling modes an absent tau means no basis rotation; the
    // sweep mode keeps None to request its default grid.
    let tau = if mode.samples() { Some(g.tau.unwrap_or(0.0)) } else { g.tau };
    Ok(GatesCfg { tau, n, u_prime })
}

fn normalize_sampling(
    raw: Option<RawSampling>,
    seed_override: Option<u64>,
    model: &ModelCfg,
    mode: Mode,
) -> Result<SamplingCfg> {
    let s = raw.ok_or_else(|| {
        config_err("sampling", format!("section required for mode {}", mode.name()))
    })?;
    let n_samples = s
        .n_samples
        .ok_or_else(|| config_err("sampling.n_samples", "required"))?;
    if n_samples < 1 {
        return Err(config_err("sampling.n_samples", "must be at least 1"));
    }
    let burn_in = s.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let seed = seed_override.or(s.seed).unwrap_or(0);

    let initial = match mode {
        Mode::MettsCanonical => match (s.initial, model.n_total) {
            (Some(v), n_total) => {
                check_occupations(&v, model.l, model.n_max)?;
                let total: usize = v.iter().sum();
                if total < 1 {
                    return Err(config_err("sampling.initial", "needs at least one particle"));
                }
                if let Some(n) = n_total {
                    if total != n {
                        return Err(config_err(
                            "sampling.initial",
                            format!("sums to {total} but model.n_total = {n}"),
                        ));
                    }
                }
                v
            }
            (None, Some(n)) => {
                if n % model.l != 0 {
                    return Err(config_err(
                        "model.n_total",
                        format!(
                            "no uniform start: {n} particles do not spread evenly over {} sites; \
                             give sampling.initial instead",
                            model.l
                        ),
                    ));
                }
                vec![n / model.l; model.l]
            }
            (None, None) => {
                return Err(config_err(
                    "sampling.initial",
                    "required (or set model.n_total for a uniform start)",
                ));
            }
        },
        Mode::MettsGrand => match s.initial {
            Some(v) => {
                check_occupations(&v, model.l - 2, model.n_max)?;
                v
            }
            None => vec![0; model.l - 2],
        },
        _ => unreachable!("only sampling modes normalize a sampling section"),
    };

    Ok(SamplingCfg { n_samples, burn_in, seed, initial })
}

fn check_occupations(v: &[usize], expect_len: usize, n_max: usize) -> Result<()> {
    if v.len() != expect_len {
        return Err(config_err(
            "sampling.initial",
            format!("expected {expect_len} entries (got {})", v.len()),
        ));
    }
    if let Some(&bad) = v.iter().find(|&&n| n > n_max) {
        return Err(config_err(
            "sampling.initial",
            format!("site occupation {bad} exceeds n_max {n_max}"),
        ));
    }
    Ok(())
}

fn normalize_truncation(raw: Option<RawTruncation>) -> Result<TruncationCfg> {
    let t = raw.unwrap_or_default();
    let max_bond = t.max_bond.unwrap_or(256);
    if max_bond < 1 {
        return Err(config_err("truncation.max_bond", "must be at least 1"));
    }
    let cutoff = t.cutoff.unwrap_or(1e-12);
    if !(cutoff >= 0.0) {
        return Err(config_err(
            "truncation.cutoff",
            format!("must be non-negative (got {cutoff})"),
        ));
    }
    Ok(TruncationCfg { max_bond, cutoff })
}

fn normalize_output(
    raw: Option<RawOutput>,
    path_override: Option<PathBuf>,
    mode: Mode,
) -> Result<OutputCfg> {
    let o = raw.unwrap_or_default();
    let natural = if mode.samples() { OutputFormat::Jsonl } else { OutputFormat::Csv };
    let format = o.format.unwrap_or(natural);
    if format != natural {
        return Err(config_err(
            "output.format",
            format!("mode {} writes {}", mode.name(), natural.extension()),
        ));
    }
    let path = path_override
        .or(o.path)
        .unwrap_or_else(|| PathBuf::from(format!("{}.{}", mode.name(), format.extension())));
    Ok(OutputCfg { path, format })
}
