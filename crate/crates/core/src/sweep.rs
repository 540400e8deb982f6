//! Run configuration, presets and CSV output for power sweeps.
//!
//! Settings are layered: built-in defaults, then an optional preset, then a
//! TOML file, then explicit overrides (command-line flags).

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::channel::{correlation_matrix, ArrayKind, CorrelationModel, SystemTopology};
use crate::coupling::{analytic_dipole_coupling, ConstraintBox, CouplingMatrix, HALF_WAVE_SELF_IMPEDANCE};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, ExperimentSpec, PrecoderKind, SweepPoint};
use crate::genetic::GaConfig;
use crate::text::{format_complex, parse_complex};

/// Index of the transmitter whose array is switched between ULA and ESPAR.
pub const ESPAR_TX: usize = 1;
pub const DEFAULT_SPACING: f64 = 0.14;
pub const PRESETS: [&str; 2] = ["paper-fig2", "paper-fig3"];

/// A value given either once or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCorrelation {
    pub model: Option<String>,
    pub rho: Option<f64>,
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoupling {
    pub source: Option<String>,
    pub spacing: Option<f64>,
    pub self_impedance: Option<String>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMaxSinr {
    pub max_iterations: Option<i64>,
    pub convergence_tol: Option<f64>,
}

/// Unresolved settings as they appear in a file or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub preset: Option<String>,
    pub users: Option<i64>,
    pub antennas: Option<i64>,
    pub power_db: Option<Vec<f64>>,
    pub trials: Option<i64>,
    pub seed: Option<i64>,
    pub precoder: Option<OneOrMany>,
    pub tx2_array: Option<OneOrMany>,
    pub noise_var: Option<f64>,
    pub correlation: Option<RawCorrelation>,
    pub coupling: Option<RawCoupling>,
    pub constraints: Option<ConstraintBox>,
    pub optimizer: Option<GaConfig>,
    pub max_sinr: Option<RawMaxSinr>,
    pub out: Option<PathBuf>,
    pub jobs: Option<i64>,
    pub verbosity: Option<i64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => { $( if $src.$f.is_some() { $dst.$f = $src.$f; } )* };
}

impl RawConfig {
    /// Parses TOML text. Relative coupling paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            Error::Config { field, message: msg }
        })?;
        if let (Some(base), Some(c)) = (base, raw.coupling.as_mut()) {
            if let Some(p) = c.path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(raw)
    }

    /// Fields set in `other` replace those in `self`; nested tables are merged
    /// key by key.
    pub fn overlay(mut self, other: RawConfig) -> RawConfig {
        overlay!(self, other; preset, users, antennas, power_db, trials, seed, precoder, tx2_array,
            noise_var, constraints, optimizer, out, jobs, verbosity);
        if let Some(o) = other.correlation {
            let mut c = self.correlation.take().unwrap_or_default();
            overlay!(c, o; model, rho, spacing);
            self.correlation = Some(c);
        }
        if let Some(o) = other.coupling {
            let mut c = self.coupling.take().unwrap_or_default();
            overlay!(c, o; source, spacing, self_impedance, path);
            self.coupling = Some(c);
        }
        if let Some(o) = other.max_sinr {
            let mut c = self.max_sinr.take().unwrap_or_default();
            overlay!(c, o; max_iterations, convergence_tol);
            self.max_sinr = Some(c);
        }
        self
    }
}

/// Settings of a named experiment preset.
pub fn preset(name: &str) -> Result<RawConfig> {
    let precoder = match name {
        "paper-fig2" => PrecoderKind::IaClosedForm,
        "paper-fig3" => PrecoderKind::MaxSinr,
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}`; valid: {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(RawConfig {
        users: Some(3),
        antennas: Some(2),
        power_db: Some((0..=8).map(|i| 5.0 * i as f64).collect()),
        trials: Some(1000),
        precoder: Some(OneOrMany::One(precoder.label().into())),
        tx2_array: Some(OneOrMany::Many(vec!["ula".into(), "espar".into()])),
        noise_var: Some(1.0),
        ..RawConfig::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationSettings {
    #[serde(flatten)]
    pub model: CorrelationModel,
    pub spacing: f64,
}

fn ser_complex<S: Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_complex(*z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CouplingSource {
    Analytic {
        spacing: f64,
        #[serde(serialize_with = "ser_complex")]
        self_impedance: Complex64,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxSinrSettings {
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

/// Settings that affect how a run executes but not its results.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
    pub verbosity: u8,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub users: usize,
    pub antennas: usize,
    pub power_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub precoder: Vec<PrecoderKind>,
    pub tx2_array: Vec<ArrayKind>,
    pub noise_var: f64,
    pub correlation: CorrelationSettings,
    pub coupling: CouplingSource,
    pub constraints: ConstraintBox,
    pub optimizer: GaConfig,
    pub max_sinr: MaxSinrSettings,
    #[serde(skip)]
    pub options: RunOptions,
}

fn positive(field: &str, v: Option<i64>, default: i64) -> Result<usize> {
    let v = v.unwrap_or(default);
    if v < 1 {
        return Err(Error::config(field, format!("must be >= 1, got {v}")));
    }
    Ok(v as usize)
}

fn finite_positive(field: &str, v: Option<f64>, default: f64) -> Result<f64> {
    let v = v.unwrap_or(default);
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(field, format!("must be finite and > 0, got {v}")));
    }
    Ok(v)
}

fn resolve_correlation(raw: Option<RawCorrelation>) -> Result<CorrelationSettings> {
    let raw = raw.unwrap_or_default();
    let spacing = finite_positive("correlation.spacing", raw.spacing, DEFAULT_SPACING)?;
    let model = match raw.model.as_deref().unwrap_or("jakes") {
        "jakes" => {
            if raw.rho.is_some() {
                return Err(Error::config("correlation.rho", "only valid with model = \"exponential\""));
            }
            CorrelationModel::Jakes
        }
        "exponential" => {
            let rho = raw
                .rho
                .ok_or_else(|| Error::config("correlation.rho", "required for the exponential model"))?;
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::config("correlation.rho", format!("must be in [0, 1), got {rho}")));
            }
            CorrelationModel::Exponential { rho }
        }
        other => {
            return Err(Error::config(
                "correlation.model",
                format!("unknown model `{other}`; valid: jakes, exponential"),
            ))
        }
    };
    Ok(CorrelationSettings { model, spacing })
}

fn resolve_coupling(raw: Option<RawCoupling>, antennas: usize) -> Result<CouplingSource> {
    let raw = raw.unwrap_or_default();
    let source = raw.source.as_deref().unwrap_or(if raw.path.is_some() { "file" } else { "analytic" });
    let src = match source {
        "analytic" => {
            if raw.path.is_some() {
                return Err(Error::config("coupling.path", "only valid with source = \"file\""));
            }
            let self_impedance = match raw.self_impedance.as_deref() {
                Some(s) => parse_complex(s).map_err(|m| Error::config("coupling.self_impedance", m))?,
                None => HALF_WAVE_SELF_IMPEDANCE,
            };
            CouplingSource::Analytic {
                spacing: finite_positive("coupling.spacing", raw.spacing, DEFAULT_SPACING)?,
                self_impedance,
            }
        }
        "file" => {
            if raw.spacing.is_some() || raw.self_impedance.is_some() {
                return Err(Error::config("coupling", "spacing/self_impedance only valid with source = \"analytic\""));
            }
            let path = raw.path.ok_or_else(|| Error::config("coupling.path", "required for source = \"file\""))?;
            if !path.is_file() {
                return Err(Error::config("coupling.path", format!("file `{}` does not exist", path.display())));
            }
            CouplingSource::File { path }
        }
        other => {
            return Err(Error::config(
                "coupling.source",
                format!("unknown source `{other}`; valid: analytic, file"),
            ))
        }
    };
    let z = src_matrix(&src, antennas).map_err(|e| Error::config("coupling", e.to_string()))?;
    if z.n_t() != antennas {
        return Err(Error::config(
            "coupling",
            format!("coupling matrix has {} elements but TX 2 has {antennas} antennas", z.n_t()),
        ));
    }
    Ok(src)
}

impl RunConfig {
    /// Applies defaults and validates every field.
    pub fn resolve(raw: RawConfig) -> Result<RunConfig> {
        let raw = match raw.preset.as_deref() {
            Some(name) => preset(name)?.overlay(raw),
            None => raw,
        };
        let users = positive("users", raw.users, 3)?;
        if users < 2 {
            return Err(Error::config("users", "need at least 2 users (TX 2 must exist)"));
        }
        let antennas = positive("antennas", raw.antennas, 2)?;
        if antennas < 2 {
            return Err(Error::config("antennas", "a parasitic array needs at least 2 elements"));
        }

        let power_db = raw.power_db.unwrap_or_else(|| (0..=8).map(|i| 5.0 * i as f64).collect());
        if power_db.is_empty() {
            return Err(Error::config("power_db", "must contain at least one value"));
        }
        if power_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("power_db", "values must be finite"));
        }
        if power_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("power_db", "must be strictly increasing"));
        }

        let trials = positive("trials", raw.trials, 1000)?;
        let seed = match raw.seed {
            Some(s) if s < 0 => return Err(Error::config("seed", format!("must be >= 0, got {s}"))),
            Some(s) => s as u64,
            None => 1,
        };
        let precoder = parse_list("precoder", raw.precoder, &["ia-closed-form"], |s| s.parse::<PrecoderKind>())?;
        if precoder.contains(&PrecoderKind::IaClosedForm) && (users != 3 || antennas != 2) {
            return Err(Error::config("precoder", "ia-closed-form requires users = 3 and antennas = 2"));
        }
        let tx2_array = parse_list("tx2_array", raw.tx2_array, &["ula", "espar"], |s| s.parse::<ArrayKind>())?;
        let noise_var = finite_positive("noise_var", raw.noise_var, 1.0)?;
        let correlation = resolve_correlation(raw.correlation)?;

        let coupling = resolve_coupling(raw.coupling, antennas)?;

        let constraints = raw.constraints.unwrap_or_default();
        constraints
            .validate()
            .map_err(|e| Error::config("constraints", e.to_string()))?;
        let optimizer = raw.optimizer.unwrap_or_default();
        optimizer
            .validate()
            .map_err(|e| Error::config("optimizer", e.to_string()))?;
        let ms = raw.max_sinr.unwrap_or_default();
        let max_sinr = MaxSinrSettings {
            max_iterations: positive("max_sinr.max_iterations", ms.max_iterations, 100)?,
            convergence_tol: finite_positive("max_sinr.convergence_tol", ms.convergence_tol, 1e-6)?,
        };

        let jobs = match raw.jobs {
            Some(j) if j < 0 => return Err(Error::config("jobs", format!("must be >= 0, got {j}"))),
            Some(j) => j as usize,
            None => 0,
        };
        let verbosity = match raw.verbosity {
            Some(v) if !(0..=255).contains(&v) => {
                return Err(Error::config("verbosity", format!("must be in 0..=255, got {v}")))
            }
            Some(v) => v as u8,
            None => 0,
        };

        Ok(RunConfig {
            users,
            antennas,
            power_db,
            trials,
            seed,
            precoder,
            tx2_array,
            noise_var,
            correlation,
            coupling,
            constraints,
            optimizer,
            max_sinr,
            options: RunOptions {
                out: raw.out,
                jobs,
                verbosity,
            },
        })
    }

    /// Resolved settings as TOML. Execution options are not included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable as TOML")
    }

    pub fn coupling_matrix(&self) -> Result<CouplingMatrix> {
        src_matrix(&self.coupling, self.antennas)
    }

    /// Experiment for one (precoder, array) combination.
    pub fn experiment(&self, precoder: PrecoderKind, kind: ArrayKind) -> Result<ExperimentSpec> {
        let r = correlation_matrix(self.antennas, self.correlation.spacing, self.correlation.model)?;
        let topology = SystemTopology::uniform(self.users, self.antennas)?.with_array(ESPAR_TX, kind, r)?;
        Ok(ExperimentSpec {
            topology,
            espar_tx: ESPAR_TX,
            precoder,
            power_db: self.power_db.clone(),
            trials: self.trials,
            base_seed: self.seed,
            noise_vars: vec![self.noise_var; self.users],
            constraints: self.constraints,
            coupling: self.coupling_matrix()?,
            optimizer: self.optimizer,
            max_iterations: self.max_sinr.max_iterations,
            convergence_tol: self.max_sinr.convergence_tol,
        })
    }
}

fn src_matrix(src: &CouplingSource, n: usize) -> Result<CouplingMatrix> {
    match src {
        CouplingSource::Analytic { spacing, self_impedance } => analytic_dipole_coupling(n, *spacing, *self_impedance),
        CouplingSource::File { path } => CouplingMatrix::from_file(path),
    }
}

fn parse_list<T: PartialEq>(
    field: &str,
    raw: Option<OneOrMany>,
    default: &[&str],
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let items = raw
        .map(OneOrMany::into_vec)
        .unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect());
    if items.is_empty() {
        return Err(Error::config(field, "must name at least one value"));
    }
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for s in &items {
        let v = parse(s).map_err(|m| Error::config(field, m))?;
        if out.contains(&v) {
            return Err(Error::config(field, format!("`{s}` listed twice")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Parses and resolves TOML text (an empty string gives all defaults).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::resolve(RawConfig::from_toml(text, None)?)
}

/// Reads, parses and resolves a configuration file.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    RunConfig::resolve(RawConfig::from_toml(&text, path.parent())?)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub precoder: PrecoderKind,
    pub tx2_array: ArrayKind,
    pub point: SweepPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

/// CSV column names for `users` receivers.
pub fn csv_columns(users: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["power_db", "precoder", "tx2_array", "sum_rate"].map(String::from).to_vec();
    cols.extend((1..=users).map(|k| format!("rate_u{k}")));
    cols.extend(["mean_leakage", "mean_residual", "feasibility_rate", "trials", "seed"].map(String::from));
    cols
}

/// Renders rows as CSV, preceded by `# ` comment lines with the resolved config.
pub fn render_csv(config: &RunConfig, rows: &[SweepRow]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("# espar-sim {}\n", env!("CARGO_PKG_VERSION")));
    for line in config.to_toml().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(csv_columns(config.users)).map_err(io)?;
    for row in rows {
        let p = &row.point;
        let mut rec = vec![
            p.power_db.to_string(),
            row.precoder.label().to_string(),
            row.tx2_array.label().to_string(),
            p.sum_rate.to_string(),
        ];
        rec.extend(p.per_user_rates.iter().map(f64::to_string));
        rec.extend([
            p.mean_leakage.to_string(),
            p.mean_residual.to_string(),
            p.feasibility_rate.to_string(),
            p.trials.to_string(),
            config.seed.to_string(),
        ]);
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

/// Fixed-width table of the sweep for terminal output.
pub fn summary_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>8}  {:<14}  {:<5}  {:>9}  {:>11}  {:>11}  {:>9}  {:>8}\n",
        "P [dB]", "precoder", "tx2", "sum rate", "single link", "leakage", "residual", "feasible"
    );
    for r in rows {
        let p = &r.point;
        s.push_str(&format!(
            "{:>8.1}  {:<14}  {:<5}  {:>9.4}  {:>11.4}  {:>11.3e}  {:>9.2e}  {:>8.3}\n",
            p.power_db,
            r.precoder.label(),
            r.tx2_array.label(),
            p.sum_rate,
            p.single_link_rate,
            p.mean_leakage,
            p.mean_residual,
            p.feasibility_rate
        ));
    }
    s
}

/// Runs every (precoder, array) combination over the power grid and writes
/// the CSV when an output path is configured.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.options.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for &precoder in &config.precoder {
        for &kind in &config.tx2_array {
            let spec = config.experiment(precoder, kind)?;
            log::info!("running {} / {} ({} trials)", precoder.label(), kind.label(), spec.trials);
            let points = pool.install(|| run_experiment(&spec))?;
            rows.extend(points.into_iter().map(|point| SweepRow {
                precoder,
                tx2_array: kind,
                point,
            }));
        }
    }
    let csv = render_csv(config, &rows)?;
    if let Some(path) = &config.options.out {
        std::fs::write(path, &csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(SweepOutput { rows, csv })
}
