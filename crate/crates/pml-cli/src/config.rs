//! Run configuration: command-line flags, optional JSON config files, and
//! the merge of the two into one fully resolved, hashable record.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use pml_core::{
    make_haar_workload, make_histogram_workload, make_range_workload, parse_workload_csv,
    BoundKind, Workload64,
};

use crate::CliError;

/// Generator seed used when a range spec omits one. Fixed so the default
/// range workload is a stable, documented instance.
pub const DEFAULT_RANGE_SEED: u64 = 3;
/// Default workload size for the sweep presets.
pub const DEFAULT_SWEEP_K: usize = 8;
/// Default noise scale.
pub const DEFAULT_B: f64 = 1.0;
/// Default alpha grid: 50 log-spaced points from 1e-3 up to 1/k.
pub const DEFAULT_ALPHA_START: f64 = 1e-3;
pub const DEFAULT_ALPHA_POINTS: usize = 50;
/// Default epsilon grid: 30 linear points on [0.1, 2.2].
pub const DEFAULT_EPS_START: f64 = 0.1;
pub const DEFAULT_EPS_STOP: f64 = 2.2;
pub const DEFAULT_EPS_POINTS: usize = 30;
/// Default oracle parameters.
pub const DEFAULT_N: usize = 2;
pub const DEFAULT_TRIALS: usize = 1000;
/// Relative tolerance handed to the calibration solver.
pub const CALIBRATION_TOL_REL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "pml",
    version,
    about = "Context-aware leakage bounds for linear query workloads under Laplace noise",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<CommandName>,

    /// JSON config file; explicit flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Workload source: family:k[:m[:seed]] with family histogram|range|haar,
    /// or @path.csv
    #[arg(long, global = true, value_name = "SPEC")]
    pub workload: Option<String>,

    /// Laplace noise scale
    #[arg(long, global = true, value_name = "B")]
    pub b: Option<f64>,

    /// Prior class floor, in (0, 1/k]
    #[arg(long, global = true, value_name = "ALPHA")]
    pub alpha: Option<f64>,

    /// Alpha grid as start:stop:points:log|lin
    #[arg(long = "alpha-grid", global = true, value_name = "GRID")]
    pub alpha_grid: Option<String>,

    /// Target leakage budget in nats (calibrate)
    #[arg(long, global = true, value_name = "EPS")]
    pub eps: Option<f64>,

    /// Epsilon grid as start:stop:points:log|lin
    #[arg(long = "eps-grid", global = true, value_name = "GRID")]
    pub eps_grid: Option<String>,

    /// Bound kind, repeatable: exact_pml|simplified_pml|dp|trivial
    #[arg(long = "kind", global = true, value_name = "KIND")]
    pub kinds: Vec<String>,

    /// Record count for oracle certification
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,

    /// Certification trial count
    #[arg(long, global = true, value_name = "TRIALS")]
    pub trials: Option<usize>,

    /// Certification RNG seed
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Output file; stdout when omitted
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    /// Write a generated workload as CSV
    Gen,
    /// Evaluate leakage bounds at fixed b and alpha
    Bound,
    /// Calibrate the minimal noise scale for a target budget
    Calibrate,
    /// Sweep all bounds over an alpha grid (CSV)
    SweepAlpha,
    /// Sweep calibrated noise scales over an epsilon grid (CSV)
    SweepEpsilon,
    /// Certify the exact bound against the enumeration oracle
    Certify,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Gen => "gen",
            CommandName::Bound => "bound",
            CommandName::Calibrate => "calibrate",
            CommandName::SweepAlpha => "sweep-alpha",
            CommandName::SweepEpsilon => "sweep-epsilon",
            CommandName::Certify => "certify",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "gen" => Ok(CommandName::Gen),
            "bound" => Ok(CommandName::Bound),
            "calibrate" => Ok(CommandName::Calibrate),
            "sweep-alpha" => Ok(CommandName::SweepAlpha),
            "sweep-epsilon" => Ok(CommandName::SweepEpsilon),
            "certify" => Ok(CommandName::Certify),
            other => Err(CliError::Usage(format!(
                "unknown command {other:?}; expected one of gen, bound, calibrate, \
                 sweep-alpha, sweep-epsilon, certify"
            ))),
        }
    }
}

/// JSON config file schema. Field names match the long flags; unknown keys
/// are rejected so a typo cannot silently change a run.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub workload: Option<String>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<String>,
    pub eps: Option<f64>,
    pub eps_grid: Option<String>,
    pub kinds: Option<Vec<String>>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

/// Evaluation grid parsed from `start:stop:points:log|lin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub log: bool,
}

impl Grid {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = spec.split(':').collect();
        let usage = |msg: &str| {
            CliError::Usage(format!(
                "grid {spec:?}: {msg}; expected start:stop:points:log|lin"
            ))
        };
        if parts.len() != 4 {
            return Err(usage("wrong number of fields"));
        }
        let start: f64 = parts[0].parse().map_err(|_| usage("bad start"))?;
        let stop: f64 = parts[1].parse().map_err(|_| usage("bad stop"))?;
        let points: usize = parts[2].parse().map_err(|_| usage("bad point count"))?;
        let log = match parts[3] {
            "log" => true,
            "lin" => false,
            _ => return Err(usage("scale must be log or lin")),
        };
        if !start.is_finite() || !stop.is_finite() {
            return Err(usage("endpoints must be finite"));
        }
        if points < 2 {
            return Err(usage("needs at least 2 points"));
        }
        if stop <= start {
            return Err(usage("needs positive extent (stop > start)"));
        }
        if log && start <= 0.0 {
            return Err(usage("log scale needs start > 0"));
        }
        Ok(Grid {
            start,
            stop,
            points,
            log,
        })
    }

    /// Grid values with exact endpoints.
    pub fn values(&self) -> Vec<f64> {
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    self.start
                } else if i + 1 == self.points {
                    self.stop
                } else {
                    let t = i as f64 / (self.points - 1) as f64;
                    if self.log {
                        self.start * (self.stop / self.start).powf(t)
                    } else {
                        self.start + t * (self.stop - self.start)
                    }
                }
            })
            .collect()
    }

    /// Canonical spec string; feeds the config hash.
    pub fn spec_string(&self) -> String {
        format!(
            "{}:{}:{}:{}",
            self.start,
            self.stop,
            self.points,
            if self.log { "log" } else { "lin" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Histogram,
    Range,
    Haar,
}

/// Workload source: a generator spec or an external CSV file.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Family {
        family: Family,
        k: usize,
        m: usize,
        seed: Option<u64>,
    },
    Csv(PathBuf),
}

impl WorkloadSource {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if let Some(path) = spec.strip_prefix('@') {
            if path.is_empty() {
                return Err(CliError::Usage("workload spec @ needs a file path".into()));
            }
            return Ok(WorkloadSource::Csv(PathBuf::from(path)));
        }
        let usage = |msg: String| CliError::Usage(format!("workload spec {spec:?}: {msg}"));
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 4 {
            return Err(usage("expected family:k[:m[:seed]] or @path.csv".into()));
        }
        let family = match parts[0] {
            "histogram" => Family::Histogram,
            "range" => Family::Range,
            "haar" => Family::Haar,
            other => {
                return Err(usage(format!(
                    "unknown family {other:?}; expected histogram, range, or haar"
                )))
            }
        };
        let k: usize = parts[1]
            .parse()
            .map_err(|_| usage(format!("bad k {:?}", parts[1])))?;
        let m_given: Option<usize> = match parts.get(2) {
            Some(s) => Some(s.parse().map_err(|_| usage(format!("bad m {s:?}")))?),
            None => None,
        };
        let seed_given: Option<u64> = match parts.get(3) {
            Some(s) => Some(s.parse().map_err(|_| usage(format!("bad seed {s:?}")))?),
            None => None,
        };
        if k < 2 {
            return Err(usage("needs k >= 2".into()));
        }
        let (m, seed) = match family {
            Family::Histogram => {
                if seed_given.is_some() {
                    return Err(usage("histogram takes no seed".into()));
                }
                if let Some(m) = m_given {
                    if m != k {
                        return Err(usage(format!("histogram has m = k, got m={m}, k={k}")));
                    }
                }
                (k, None)
            }
            Family::Haar => {
                if seed_given.is_some() {
                    return Err(usage("haar takes no seed".into()));
                }
                if !k.is_power_of_two() {
                    return Err(usage(format!("haar needs a power-of-two k, got {k}")));
                }
                // ones row plus 1 + 2 + ... + k/2 difference rows: m = k
                if let Some(m) = m_given {
                    if m != k {
                        return Err(usage(format!("haar has m = k, got m={m}, k={k}")));
                    }
                }
                (k, None)
            }
            Family::Range => {
                let m = m_given.unwrap_or(k);
                if m == 0 {
                    return Err(usage("needs m >= 1".into()));
                }
                (m, Some(seed_given.unwrap_or(DEFAULT_RANGE_SEED)))
            }
        };
        Ok(WorkloadSource::Family { family, k, m, seed })
    }

    /// Canonical spec string with defaults filled in; feeds the config hash.
    pub fn spec_string(&self) -> String {
        match self {
            WorkloadSource::Family {
                family: Family::Histogram,
                k,
                ..
            } => format!("histogram:{k}"),
            WorkloadSource::Family {
                family: Family::Haar,
                k,
                ..
            } => format!("haar:{k}"),
            WorkloadSource::Family {
                family: Family::Range,
                k,
                m,
                seed,
            } => format!("range:{k}:{m}:{}", seed.unwrap_or(DEFAULT_RANGE_SEED)),
            WorkloadSource::Csv(path) => format!("@{}", path.display()),
        }
    }

    /// Builds the workload. Carries the generator seed it used (range only)
    /// and the raw CSV bytes for file sources so the config hash can cover
    /// the actual input data.
    pub fn build(&self) -> Result<BuiltWorkload, CliError> {
        match self {
            WorkloadSource::Family { family, k, m, seed } => {
                let w = match family {
                    Family::Histogram => make_histogram_workload(*k),
                    Family::Haar => make_haar_workload(*k),
                    Family::Range => make_range_workload(*k, *m, seed.unwrap()),
                }
                .map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(BuiltWorkload { workload: w, seed: *seed, csv_bytes: None })
            }
            WorkloadSource::Csv(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read workload {}: {e}", path.display()))
                })?;
                let w = parse_workload_csv(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                Ok(BuiltWorkload {
                    workload: w,
                    seed: None,
                    csv_bytes: Some(text.into_bytes()),
                })
            }
        }
    }
}

/// A workload realized from its source spec, with the provenance the config
/// hash needs.
pub struct BuiltWorkload {
    pub workload: Workload64,
    pub seed: Option<u64>,
    pub csv_bytes: Option<Vec<u8>>,
}

pub fn parse_kind(s: &str) -> Result<BoundKind, CliError> {
    match s {
        "exact_pml" => Ok(BoundKind::ExactPml),
        "simplified_pml" => Ok(BoundKind::SimplifiedPml),
        "dp" => Ok(BoundKind::Dp),
        "trivial" => Ok(BoundKind::Trivial),
        other => Err(CliError::Usage(format!(
            "unknown bound kind {other:?}; expected exact_pml, simplified_pml, dp, or trivial"
        ))),
    }
}

/// Fully resolved run: command plus every input the command consumes, with
/// defaults applied. Hashing this record (plus raw CSV bytes for file
/// workloads) pins the run for the output metadata.
#[derive(Debug)]
pub struct Resolved {
    pub command: CommandName,
    pub source: WorkloadSource,
    pub workload: Workload64,
    pub workload_seed: Option<u64>,
    pub workload_bytes: Option<Vec<u8>>,
    pub b: f64,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<Grid>,
    pub eps: Option<f64>,
    pub eps_grid: Option<Grid>,
    pub kinds: Vec<BoundKind>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Resolved {
    /// Canonical JSON record of the inputs that determine the output bytes.
    /// The output path is deliberately excluded: results do not depend on
    /// where they are written.
    pub fn config_record(&self) -> serde_json::Value {
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.as_str()).collect();
        let mut record = json!({
            "command": self.command.as_str(),
            "workload": self.source.spec_string(),
        });
        let obj = record.as_object_mut().unwrap();
        match self.command {
            CommandName::Gen => {}
            CommandName::Bound => {
                obj.insert("b".into(), json!(self.b));
                obj.insert("alpha".into(), json!(self.alpha));
                obj.insert("kinds".into(), json!(kinds));
            }
            CommandName::Calibrate => {
                obj.insert("eps".into(), json!(self.eps));
                obj.insert("alpha".into(), json!(self.alpha));
                obj.insert("kinds".into(), json!(kinds));
            }
            CommandName::SweepAlpha => {
                obj.insert("b".into(), json!(self.b));
                obj.insert(
                    "alpha_grid".into(),
                    json!(self.alpha_grid.as_ref().unwrap().spec_string()),
                );
            }
            CommandName::SweepEpsilon => {
                obj.insert("alpha".into(), json!(self.alpha));
                obj.insert(
                    "eps_grid".into(),
                    json!(self.eps_grid.as_ref().unwrap().spec_string()),
                );
            }
            CommandName::Certify => {
                obj.insert("b".into(), json!(self.b));
                obj.insert("alpha".into(), json!(self.alpha));
                obj.insert("n".into(), json!(self.n));
                obj.insert("trials".into(), json!(self.trials));
                obj.insert("seed".into(), json!(self.seed));
            }
        }
        record
    }

    /// Oracle RNG seed, present only for commands that sample.
    pub fn oracle_seed(&self) -> Option<u64> {
        match self.command {
            CommandName::Certify => Some(self.seed),
            _ => None,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Merges flags over the config file, applies per-command defaults, and
/// validates every field the command consumes.
pub fn resolve(cli: Cli) -> Result<Resolved, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let file_command = file.command.as_deref().map(CommandName::parse).transpose()?;
    let command = match (cli.command, file_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(usage(format!(
                "command {} conflicts with config command {}",
                a.as_str(),
                b.as_str()
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(usage(
                "no command given; pass a subcommand or set \"command\" in the config",
            ))
        }
    };

    // Flags override file values.
    let workload_spec = cli.workload.or(file.workload);
    let b = cli.b.or(file.b);
    let alpha = cli.alpha.or(file.alpha);
    let alpha_grid = cli.alpha_grid.or(file.alpha_grid);
    let eps = cli.eps.or(file.eps);
    let eps_grid = cli.eps_grid.or(file.eps_grid);
    let kind_names = if cli.kinds.is_empty() {
        file.kinds.unwrap_or_default()
    } else {
        cli.kinds
    };
    let n = cli.n.or(file.n);
    let trials = cli.trials.or(file.trials);
    let seed = cli.seed.or(file.seed);
    let out = cli.out.or(file.out.map(PathBuf::from));

    // A field the command never reads is a mistake, not noise to ignore.
    use CommandName::*;
    let applicability: &[(bool, &str, &[CommandName])] = &[
        (b.is_some(), "b", &[Bound, SweepAlpha, Certify]),
        (
            alpha.is_some(),
            "alpha",
            &[Bound, Calibrate, SweepEpsilon, Certify],
        ),
        (alpha_grid.is_some(), "alpha-grid", &[SweepAlpha]),
        (eps.is_some(), "eps", &[Calibrate]),
        (eps_grid.is_some(), "eps-grid", &[SweepEpsilon]),
        (!kind_names.is_empty(), "kind", &[Bound, Calibrate]),
        (n.is_some(), "n", &[Certify]),
        (trials.is_some(), "trials", &[Certify]),
        (seed.is_some(), "seed", &[Certify]),
    ];
    for (given, name, allowed) in applicability {
        if *given && !allowed.contains(&command) {
            return Err(usage(format!(
                "{} does not take {name}",
                command.as_str()
            )));
        }
    }

    // Workload: sweeps default to the standard presets, everything else
    // must name its input.
    let source = match workload_spec.as_deref() {
        Some(spec) => WorkloadSource::parse(spec)?,
        None => match command {
            CommandName::SweepAlpha => WorkloadSource::parse(&format!(
                "histogram:{DEFAULT_SWEEP_K}"
            ))?,
            CommandName::SweepEpsilon => {
                WorkloadSource::parse(&format!("haar:{DEFAULT_SWEEP_K}"))?
            }
            _ => {
                return Err(usage(format!(
                    "{} needs --workload (family:k[:m[:seed]] or @path.csv)",
                    command.as_str()
                )))
            }
        },
    };
    let built = source.build()?;
    let (workload, workload_seed, workload_bytes) =
        (built.workload, built.seed, built.csv_bytes);
    let k = workload.k();

    let b = b.unwrap_or(DEFAULT_B);
    if !(b > 0.0) || !b.is_finite() {
        return Err(usage(format!("noise scale b must be positive, got {b}")));
    }

    if let Some(a) = alpha {
        if !(a > 0.0) || a > 1.0 / k as f64 {
            return Err(usage(format!(
                "alpha must satisfy 0 < alpha <= 1/k, got alpha={a}, k={k}"
            )));
        }
    }

    let alpha_grid = match (command, alpha_grid) {
        (CommandName::SweepAlpha, Some(spec)) => Some(Grid::parse(&spec)?),
        (CommandName::SweepAlpha, None) => {
            let stop = 1.0 / k as f64;
            if stop <= DEFAULT_ALPHA_START {
                return Err(usage(format!(
                    "no default alpha grid for k={k}; pass --alpha-grid"
                )));
            }
            Some(Grid {
                start: DEFAULT_ALPHA_START,
                stop,
                points: DEFAULT_ALPHA_POINTS,
                log: true,
            })
        }
        (_, Some(_)) => {
            return Err(usage(format!(
                "{} does not take --alpha-grid",
                command.as_str()
            )))
        }
        (_, None) => None,
    };
    if let Some(g) = &alpha_grid {
        if g.start <= 0.0 || g.stop > 1.0 / k as f64 + 1e-15 {
            return Err(usage(format!(
                "alpha grid must lie in (0, 1/k] = (0, {}], got [{}, {}]",
                1.0 / k as f64,
                g.start,
                g.stop
            )));
        }
    }

    let eps_grid = match (command, eps_grid) {
        (CommandName::SweepEpsilon, Some(spec)) => Some(Grid::parse(&spec)?),
        (CommandName::SweepEpsilon, None) => Some(Grid {
            start: DEFAULT_EPS_START,
            stop: DEFAULT_EPS_STOP,
            points: DEFAULT_EPS_POINTS,
            log: false,
        }),
        (_, Some(_)) => {
            return Err(usage(format!(
                "{} does not take --eps-grid",
                command.as_str()
            )))
        }
        (_, None) => None,
    };
    if let Some(g) = &eps_grid {
        if g.start <= 0.0 {
            return Err(usage(format!(
                "epsilon grid must be positive, got start {}",
                g.start
            )));
        }
    }

    if let Some(e) = eps {
        if !(e > 0.0) || !e.is_finite() {
            return Err(usage(format!(
                "target budget eps must be positive and finite, got {e}"
            )));
        }
    }

    let mut kinds = Vec::new();
    for name in &kind_names {
        let kind = parse_kind(name)?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }

    // Per-command requirements.
    let alpha = match command {
        CommandName::Bound => {
            if kinds.is_empty() {
                kinds = vec![
                    BoundKind::ExactPml,
                    BoundKind::SimplifiedPml,
                    BoundKind::Dp,
                    BoundKind::Trivial,
                ];
            }
            let needs_prior = kinds.iter().any(|k| *k != BoundKind::Dp);
            if needs_prior && alpha.is_none() {
                return Err(usage(
                    "bound needs --alpha for the exact_pml, simplified_pml, and trivial kinds",
                ));
            }
            alpha
        }
        CommandName::Calibrate => {
            if kinds.is_empty() {
                kinds = vec![BoundKind::ExactPml];
            }
            if kinds.contains(&BoundKind::Trivial) {
                return Err(usage(
                    "calibrate supports exact_pml, simplified_pml, and dp; the trivial \
                     bound does not depend on the noise scale",
                ));
            }
            if eps.is_none() {
                return Err(usage("calibrate needs --eps (target budget in nats)"));
            }
            let needs_prior = kinds.iter().any(|k| *k != BoundKind::Dp);
            if needs_prior && alpha.is_none() {
                return Err(usage(
                    "calibrate needs --alpha for the exact_pml and simplified_pml kinds",
                ));
            }
            alpha
        }
        CommandName::SweepEpsilon => Some(alpha.unwrap_or(1.0 / k as f64)),
        CommandName::SweepAlpha => None,
        CommandName::Certify => match alpha {
            Some(a) => Some(a),
            None => return Err(usage("certify needs --alpha")),
        },
        CommandName::Gen => None,
    };

    let n = n.unwrap_or(DEFAULT_N);
    if command == CommandName::Certify && n == 0 {
        return Err(usage("certify needs n >= 1"));
    }

    Ok(Resolved {
        command,
        source,
        workload,
        workload_seed,
        workload_bytes,
        b,
        alpha,
        alpha_grid,
        eps,
        eps_grid,
        kinds,
        n,
        trials: trials.unwrap_or(DEFAULT_TRIALS),
        seed: seed.unwrap_or(0),
        out,
    })
}
