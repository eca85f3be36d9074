//! Spec ingestion and task dispatch.

use std::path::Path;
use std::time::Instant;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use isoshift::bcl::{self, BCLTuple, ValidateOptions};
use isoshift::blhfactor::{self, BlhOptions, InvariantSubspaceSpec, SubspaceSource};
use isoshift::canon::{self, ExtractOptions, Multiplier, PolydiscShift};
use isoshift::coeffspace::{DegreeGrid, TruncationMode};
use isoshift::cstar::{self, CStarOptions, CStarSpec};
use isoshift::report::{Check, Environment, Tolerances, VerificationReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("precondition: {0}")]
    Precondition(isoshift::error::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Precondition(_) => 3,
        }
    }
}

impl From<isoshift::error::Error> for RunError {
    fn from(e: isoshift::error::Error) -> Self {
        if e.is_schema() {
            RunError::Schema(e.to_string())
        } else {
            RunError::Precondition(e)
        }
    }
}

fn schema(e: impl std::fmt::Display) -> RunError {
    RunError::Schema(e.to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Strict,
    Lossy,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Strict => "strict",
            Mode::Lossy => "lossy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ValidateBcl,
    ExtractModel,
    FactorInvariant,
    CstarCheck,
    FullEquivalence,
}

/// Per-class tolerance overrides; a bare number overrides all of them.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TolSpec {
    Uniform(f64),
    Classes {
        structural: Option<f64>,
        identity: Option<f64>,
        equivalence: Option<f64>,
        rank_rel: Option<f64>,
        rank_abs: Option<f64>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub task: Task,
    pub input: Value,
    #[serde(default)]
    pub trunc: Option<usize>,
    #[serde(default)]
    pub tol: Option<TolSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Only for the cstar tasks: also run main2 with cyclically relabeled variables.
    #[serde(default)]
    pub permuted_variants: bool,
}

/// Command-line overrides of the spec fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub trunc: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

fn positive(name: &str, x: f64) -> Result<f64, RunError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(RunError::Schema(format!("{name} must be positive, got {x}")))
    }
}

fn tolerances(spec: Option<&TolSpec>, cli: Option<f64>) -> Result<Tolerances, RunError> {
    if let Some(x) = cli {
        return Ok(Tolerances::uniform(positive("tol", x)?));
    }
    let mut t = Tolerances::default();
    match spec {
        None => {}
        Some(TolSpec::Uniform(x)) => t = Tolerances::uniform(positive("tol", *x)?),
        Some(TolSpec::Classes { structural, identity, equivalence, rank_rel, rank_abs }) => {
            let set = |slot: &mut f64, v: &Option<f64>, name: &str| -> Result<(), RunError> {
                if let Some(x) = v {
                    *slot = positive(name, *x)?;
                }
                Ok(())
            };
            set(&mut t.structural, structural, "tol.structural")?;
            set(&mut t.identity, identity, "tol.identity")?;
            set(&mut t.equivalence, equivalence, "tol.equivalence")?;
            set(&mut t.rank.rel, rank_rel, "tol.rank_rel")?;
            set(&mut t.rank.abs, rank_abs, "tol.rank_abs")?;
        }
    }
    Ok(t)
}

fn decode<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, RunError> {
    serde_json::from_value(v.clone()).map_err(schema)
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ExtractInput {
    /// The coordinate shifts of `H^2(D^n)`.
    Polydisc { n: usize },
    /// `M_{Phi_i}` on `H^2_E(D)` for the symbols of a tuple.
    Symbols(BCLTuple),
}

pub struct Outcome {
    pub report: VerificationReport,
}

pub fn load(path: &Path) -> Result<RunSpec, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(schema)
}

pub fn run(spec: &RunSpec, ov: &Overrides) -> Result<Outcome, RunError> {
    let started = Instant::now();
    let tol = tolerances(spec.tol.as_ref(), ov.tol)?;
    let seed = ov.seed.or(spec.seed).unwrap_or(0);
    let mode = ov.mode.or(spec.mode).unwrap_or_default();
    let trunc = ov.trunc.or(spec.trunc);
    if let Some(t) = trunc {
        if t < 2 {
            return Err(RunError::Schema(format!("trunc must be at least 2, got {t}")));
        }
    }

    let (mut report, grid_trunc) = match spec.task {
        Task::ValidateBcl => {
            let t: BCLTuple = decode(&spec.input)?;
            let r = bcl::bcl_validate(&t, &ValidateOptions { tol, all_orders: t.n <= 4, window: None });
            (r, vec![])
        }
        Task::ExtractModel => {
            let input: ExtractInput = decode(&spec.input)?;
            let opts = ExtractOptions { tol, ..Default::default() };
            match input {
                ExtractInput::Polydisc { n } => {
                    if n == 0 {
                        return Err(RunError::Schema("n must be positive".into()));
                    }
                    let grid = DegreeGrid::polydisc(n, trunc.unwrap_or(8));
                    let m = canon::extract_model(&PolydiscShift::tuple(&grid), &opts)?;
                    (m.report, grid.trunc)
                }
                ExtractInput::Symbols(t) => {
                    let n = trunc.unwrap_or(2 * t.n * t.n + 2 * t.e + 4);
                    let m = canon::extract_model(&Multiplier::model_tuple(&t, n), &opts)?;
                    let mut r = m.report;
                    let w = bcl::bcl_intertwiner(&t, &m.tuple, &tol, seed);
                    r.extend_prefixed("round_trip", w.report);
                    (r, vec![n])
                }
            }
        }
        Task::FactorInvariant => {
            let mut s: InvariantSubspaceSpec = decode(&spec.input)?;
            if let (Some(t), SubspaceSource::Theta(_)) = (trunc, &s.source) {
                s.trunc = Some(t);
            }
            let f = blhfactor::factor(&s, &BlhOptions { tol, ..Default::default() })?;
            let grid = f.theta.subspace.grid.trunc.clone();
            (f.report, grid)
        }
        Task::CstarCheck | Task::FullEquivalence => {
            let mut c: CStarSpec = decode(&spec.input)?;
            c.permuted_variants |= spec.permuted_variants;
            let grid = c.grid(trunc)?;
            let lossy = mode == Mode::Lossy;
            let dropped = c.clip_to(&grid, if lossy { TruncationMode::Lossy } else { TruncationMode::Strict })?;
            let opts = CStarOptions { tol, ..Default::default() };
            let mut r = if spec.task == Task::CstarCheck {
                cstar::run_cstar_check(&c, trunc, &opts)?
            } else {
                cstar::run_full_equivalence(&c, trunc, &opts)?
            };
            if lossy {
                r.push(Check::flag("input.truncation", "terms outside the grid dropped", true).with_loss(dropped));
            }
            (r, grid.trunc)
        }
    };

    report.environment = Some(Environment {
        trunc: grid_trunc,
        tol: ov.tol.unwrap_or(tol.identity),
        seed,
        mode: mode.as_str().into(),
        wall_time: started.elapsed().as_secs_f64(),
    });
    Ok(Outcome { report })
}

/// Cap the worker pool from `ISOSHIFT_THREADS`.
pub fn configure_threads(value: Option<String>) -> Result<(), RunError> {
    if let Some(v) = value {
        let n: usize = v.trim().parse().map_err(|_| RunError::Schema(format!("ISOSHIFT_THREADS={v:?} is not a thread count")))?;
        if n == 0 {
            return Err(RunError::Schema("ISOSHIFT_THREADS must be at least 1".into()));
        }
        isoshift::par::configure_threads(n);
    }
    Ok(())
}
