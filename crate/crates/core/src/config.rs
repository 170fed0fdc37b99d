//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! lx = 4.0
//! nx = 64
//! ny = 33
//!
//! [model]
//! l = 1.0
//! sigma = 1.0
//! regularization = "exact"   # or "yosida" with `epsilon`
//!
//! [potential]
//! kind = "logarithmic"       # or "polynomial" with `beta`/`pi` coefficients
//! theta = 0.3
//! theta_c = 1.0
//!
//! [step]
//! tau = 1e-3
//! scheme = "convex_split"    # or "fully_implicit"
//!
//! [init]
//! kind = "seeded_noise"      # "constant" | "seeded_noise" | "checkpoint"
//! mean = 0.2
//! seed = 7
//!
//! [run]
//! t_end = 10.0
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every field has a default, so an empty document is valid. An optional
//! `[potential.boundary]` table gives the boundary potential separately, and
//! an optional `[sweep]` table lists values along one axis.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::grid::{Regime, SlabGrid};
use crate::init::NoiseSpec;
use crate::potentials::{PotentialKind, PotentialSpec, Regularization, YosidaConfig};
use crate::stepper::{ModelParams, Scheme, StepConfig};
use crate::trajectory::RunOptions;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub potential: PotentialSection,
    pub step: StepSection,
    pub init: InitSection,
    pub run: RunSection,
    pub output: OutputSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lx: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { lx: 4.0, nx: 64, ny: 33 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationKind {
    Exact,
    Yosida,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub l: f64,
    pub sigma: f64,
    pub regularization: RegularizationKind,
    /// Used only with `regularization = "yosida"`.
    pub epsilon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            l: 1.0,
            sigma: 1.0,
            regularization: RegularizationKind::Exact,
            epsilon: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKindName {
    Logarithmic,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindSection {
    pub kind: PotentialKindName,
    pub theta: f64,
    pub theta_c: f64,
    /// Polynomial coefficients of β and π in ascending order.
    pub beta: Vec<f64>,
    pub pi: Vec<f64>,
}

impl Default for KindSection {
    fn default() -> Self {
        KindSection {
            kind: PotentialKindName::Logarithmic,
            theta: 0.3,
            theta_c: 1.0,
            beta: Vec::new(),
            pi: Vec::new(),
        }
    }
}

impl KindSection {
    fn build(&self) -> Result<PotentialKind> {
        match self.kind {
            PotentialKindName::Logarithmic => PotentialKind::logarithmic(self.theta, self.theta_c),
            PotentialKindName::Polynomial => PotentialKind::polynomial(self.beta.clone(), self.pi.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialKindName,
    pub theta: f64,
    pub theta_c: f64,
    pub beta: Vec<f64>,
    pub pi: Vec<f64>,
    pub rho: f64,
    pub c0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<KindSection>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        let k = KindSection::default();
        PotentialSection {
            kind: k.kind,
            theta: k.theta,
            theta_c: k.theta_c,
            beta: k.beta,
            pi: k.pi,
            rho: 1.0,
            c0: 0.0,
            boundary: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    ConvexSplit,
    FullyImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub tau: f64,
    pub scheme: SchemeName,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub jacobian_every: u64,
    pub max_halvings: u32,
}

impl Default for StepSection {
    fn default() -> Self {
        StepSection {
            tau: 1e-3,
            scheme: SchemeName::ConvexSplit,
            newton_tol: 1e-10,
            newton_max: 50,
            jacobian_every: 50,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Constant,
    SeededNoise,
    Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub kind: InitKind,
    pub mean: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub modes_x: usize,
    pub modes_y: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            kind: InitKind::SeededNoise,
            mean: 0.2,
            amplitude: 0.05,
            seed: 7,
            modes_x: 2,
            modes_y: 1,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    /// Early stop once the sampled velocity norm falls below this; 0 disables.
    pub steady_tol: f64,
    pub record_every: u64,
    /// 0 disables checkpoints; otherwise a multiple of `step.jacobian_every`.
    pub checkpoint_every: u64,
    /// Separation level for the superlevel ladder; 0 disables it.
    pub ladder_delta: f64,
    pub ladder_levels: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 10.0,
            steady_tol: 1e-9,
            record_every: 100,
            checkpoint_every: 1000,
            ladder_delta: 0.0,
            ladder_levels: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    L,
    Epsilon,
    Mean,
    Tau,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
    /// `[nx, ny]` pairs for the grid axis.
    #[serde(default)]
    pub grids: Vec<[usize; 2]>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parse and validate. Syntax and type errors carry a line/column;
/// constraint failures are collected into one `Validation` error.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let location = e.span().map_or_else(
            || "document".to_string(),
            |s| {
                let (l, c) = line_col(text, s.start);
                format!("line {l}, column {c}")
            },
        );
        Error::Parse {
            location,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn collect<T>(bad: &mut Vec<String>, field: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Validation(v)) => {
            bad.extend(v.into_iter().map(|m| format!("{field}: {m}")));
            None
        }
        Err(e) => {
            bad.push(format!("{field}: {e}"));
            None
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let finite = |bad: &mut Vec<String>, name: &str, v: f64| {
            if !v.is_finite() {
                bad.push(format!("{name} must be finite, got {v}"));
            }
        };
        finite(&mut bad, "grid.lx", self.grid.lx);
        finite(&mut bad, "model.l", self.model.l);
        finite(&mut bad, "model.sigma", self.model.sigma);
        collect(&mut bad, "grid", SlabGrid::new(self.grid.lx, self.grid.nx, self.grid.ny));
        collect(&mut bad, "model", self.regime());
        if self.model.regularization == RegularizationKind::Yosida {
            collect(&mut bad, "model.epsilon", YosidaConfig::new(self.model.epsilon));
        }
        collect(&mut bad, "potential", self.potential_spec());
        collect(&mut bad, "step", self.step_config());
        let init = &self.init;
        if !(init.mean.abs() < 1.0) {
            bad.push(format!(
                "init.mean must lie in (-1, 1) as required of initial data by assumption A4, got {}",
                init.mean
            ));
        }
        if !(init.amplitude >= 0.0 && init.amplitude.is_finite()) {
            bad.push(format!("init.amplitude must be finite and nonnegative, got {}", init.amplitude));
        }
        if init.kind == InitKind::SeededNoise && init.modes_x == 0 && init.modes_y == 0 {
            bad.push("init: seeded noise needs at least one mode".into());
        }
        if init.kind == InitKind::Checkpoint && init.path.is_none() {
            bad.push("init.path is required when init.kind = \"checkpoint\"".into());
        }
        collect(&mut bad, "run", self.run_options());
        if self.run.checkpoint_every > 0 && !self.run.checkpoint_every.is_multiple_of(self.step.jacobian_every.max(1)) {
            bad.push(format!(
                "run.checkpoint_every ({}) must be a multiple of step.jacobian_every ({}) for bit-exact resume",
                self.run.checkpoint_every, self.step.jacobian_every
            ));
        }
        if let Some(sw) = &self.sweep {
            match sw.axis {
                SweepAxis::Grid if sw.grids.is_empty() => bad.push("sweep.grids must list [nx, ny] pairs".into()),
                SweepAxis::Grid => {}
                _ if sw.values.is_empty() => bad.push("sweep.values must not be empty".into()),
                _ => {}
            }
            for (i, v) in sw.values.iter().enumerate() {
                let mut c = self.clone();
                c.sweep = None;
                if let Err(e) = c.apply_axis(sw.axis, *v).and_then(|c| c.validate().map(|_| c)) {
                    bad.push(format!("sweep.values[{i}] = {v}: {e}"));
                }
            }
            for (i, g) in sw.grids.iter().enumerate() {
                if let Err(e) = SlabGrid::new(self.grid.lx, g[0], g[1]) {
                    bad.push(format!("sweep.grids[{i}]: {e}"));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Copy with one axis value substituted (grid sweeps use `with_grid`).
    pub fn apply_axis(&self, axis: SweepAxis, v: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            SweepAxis::L => c.model.l = v,
            SweepAxis::Epsilon => {
                c.model.regularization = RegularizationKind::Yosida;
                c.model.epsilon = v;
            }
            SweepAxis::Mean => c.init.mean = v,
            SweepAxis::Tau => c.step.tau = v,
            SweepAxis::Grid => return Err(Error::Config("grid sweeps take [nx, ny] pairs".into())),
        }
        Ok(c)
    }

    pub fn with_grid(&self, nx: usize, ny: usize) -> RunConfig {
        let mut c = self.clone();
        c.sweep = None;
        c.grid.nx = nx;
        c.grid.ny = ny;
        c
    }

    pub fn build_grid(&self) -> Result<SlabGrid> {
        SlabGrid::new(self.grid.lx, self.grid.nx, self.grid.ny)
    }

    pub fn regime(&self) -> Result<Regime> {
        Regime::new(self.model.l, self.model.sigma)
    }

    pub fn regularization(&self) -> Result<Regularization> {
        Ok(match self.model.regularization {
            RegularizationKind::Exact => Regularization::Exact,
            RegularizationKind::Yosida => Regularization::Yosida(YosidaConfig::new(self.model.epsilon)?),
        })
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let p = &self.potential;
        let bulk = KindSection {
            kind: p.kind,
            theta: p.theta,
            theta_c: p.theta_c,
            beta: p.beta.clone(),
            pi: p.pi.clone(),
        };
        let mut spec = PotentialSpec::new(bulk.build()?);
        if let Some(b) = &p.boundary {
            spec = spec.with_boundary(b.build()?);
        }
        spec.with_domination(p.rho, p.c0)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.regime()?, self.potential_spec()?, self.regularization()?)
    }

    pub fn step_config(&self) -> Result<StepConfig> {
        let s = &self.step;
        let scheme = match s.scheme {
            SchemeName::ConvexSplit => Scheme::ConvexSplit,
            SchemeName::FullyImplicit => Scheme::FullyImplicit,
        };
        let mut c = StepConfig::new(s.tau, scheme)?;
        c.newton_tol = s.newton_tol;
        c.newton_max = s.newton_max;
        c.jacobian_every = s.jacobian_every;
        c.max_halvings = s.max_halvings;
        c.validate()?;
        Ok(c)
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        let r = &self.run;
        let mut o = RunOptions::new(r.t_end, r.record_every);
        o.steady_tol = r.steady_tol;
        if r.ladder_delta != 0.0 {
            o.ladder = Some((r.ladder_delta, r.ladder_levels));
        }
        o.validate()?;
        Ok(o)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        let i = &self.init;
        NoiseSpec {
            mean: i.mean,
            amplitude: i.amplitude,
            seed: i.seed,
            modes_x: i.modes_x,
            modes_y: i.modes_y,
        }
    }

    /// φ₀ for constant and seeded-noise kinds. Checkpoint kinds are loaded
    /// by the caller.
    pub fn initial_pair(&self, grid: &SlabGrid) -> Result<FieldPair> {
        match self.init.kind {
            InitKind::Constant => crate::init::constant(grid, self.init.mean),
            InitKind::SeededNoise => crate::init::seeded_noise(grid, &self.noise_spec()),
            InitKind::Checkpoint => Err(Error::Config("checkpoint initial data must be loaded from file".into())),
        }
    }

    /// First 8 bytes of SHA-256 over the serialized grid, model, potential
    /// and step sections: everything that shapes a trajectory apart from φ₀.
    pub fn params_hash(&self) -> [u8; 8] {
        #[derive(Serialize)]
        struct Physics<'a> {
            grid: &'a GridSection,
            model: &'a ModelSection,
            potential: &'a PotentialSection,
            step: &'a StepSection,
        }
        let text = toml::to_string(&Physics {
            grid: &self.grid,
            model: &self.model,
            potential: &self.potential,
            step: &self.step,
        })
        .expect("sections are serializable");
        let digest = Sha256::digest(text.as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}
