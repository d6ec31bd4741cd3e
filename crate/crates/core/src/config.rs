//! Experiment configuration files.
//!
//! A config is a TOML document with a `kind`, a `[kernel]` table, optional
//! `[measure]` and `[potential]` tables, and one parameter table named after
//! the kind (`[zsweep]`, `[gibbs]`, ...). Unknown keys are rejected.
//! Resolving a config fills every default in, and the resolved form is what
//! gets echoed next to the results.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use crate::domain::{Domain, DomainKind};
use crate::error::{config_err, Error, Result};
use crate::kernel::{default_cutoff, Kernel, KernelFamily, SemigroupOrder};
use crate::measure::BaseMeasure;
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    KernelVerify,
    Zsweep,
    MomentsVerify,
    SdeRun,
    MvSolve,
    MflSweep,
    Gibbs,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::KernelVerify => "kernel-verify",
            ExperimentKind::Zsweep => "zsweep",
            ExperimentKind::MomentsVerify => "moments-verify",
            ExperimentKind::SdeRun => "sde-run",
            ExperimentKind::MvSolve => "mv-solve",
            ExperimentKind::MflSweep => "mfl-sweep",
            ExperimentKind::Gibbs => "gibbs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
    /// Fourier cutoff `K` (torus-log only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup_order: Option<SemigroupOrder>,
    /// Torus unless the family is free-log; the zero kernel may live on
    /// either.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainKind>,
    /// Half-width of the free-space box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl KernelSpec {
    fn resolve(&mut self) {
        let free = self.family == KernelFamily::FreeLog;
        let domain = *self.domain.get_or_insert(if free {
            DomainKind::FreeSpace
        } else {
            DomainKind::Torus
        });
        if self.family == KernelFamily::TorusLog {
            self.cutoff.get_or_insert(default_cutoff(self.dim));
        }
        if domain == DomainKind::FreeSpace {
            self.radius.get_or_insert(10.0);
        }
        self.semigroup_order.get_or_insert(if self.dim == 1 {
            SemigroupOrder::Half
        } else {
            SemigroupOrder::Full
        });
    }

    pub fn domain(&self) -> Result<Domain> {
        match self.domain.unwrap_or(DomainKind::Torus) {
            DomainKind::Torus => Domain::torus(self.dim),
            DomainKind::FreeSpace => Domain::free_space(self.dim, self.radius.unwrap_or(10.0)),
        }
    }

    pub fn build(&self) -> Result<Kernel> {
        let domain = self.domain()?;
        let mut k = match self.family {
            KernelFamily::TorusLog => {
                if !domain.is_torus() {
                    return config_err("the torus-log kernel needs domain = \"torus\"");
                }
                Kernel::torus_log_with_cutoff(self.dim, self.cutoff.unwrap_or(default_cutoff(self.dim)))?
            }
            KernelFamily::FreeLog => Kernel::free_log(domain)?,
            KernelFamily::Zero => Kernel::zero(domain),
        };
        if let Some(o) = self.semigroup_order {
            k.order = o;
        }
        Ok(k)
    }

    /// Hex SHA-256 of the resolved kernel table, used to cross-reference
    /// records that share a kernel.
    pub fn hash(&self) -> String {
        hex_digest(toml::to_string(self).expect("kernel spec serializes").as_bytes())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    #[default]
    Uniform,
    /// `1 + a·cos(2πx_1)`.
    SingleMode { amplitude: f64 },
    TwoBump {
        cells: usize,
        centers: [f64; 2],
        width: f64,
    },
    /// Inline atoms; equal weights when `weights` is omitted.
    Atomic {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl MeasureSpec {
    pub fn build(&self, domain: Domain) -> Result<BaseMeasure> {
        let d = domain.dim;
        let torus_only = |what: &str| -> Result<()> {
            if domain.is_torus() {
                Ok(())
            } else {
                config_err(format!("a {what} measure needs a torus domain"))
            }
        };
        match self {
            MeasureSpec::Uniform => {
                torus_only("uniform")?;
                Ok(BaseMeasure::uniform(domain))
            }
            MeasureSpec::SingleMode { amplitude } => {
                torus_only("single-mode")?;
                BaseMeasure::single_mode(d, *amplitude)
            }
            MeasureSpec::TwoBump {
                cells,
                centers,
                width,
            } => {
                torus_only("two-bump")?;
                if !(*width > 0.0) {
                    return config_err("two-bump width must be positive");
                }
                BaseMeasure::two_bump(d, *cells, *centers, *width)
            }
            MeasureSpec::Atomic { points, weights } => {
                if points.iter().any(|p| p.len() != d) {
                    return config_err(format!("every atom needs {d} coordinates"));
                }
                let w = match weights {
                    Some(w) => w.clone(),
                    None => vec![1.0 / points.len() as f64; points.len()],
                };
                BaseMeasure::atomic(domain, points.concat(), w)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `a·cos(2πx_1)` on the torus.
    SingleMode { amplitude: f64 },
    /// `(s/2)|x|²` in free space.
    Quadratic { strength: f64 },
}

impl PotentialSpec {
    pub fn build(&self, domain: &Domain) -> Result<Potential> {
        let v = match self {
            PotentialSpec::Zero => Potential::Zero,
            PotentialSpec::SingleMode { amplitude } => Potential::single_mode(domain.dim, *amplitude),
            PotentialSpec::Quadratic { strength } => Potential::Quadratic { strength: *strength },
        };
        v.check(domain)?;
        Ok(v)
    }
}

fn powers_of_two(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|j| 2f64.powi(-j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelVerifyParams {
    /// Points in `(0, 1)` for the closed-form comparison (torus-log, d = 1).
    pub closed_form_points: usize,
    pub diagonal_epsilons: Vec<f64>,
    /// Bound on max/min of `W_ε(x,x)/(|ln ε| + 1)`.
    pub diagonal_ratio_max: f64,
    pub besov_p: u32,
    pub besov_epsilons: Vec<f64>,
    pub superharm_epsilons: Vec<f64>,
    pub superharm_grid: usize,
    pub superharm_tolerance: f64,
    /// `N` values for the annealing probe of the energy lower bound; empty
    /// skips it.
    pub probe_n_values: Vec<usize>,
    pub probe_restarts: usize,
}

impl Default for KernelVerifyParams {
    fn default() -> Self {
        KernelVerifyParams {
            closed_form_points: 64,
            diagonal_epsilons: powers_of_two(4, 12),
            diagonal_ratio_max: 3.0,
            besov_p: 4,
            besov_epsilons: powers_of_two(4, 9),
            superharm_epsilons: powers_of_two(4, 10),
            superharm_grid: 64,
            superharm_tolerance: 1e-6,
            probe_n_values: Vec::new(),
            probe_restarts: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZsweepParams {
    pub n_values: Vec<usize>,
    pub betas: Vec<f64>,
    pub eps: f64,
    pub samples: usize,
    pub min_ess: f64,
    /// Compare with exact enumeration when the measure is atomic and
    /// `m^N` stays below this.
    pub enumeration_limit: u64,
}

impl Default for ZsweepParams {
    fn default() -> Self {
        ZsweepParams {
            n_values: (1..=8).map(|j| 1usize << j).collect(),
            betas: vec![1.0, 2.0],
            eps: 0.0,
            samples: 100_000,
            min_ess: 50.0,
            enumeration_limit: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsParams {
    /// `(n, p)` pairs for the exact combinatorial audit.
    pub combinatorics: Vec<[usize; 2]>,
    /// `(n, m, p)` triples for enumeration against Monte Carlo.
    pub oracle_cases: Vec<[usize; 3]>,
    pub oracle_samples: usize,
    /// Agreement threshold in standard errors.
    pub oracle_tolerance: f64,
    /// `p` values for the correlation-inequality scaling check (empty skips
    /// it); uses the configured kernel centered on the measure.
    pub corineq_p: Vec<usize>,
    pub corineq_gamma: f64,
    pub corineq_n_values: Vec<usize>,
    pub corineq_samples: usize,
    pub corineq_eps: f64,
}

impl Default for MomentsParams {
    fn default() -> Self {
        MomentsParams {
            combinatorics: vec![[2, 1], [2, 2], [3, 2], [3, 3], [4, 2]],
            oracle_cases: [2, 4, 6]
                .iter()
                .flat_map(|&n| [2, 4].into_iter().flat_map(move |m| (1..=4).map(move |p| [n, m, p])))
                .collect(),
            oracle_samples: 100_000,
            oracle_tolerance: 4.0,
            corineq_p: Vec::new(),
            corineq_gamma: 0.5,
            corineq_n_values: vec![4, 8, 16, 32, 64],
            corineq_samples: 20_000,
            corineq_eps: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeRunParams {
    pub n: usize,
    pub dt: f64,
    pub eps_reg: f64,
    /// Per-particle drift cap; 0 means `10/√dt`.
    pub force_cap: f64,
    pub times: Vec<f64>,
}

impl Default for SdeRunParams {
    fn default() -> Self {
        SdeRunParams {
            n: 64,
            dt: 1e-3,
            eps_reg: crate::dynamics::sde::DEFAULT_EPS_REG,
            force_cap: 0.0,
            times: vec![0.0, 0.1, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvSolveParams {
    pub cells: usize,
    pub dt: f64,
    pub eps_reg: f64,
    pub t_end: f64,
    pub save_every: usize,
    /// Relative tolerance of the heat-equation mode decay (zero kernel,
    /// zero potential, single-mode initial datum).
    pub heat_tolerance: f64,
    /// Sup-norm tolerance for a uniform datum staying uniform.
    pub stationarity_tolerance: f64,
    /// Allowed step-to-step increase of the free energy.
    pub free_energy_slack: f64,
}

impl Default for MvSolveParams {
    fn default() -> Self {
        MvSolveParams {
            cells: 64,
            dt: 1e-3,
            eps_reg: crate::dynamics::sde::DEFAULT_EPS_REG,
            t_end: 0.5,
            save_every: 10,
            heat_tolerance: 1e-6,
            stationarity_tolerance: 1e-10,
            free_energy_slack: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MflSweepParams {
    pub n_values: Vec<usize>,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub dt: f64,
    pub eps_reg: f64,
    pub pde_cells: usize,
    pub pde_dt: f64,
    /// Accepted range of the fitted slope at every time.
    pub slope_range: [f64; 2],
}

impl Default for MflSweepParams {
    fn default() -> Self {
        MflSweepParams {
            n_values: vec![8, 16, 32, 64, 128],
            times: vec![0.1, 0.5],
            replicas: 64,
            dt: 1e-3,
            eps_reg: crate::dynamics::sde::DEFAULT_EPS_REG,
            pde_cells: 64,
            pde_dt: 1e-3,
            slope_range: [-1.3, -0.7],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsParams {
    pub n_values: Vec<usize>,
    pub eps: f64,
    pub minimizer_cells: usize,
    pub minimizer_damping: f64,
    pub minimizer_tol: f64,
    pub minimizer_max_iter: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub is_samples: usize,
    pub slope_range: [f64; 2],
    /// `N` at which the two `log Z_N` estimators must agree.
    pub cross_check_n: usize,
    /// Also run the `W = 0` control with the same settings.
    pub zero_control: bool,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams {
            n_values: vec![4, 8, 16, 32, 64, 128],
            eps: 0.0,
            minimizer_cells: 256,
            minimizer_damping: 1.0,
            minimizer_tol: 1e-12,
            minimizer_max_iter: 10_000,
            burn_in: 5000,
            samples: 50_000,
            is_samples: 100_000,
            slope_range: [-1.3, -0.7],
            cross_check_n: 16,
            zero_control: true,
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Write trajectory snapshots (sde-run).
    #[serde(default)]
    pub dump: bool,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default, rename = "kernel-verify", skip_serializing_if = "Option::is_none")]
    pub kernel_verify: Option<KernelVerifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zsweep: Option<ZsweepParams>,
    #[serde(default, rename = "moments-verify", skip_serializing_if = "Option::is_none")]
    pub moments_verify: Option<MomentsParams>,
    #[serde(default, rename = "sde-run", skip_serializing_if = "Option::is_none")]
    pub sde_run: Option<SdeRunParams>,
    #[serde(default, rename = "mv-solve", skip_serializing_if = "Option::is_none")]
    pub mv_solve: Option<MvSolveParams>,
    #[serde(default, rename = "mfl-sweep", skip_serializing_if = "Option::is_none")]
    pub mfl_sweep: Option<MflSweepParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsParams>,
}

/// Parse failure with the 1-based position of the offending token, when
/// known.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ParseError {}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.chars().rev().take_while(|c| *c != '\n').count() + 1;
    (line, col)
}

impl ExperimentConfig {
    /// Parses, resolves defaults and validates.
    pub fn parse(text: &str) -> std::result::Result<ExperimentConfig, ParseError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(s) => {
                    let (l, c) = position(text, s.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ParseError {
                message: e.message().to_string(),
                line,
                column,
            }
        })?;
        cfg.resolve().map_err(|e| ParseError {
            message: e.to_string(),
            line: None,
            column: None,
        })?;
        Ok(cfg)
    }

    /// Fills defaults and checks cross-field constraints.
    pub fn resolve(&mut self) -> Result<()> {
        self.kernel.resolve();
        let tables = [
            (ExperimentKind::KernelVerify, self.kernel_verify.is_some()),
            (ExperimentKind::Zsweep, self.zsweep.is_some()),
            (ExperimentKind::MomentsVerify, self.moments_verify.is_some()),
            (ExperimentKind::SdeRun, self.sde_run.is_some()),
            (ExperimentKind::MvSolve, self.mv_solve.is_some()),
            (ExperimentKind::MflSweep, self.mfl_sweep.is_some()),
            (ExperimentKind::Gibbs, self.gibbs.is_some()),
        ];
        for (kind, present) in tables {
            if present && kind != self.kind {
                return config_err(format!(
                    "table [{}] does not apply to kind = \"{}\"",
                    kind.name(),
                    self.kind.name()
                ));
            }
        }
        match self.kind {
            ExperimentKind::KernelVerify => {
                self.kernel_verify.get_or_insert_with(Default::default);
            }
            ExperimentKind::Zsweep => {
                self.zsweep.get_or_insert_with(Default::default);
            }
            ExperimentKind::MomentsVerify => {
                self.moments_verify.get_or_insert_with(Default::default);
            }
            ExperimentKind::SdeRun => {
                self.sde_run.get_or_insert_with(Default::default);
            }
            ExperimentKind::MvSolve => {
                self.mv_solve.get_or_insert_with(Default::default);
            }
            ExperimentKind::MflSweep => {
                self.mfl_sweep.get_or_insert_with(Default::default);
            }
            ExperimentKind::Gibbs => {
                self.gibbs.get_or_insert_with(Default::default);
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return config_err(format!("seed must be at most {}", i64::MAX));
        }
        if self.workers == 0 {
            return config_err("workers must be at least 1");
        }
        let kernel = self.kernel.build()?;
        if self.kernel.family != KernelFamily::TorusLog && self.kernel.cutoff.is_some() {
            return config_err("cutoff only applies to the torus-log kernel");
        }
        let measure = self.measure.build(kernel.domain)?;
        self.potential.build(&kernel.domain)?;
        let increasing = |v: &[usize]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if let Some(p) = &self.zsweep {
            if !increasing(&p.n_values) || p.n_values[0] == 0 {
                return config_err("zsweep.n_values must be positive and increasing");
            }
            if p.betas.is_empty() || p.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                return config_err("zsweep.betas must be positive");
            }
            if p.samples < 2 {
                return config_err("zsweep.samples must be at least 2");
            }
        }
        if let Some(p) = &self.moments_verify {
            if p.oracle_cases.iter().any(|c| c[0] < 2 || c[1] == 0 || c[2] == 0) {
                return config_err("moments-verify.oracle_cases need n ≥ 2, m ≥ 1, p ≥ 1");
            }
            if !p.corineq_p.is_empty() && !measure.is_atomic() && !kernel.domain.is_torus() {
                return config_err("the correlation check needs a torus kernel or an atomic measure");
            }
        }
        if let Some(p) = &self.sde_run {
            if p.n == 0 || !(p.dt > 0.0) || p.force_cap < 0.0 {
                return config_err("sde-run needs n ≥ 1, dt > 0 and force_cap ≥ 0");
            }
            if measure.is_atomic() {
                return config_err("sde-run draws its initial condition from a measure with a density");
            }
        }
        if let Some(p) = &self.mfl_sweep {
            if !increasing(&p.n_values) {
                return config_err("mfl-sweep.n_values must be increasing");
            }
            if p.slope_range[0] > p.slope_range[1] {
                return config_err("mfl-sweep.slope_range must be [low, high]");
            }
        }
        if let Some(p) = &self.mv_solve {
            if !(p.dt > 0.0 && p.t_end >= 0.0) || p.save_every == 0 {
                return config_err("mv-solve needs dt > 0, t_end ≥ 0 and save_every ≥ 1");
            }
        }
        if let Some(p) = &self.gibbs {
            if !increasing(&p.n_values) || p.n_values[0] == 0 || *p.n_values.last().unwrap() > 256 {
                return config_err("gibbs.n_values must be increasing within 1..=256");
            }
            if p.slope_range[0] > p.slope_range[1] {
                return config_err("gibbs.slope_range must be [low, high]");
            }
            if !self.measure_is_uniform() {
                return config_err("gibbs draws μ̄ from the minimizer; leave [measure] uniform");
            }
        }
        Ok(())
    }

    fn measure_is_uniform(&self) -> bool {
        self.measure == MeasureSpec::Uniform
    }

    /// The resolved config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    /// Hex SHA-256 of the echoed config, without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        hex_digest(c.to_toml().as_bytes())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        self.kernel.build()
    }

    pub fn measure(&self) -> Result<BaseMeasure> {
        self.measure.build(self.kernel.domain()?)
    }

    pub fn potential(&self) -> Result<Potential> {
        self.potential.build(&self.kernel.domain()?)
    }
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Error {
        Error::Config(e.to_string())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_position() {
        let text = "kind = \"zsweep\"\n[kernel]\nfamily = \"torus-log\"\ndim = 2\ncutof = 8\n";
        let e = ExperimentConfig::parse(text).unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("cutof"), "{}", e.message);
    }

    #[test]
    fn foreign_table_is_rejected() {
        let text = "kind = \"zsweep\"\n[kernel]\nfamily = \"torus-log\"\ndim = 2\n[gibbs]\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "kind = \"moments-verify\"\nseed = 3\n[kernel]\nfamily = \"torus-log\"\ndim = 1\n\
                    [measure]\nkind = \"atomic\"\npoints = [[0.1], [0.5], [0.7]]\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }
}
