//! Runs one configured experiment: dispatches to the owning module, writes
//! CSV/JSON artifacts and a verdict record into the output directory.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use crate::config::{ExperimentConfig, ExperimentKind, MeasureSpec, PotentialSpec};
use crate::domain::Domain;
use crate::dynamics::{self, PdeParams, PdeState, SdeParams, SweepParams};
use crate::energy::{probe_lower_bound, EnergyEvaluator};
use crate::error::{Error, Result};
use crate::fft;
use crate::gibbs::{self, EntropyParams, EntropyTable, MalaParams, MinimizerParams};
use crate::kernel::{self, Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::moments::{self, AtomicPair, CenteredKernel, CorineqVerdict, PairSource};
use crate::partition;
use crate::rng::Seed;

/// Non-restricted terms below `VANISHING_RTOL·sup|G|^p` count as zero when
/// the centered table carries rounding.
pub const VANISHING_RTOL: f64 = 1e-12;
/// Relative floor on the Monte Carlo standard error in oracle comparisons.
pub const ROUNDING_FLOOR: f64 = 1e-10;

pub const RECORD_FILE: &str = "record.json";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(check: &str, ok: bool, detail: String) -> Verdict {
        Verdict {
            check: check.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

/// `(x, y, ci)` points of a fitted-slope experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ci: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub kind: ExperimentKind,
    pub version: String,
    pub config_hash: String,
    pub kernel_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub verdicts: Vec<Verdict>,
    /// Data files, relative to the output directory.
    pub files: Vec<String>,
    pub series: Vec<PlotSeries>,
}

impl ExperimentRecord {
    /// 0 when every verdict passes, 2 on any failure, 3 when the rest are
    /// inconclusive.
    pub fn exit_code(&self) -> i32 {
        status_code(self.verdicts.iter().map(|v| v.status))
    }
}

pub fn status_code<I: IntoIterator<Item = Status>>(statuses: I) -> i32 {
    let mut code = 0;
    for s in statuses {
        match s {
            Status::Fail => return 2,
            Status::Inconclusive => code = 3,
            Status::Pass => {}
        }
    }
    code
}

pub fn version_string(config_hash: &str) -> String {
    format!("loggas-{}-g{}", env!("CARGO_PKG_VERSION"), &config_hash[..12])
}

/// Collects artifacts before they are written.
struct Outputs {
    files: Vec<(String, String)>,
    verdicts: Vec<Verdict>,
    series: Vec<PlotSeries>,
    summary: String,
}

impl Outputs {
    fn new() -> Outputs {
        Outputs {
            files: Vec::new(),
            verdicts: Vec::new(),
            series: Vec::new(),
            summary: String::new(),
        }
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.file(name, serde_json::to_string_pretty(value)? + "\n");
        Ok(())
    }

    fn verdict(&mut self, v: Verdict) {
        let _ = writeln!(self.summary, "{:?} {}: {}", v.status, v.check, v.detail);
        self.verdicts.push(v);
    }

    fn note(&mut self, line: String) {
        self.summary.push_str(&line);
        self.summary.push('\n');
    }
}

/// Runs the experiment on a pool of `cfg.workers` threads and writes the
/// results into `cfg.output` (created if needed).
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let out = pool.install(|| dispatch(cfg))?;
    let dir = &cfg.output;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_ECHO), cfg.to_toml())?;
    let mut files = vec![CONFIG_ECHO.to_string()];
    for (name, contents) in &out.files {
        fs::write(dir.join(name), contents)?;
        files.push(name.clone());
    }
    let hash = cfg.hash();
    let record = ExperimentRecord {
        kind: cfg.kind,
        version: version_string(&hash),
        config_hash: hash,
        kernel_hash: cfg.kernel.hash(),
        seed: cfg.seed,
        workers: cfg.workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        verdicts: out.verdicts,
        files,
        series: out.series,
    };
    let mut summary = format!(
        "{} ({})\nseed {} workers {} wall time {:.2} s\n",
        cfg.kind.name(),
        record.version,
        cfg.seed,
        cfg.workers,
        record.wall_time_s
    );
    summary.push_str(&out.summary);
    fs::write(dir.join("summary.txt"), summary)?;
    fs::write(
        dir.join(RECORD_FILE),
        serde_json::to_string_pretty(&record)? + "\n",
    )?;
    Ok(record)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Outputs> {
    let kernel = cfg.kernel()?;
    let seed = Seed(cfg.seed);
    let mut out = Outputs::new();
    match cfg.kind {
        ExperimentKind::KernelVerify => kernel_verify(cfg, &kernel, seed, &mut out)?,
        ExperimentKind::Zsweep => zsweep(cfg, &kernel, seed, &mut out)?,
        ExperimentKind::MomentsVerify => moments_verify(cfg, &kernel, seed, &mut out)?,
        ExperimentKind::SdeRun => sde_run(cfg, &kernel, seed, &mut out)?,
        ExperimentKind::MvSolve => mv_solve(cfg, &kernel, &mut out)?,
        ExperimentKind::MflSweep => mfl_sweep(cfg, &kernel, seed, &mut out)?,
        ExperimentKind::Gibbs => gibbs_rates(cfg, &kernel, seed, &mut out)?,
    }
    Ok(out)
}

/// Max/min of `W_ε(x,x)/(|ln ε| + 1)`.
pub fn diagonal_ratio(epsilons: &[f64], diagonals: &[f64]) -> f64 {
    let r: Vec<f64> = epsilons
        .iter()
        .zip(diagonals)
        .map(|(e, w)| w / (e.ln().abs() + 1.0))
        .collect();
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// No upward trend beyond a factor 2 between consecutive probe ratios.
pub fn probe_trend_ok(ratios: &[f64]) -> bool {
    ratios.windows(2).all(|w| w[1] <= 2.0 * w[0].abs())
}

fn kernel_verify(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.kernel_verify.as_ref().expect("resolved");
    let d = kernel.dim();
    if kernel.family == KernelFamily::TorusLog && d == 1 && p.closed_form_points > 0 {
        let mut csv = String::from("x,series,closed_form,error,bound\n");
        let mut worst = 0.0f64;
        let mut ok = true;
        for j in 0..p.closed_form_points {
            let x = (j as f64 + 0.5) / p.closed_form_points as f64;
            let s = kernel.eval(&[x], &[0.0])?;
            let c = kernel::torus_1d_closed_form(x);
            let b = kernel.pointwise_tail_bound(0.0, &[x]);
            let err = (s - c).abs();
            ok &= err <= b;
            worst = worst.max(err / b);
            let _ = writeln!(csv, "{x},{s},{c},{err},{b}");
        }
        out.file("closed_form.csv", csv);
        out.verdict(Verdict::new(
            "closed-form",
            ok,
            format!("max error/tail bound = {worst:.3}"),
        ));
    }
    if !kernel.is_zero() {
        let diag = p
            .diagonal_epsilons
            .iter()
            .map(|&e| kernel.diagonal(e))
            .collect::<Result<Vec<f64>>>()?;
        let ratio = diagonal_ratio(&p.diagonal_epsilons, &diag);
        let mut csv = String::from("eps,diagonal,normalized\n");
        for (e, w) in p.diagonal_epsilons.iter().zip(&diag) {
            let _ = writeln!(csv, "{e},{w},{}", w / (e.ln().abs() + 1.0));
        }
        out.file("diagonal.csv", csv);
        out.verdict(Verdict::new(
            "logarithmic-diagonal",
            ratio <= p.diagonal_ratio_max,
            format!("max/min = {ratio:.3} (limit {})", p.diagonal_ratio_max),
        ));
    }
    if kernel.family == KernelFamily::TorusLog {
        let measure = cfg.measure()?;
        let rep = kernel::verify_besov(kernel, &measure, p.besov_p, &p.besov_epsilons)?;
        let half = d as f64 / 2.0;
        let (lo, hi) = (0.5 * half, 1.5 * half);
        match &rep.fitted_exponents.kappa {
            Some(f) if d != 2 => out.note(format!("besov exponent {:.4}; no predicted value for d = {d}", f.exponent)),
            Some(f) => out.verdict(Verdict::new(
                "besov-exponent",
                (lo..=hi).contains(&f.exponent),
                format!("kappa = {:.4}, accepted [{lo}, {hi}]", f.exponent),
            )),
            None => out.verdict(Verdict {
                check: "besov-exponent".into(),
                status: Status::Inconclusive,
                detail: "no positive norms to fit".into(),
            }),
        }
        out.file("besov.csv", rep.to_csv());
        out.json("besov.json", &rep)?;
    }
    if kernel.family != KernelFamily::Zero {
        let rep = kernel::verify_superharmonicity(kernel, &p.superharm_epsilons, p.superharm_grid)?;
        let min = rep.superharm_minima.iter().copied().fold(f64::INFINITY, f64::min);
        if d == 2 {
            out.verdict(Verdict::new(
                "superharmonicity",
                min >= -p.superharm_tolerance,
                format!("grid minimum {min:e} (tolerance {:e})", p.superharm_tolerance),
            ));
        } else {
            out.note(format!("superharmonicity minimum {min:e}; no sign claim for d = {d}"));
        }
        out.file("superharmonicity.csv", rep.to_csv());
        out.json("superharmonicity.json", &rep)?;
    }
    if !p.probe_n_values.is_empty() {
        let measure = cfg.measure()?;
        let rows = probe_lower_bound(kernel, &measure, &p.probe_n_values, p.probe_restarts, seed.child(1))?;
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let mut csv = String::from("n,min_energy,ratio,best_restart\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{}", r.n, r.min_energy, r.ratio, r.best_restart);
        }
        out.file("probe.csv", csv);
        out.verdict(Verdict::new(
            "energy-lower-bound",
            probe_trend_ok(&ratios),
            format!("min/(-ln N) = {ratios:.3?}"),
        ));
    }
    Ok(())
}

fn zsweep(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.zsweep.as_ref().expect("resolved");
    let measure = cfg.measure()?;
    let reports = partition::sweep_partition_multi(kernel, &measure, &p.n_values, &p.betas, p.eps, p.samples, seed)?;
    let mut csv = String::from("n,beta,eps,samples,mean,ci,ess,seed\n");
    for rep in &reports {
        for e in &rep.estimates {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                e.n, e.beta, e.eps, e.samples, e.mean, e.ci_halfwidth, e.ess, cfg.seed
            );
        }
        let b = rep.beta;
        let below: Vec<usize> = rep
            .estimates
            .iter()
            .filter(|e| e.mean < rep.jensen_bound - e.ci_halfwidth)
            .map(|e| e.n)
            .collect();
        out.verdict(Verdict::new(
            &format!("jensen-lower-bound beta={b}"),
            below.is_empty(),
            format!("bound {:.6}; below at N = {below:?}", rep.jensen_bound),
        ));
        out.verdict(Verdict::new(
            &format!("trend-flat beta={b}"),
            rep.trend_flat,
            format!(
                "last quarter {:.5} vs first quarter {:.5} + 2·{:.5}",
                rep.last_quarter_mean, rep.first_quarter_mean, rep.quarter_ci
            ),
        ));
        let min_ess = rep.estimates.iter().map(|e| e.ess).fold(f64::INFINITY, f64::min);
        out.verdict(Verdict::new(
            &format!("ess beta={b}"),
            min_ess >= p.min_ess,
            format!("smallest ESS {min_ess:.1} (need {})", p.min_ess),
        ));
        out.series.push(PlotSeries {
            name: format!("Z beta={b}"),
            x_label: "N".into(),
            y_label: "Z_N".into(),
            x: rep.estimates.iter().map(|e| e.n as f64).collect(),
            y: rep.estimates.iter().map(|e| e.mean).collect(),
            ci: rep.estimates.iter().map(|e| e.ci_halfwidth).collect(),
        });
    }
    out.file("zsweep.csv", csv);
    out.json("zsweep.json", &reports)?;

    if let Some((_, w)) = measure.atom_points() {
        let mut csv = String::from("n,beta,exact,mean,se\n");
        let mut worst = 0.0f64;
        let mut checked = 0;
        for rep in &reports {
            for e in &rep.estimates {
                if (w.len() as f64).powi(e.n as i32) > p.enumeration_limit as f64 {
                    continue;
                }
                let exact = partition::enumerate_partition(kernel, p.eps, &measure, e.n, e.beta)?;
                let _ = writeln!(csv, "{},{},{exact},{},{}", e.n, e.beta, e.mean, e.std_error);
                worst = worst.max((e.mean - exact).abs() / e.std_error);
                checked += 1;
            }
        }
        if checked > 0 {
            out.file("enumeration.csv", csv);
            out.verdict(Verdict::new(
                "enumeration",
                worst <= 3.0,
                format!("{checked} estimates, worst deviation {worst:.2} SE"),
            ));
        }
    }
    Ok(())
}

/// `m` equally spaced, equally weighted atoms along the first axis.
pub fn spaced_atoms(domain: Domain, m: usize) -> Result<BaseMeasure> {
    let d = domain.dim;
    let mut pts = vec![0.0; m * d];
    for j in 0..m {
        pts[j * d] = (j as f64 + 0.5) / m as f64 - if domain.is_torus() { 0.0 } else { 0.5 };
    }
    BaseMeasure::atomic(domain, pts, vec![1.0 / m as f64; m])
}

/// Centered table of `W_ε` over the atoms of `measure`.
pub fn centered_table(kernel: &Kernel, eps: f64, measure: &BaseMeasure) -> Result<AtomicPair> {
    let (_, w) = measure.atom_points().expect("atomic measure");
    let t = partition::atom_table(kernel, eps, measure)?;
    AtomicPair::centered(t, w.to_vec())
}

#[derive(Serialize)]
struct OracleRow {
    n: usize,
    m: usize,
    p: usize,
    exact: f64,
    monte_carlo: f64,
    std_error: f64,
    deviation_se: f64,
}

fn moments_verify(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.moments_verify.as_ref().expect("resolved");
    let measure = cfg.measure()?;
    let eps = p.corineq_eps;
    let comb_measure = if measure.is_atomic() {
        measure.clone()
    } else {
        spaced_atoms(kernel.domain, 3)?
    };
    let g = centered_table(kernel, eps, &comb_measure)?;
    let gmax = g.table.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut counts = Vec::new();
    let mut csv = String::from("n,p,ell,count,bound\n");
    for &[n, q] in &p.combinatorics {
        let c = moments::restricted_counts(n, q)?;
        let v = moments::check_vanishing(&g, n, q)?;
        let mut within = true;
        for (ell, &cnt) in c.by_active.iter().enumerate() {
            let b = moments::cardinality_bound(n, ell, q);
            within &= (cnt as u128) <= b;
            let _ = writeln!(csv, "{n},{q},{ell},{cnt},{b}");
        }
        out.verdict(Verdict::new(
            &format!("vanishing n={n} p={q}"),
            v.max_abs_term <= VANISHING_RTOL * gmax.powi(q as i32)
                && v.partition_failures == 0
                && v.gamma_sum_failures == 0,
            format!(
                "{} non-restricted terms, {} not exactly zero, max |term| {:e} (sup|G|^p = {:e})",
                v.non_restricted_terms,
                v.nonzero_terms,
                v.max_abs_term,
                gmax.powi(q as i32)
            ),
        ));
        out.verdict(Verdict::new(
            &format!("cardinality n={n} p={q}"),
            within,
            format!("|E_p,l| = {:?}", c.by_active),
        ));
        out.verdict(Verdict::new(
            &format!("multiplicity n={n} p={q}"),
            c.boundonmi_violations == 0,
            format!("{} of {} restricted indices violate", c.boundonmi_violations, c.restricted),
        ));
        counts.push((c, v));
    }
    out.file("restricted_counts.csv", csv);

    let mut oracle = Vec::new();
    for (i, &[n, m, q]) in p.oracle_cases.iter().enumerate() {
        let atoms = spaced_atoms(kernel.domain, m)?;
        let g = centered_table(kernel, eps, &atoms)?;
        let exact = moments::moment_oracle(&g, n, q)?;
        let mc = moments::moment_monte_carlo(PairSource::Atomic(&g), n, q, true, p.oracle_samples, seed.path(&[0, i as u64]))?;
        // a statistic that is constant on the support has a rounding-level
        // standard error; the floor keeps that from reading as a deviation
        let se = mc.std_error.max(ROUNDING_FLOOR * exact.abs());
        let dev = if se > 0.0 {
            (mc.mean - exact).abs() / se
        } else if mc.mean == exact {
            0.0
        } else {
            f64::INFINITY
        };
        oracle.push(OracleRow {
            n,
            m,
            p: q,
            exact,
            monte_carlo: mc.mean,
            std_error: mc.std_error,
            deviation_se: dev,
        });
    }
    if !oracle.is_empty() {
        let worst = oracle.iter().map(|r| r.deviation_se).fold(0.0, f64::max);
        out.verdict(Verdict::new(
            "moment-oracle",
            worst <= p.oracle_tolerance,
            format!("{} cases, worst deviation {worst:.2} SE", oracle.len()),
        ));
    }

    let mut corineq = Vec::new();
    if !p.corineq_p.is_empty() {
        let centered;
        let table;
        let source = if measure.is_atomic() {
            table = centered_table(kernel, eps, &measure)?;
            PairSource::Atomic(&table)
        } else {
            centered = CenteredKernel::new(kernel, eps, &measure)?;
            PairSource::Kernel(&centered)
        };
        for &q in &p.corineq_p {
            let rep = moments::verify_corineq_scaling(source, q, p.corineq_gamma, &p.corineq_n_values, p.corineq_samples, seed.path(&[1, q as u64]))?;
            out.verdict(Verdict {
                check: format!("correlation-inequality p={q}"),
                status: match rep.verdict {
                    CorineqVerdict::Consistent => Status::Pass,
                    CorineqVerdict::Violated => Status::Fail,
                    CorineqVerdict::Inconclusive => Status::Inconclusive,
                },
                detail: format!("C_p = {:.4}, decay fit {:?}", rep.constant, rep.decay_fit),
            });
            out.series.push(PlotSeries {
                name: format!("moment p={q}"),
                x_label: "N".into(),
                y_label: "E|S|^p".into(),
                x: rep.n_values.iter().map(|&n| n as f64).collect(),
                y: rep.lhs.clone(),
                ci: rep.lhs_se.iter().map(|s| 1.96 * s).collect(),
            });
            corineq.push(rep);
        }
    }
    #[derive(Serialize)]
    struct Report<'a> {
        counts: Vec<&'a moments::RestrictedCounts>,
        vanishing: Vec<&'a moments::VanishingReport>,
        oracle: &'a [OracleRow],
        corineq: &'a [moments::CorineqReport],
    }
    out.json(
        "moments.json",
        &Report {
            counts: counts.iter().map(|(c, _)| c).collect(),
            vanishing: counts.iter().map(|(_, v)| v).collect(),
            oracle: &oracle,
            corineq: &corineq,
        },
    )?;
    Ok(())
}

fn sde_run(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.sde_run.as_ref().expect("resolved");
    let measure = cfg.measure()?;
    let potential = cfg.potential()?;
    let initial = measure.sample(p.n, &mut seed.child(0).rng())?;
    let mut params = SdeParams::new(p.dt);
    params.eps_reg = p.eps_reg;
    params.force_cap = (p.force_cap > 0.0).then_some(p.force_cap);
    let traj = dynamics::sde_run(kernel, &potential, initial, params, &p.times, seed.child(1))?;
    let in_domain = traj.snapshots.iter().all(|c| {
        c.coords.iter().all(|v| {
            v.is_finite() && (!kernel.domain.is_torus() || (0.0..1.0).contains(v))
        })
    });
    out.verdict(Verdict::new(
        "positions",
        in_domain,
        format!("{} steps, all positions finite and in the domain: {in_domain}", traj.steps),
    ));
    let capped = traj.cap_activations as f64 / (traj.steps.max(1) as f64 * p.n as f64);
    out.verdict(Verdict {
        check: "drift-cap".into(),
        status: if capped <= 0.01 {
            Status::Pass
        } else {
            Status::Inconclusive
        },
        detail: format!("drift capped in {:.3}% of particle-steps", 100.0 * capped),
    });
    let mut csv = String::from("t,energy_per_particle\n");
    if kernel.domain.is_torus() || measure.is_atomic() {
        let mut ev = EnergyEvaluator::new(kernel, p.eps_reg, &measure)?;
        for (t, c) in traj.times.iter().zip(&traj.snapshots) {
            let e = ev.evaluate(&c.coords)?;
            let _ = writeln!(csv, "{t},{}", e.total / p.n as f64);
        }
    }
    out.file("energy.csv", csv);
    if cfg.dump {
        out.file("trajectory.csv", traj.to_csv());
    }
    #[derive(Serialize)]
    struct Summary {
        steps: u64,
        cap_activations: u64,
        times: Vec<f64>,
    }
    out.json(
        "sde.json",
        &Summary {
            steps: traj.steps,
            cap_activations: traj.cap_activations,
            times: traj.times.clone(),
        },
    )
}

/// Amplitude of `cos(2πx_1)` in node values on an `M^d` grid.
pub fn first_mode_amplitude(density: &[f64], cells: usize, dim: usize) -> f64 {
    let mut pos = [0usize; 3];
    let mut acc = 0.0;
    for (idx, v) in density.iter().enumerate() {
        fft::unflatten(idx, cells, dim, &mut pos[..dim]);
        acc += v * (2.0 * PI * pos[0] as f64 / cells as f64).cos();
    }
    2.0 * acc / density.len() as f64
}

fn mv_solve(cfg: &ExperimentConfig, kernel: &Kernel, out: &mut Outputs) -> Result<()> {
    let p = cfg.mv_solve.as_ref().expect("resolved");
    let measure = cfg.measure()?;
    let potential = cfg.potential()?;
    let initial = PdeState::from_measure(&measure, p.cells)?;
    let mut params = PdeParams::new(p.cells, p.dt);
    params.eps_reg = p.eps_reg;
    params.save_every = p.save_every;
    let traj = dynamics::mv_solve(&initial, kernel, &potential, params, p.t_end)?;
    let last = traj.snapshots.last().expect("initial snapshot");
    let t = *traj.times.last().expect("initial time");

    let mass_err = traj
        .snapshots
        .iter()
        .map(|s| (s.iter().sum::<f64>() / s.len() as f64 - 1.0).abs())
        .fold(0.0, f64::max);
    out.verdict(Verdict::new(
        "mass",
        mass_err <= 1e-10,
        format!("largest mass error {mass_err:e}"),
    ));
    let rise = traj.max_free_energy_increase();
    out.verdict(Verdict::new(
        "free-energy-monotone",
        traj.free_energy.len() < 2 || rise <= p.free_energy_slack,
        format!("largest step increase {rise:e} (slack {:e})", p.free_energy_slack),
    ));
    let unforced = matches!(cfg.potential, PotentialSpec::Zero);
    if kernel.is_zero() && unforced {
        if let MeasureSpec::SingleMode { amplitude } = cfg.measure {
            let want = amplitude * (-4.0 * PI * PI * t).exp();
            let got = first_mode_amplitude(last, p.cells, kernel.dim());
            let rel = ((got - want) / want).abs();
            out.verdict(Verdict::new(
                "heat-mode-decay",
                rel <= p.heat_tolerance,
                format!("amplitude {got:e} vs {want:e} at t = {t} (relative {rel:e})"),
            ));
        }
    }
    if unforced && measure.is_uniform() {
        let dev = traj
            .snapshots
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        out.verdict(Verdict::new(
            "uniform-stationary",
            dev <= p.stationarity_tolerance,
            format!("largest deviation {dev:e}"),
        ));
    }
    let mut csv = String::from("t,free_energy\n");
    for (t, f) in traj.free_energy_times.iter().zip(&traj.free_energy) {
        let _ = writeln!(csv, "{t},{f}");
    }
    out.file("free_energy.csv", csv);
    if cfg.dump {
        let mut csv = String::from("t,node,density\n");
        for (t, s) in traj.times.iter().zip(&traj.snapshots) {
            for (i, v) in s.iter().enumerate() {
                let _ = writeln!(csv, "{t},{i},{v}");
            }
        }
        out.file("density.csv", csv);
    }
    #[derive(Serialize)]
    struct Summary {
        steps: u64,
        final_dt: f64,
        dt_halvings: u32,
        min_density: f64,
        clip_events: u64,
        max_mass_correction: f64,
        max_free_energy_increase: f64,
    }
    out.json(
        "pde.json",
        &Summary {
            steps: traj.steps,
            final_dt: traj.final_dt,
            dt_halvings: traj.dt_halvings,
            min_density: traj.min_density,
            clip_events: traj.clip_events,
            max_mass_correction: traj.max_mass_correction,
            max_free_energy_increase: rise,
        },
    )
}

fn mfl_sweep(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.mfl_sweep.as_ref().expect("resolved");
    let measure = cfg.measure()?;
    let potential = cfg.potential()?;
    let params = SweepParams {
        n_values: p.n_values.clone(),
        times: p.times.clone(),
        replicas: p.replicas,
        dt: p.dt,
        eps_reg: p.eps_reg,
        pde_cells: p.pde_cells,
        pde_dt: p.pde_dt,
    };
    let sweep = dynamics::modulated_energy_sweep(kernel, &potential, &measure, &params, seed)?;
    let [lo, hi] = p.slope_range;
    for &t in &p.times {
        match sweep.slopes.iter().find(|s| s.t == t) {
            Some(s) => out.verdict(Verdict::new(
                &format!("modulated-energy-slope t={t}"),
                (lo..=hi).contains(&s.slope),
                format!("slope {:.3} ± {:.3}, accepted [{lo}, {hi}]", s.slope, s.slope_se),
            )),
            None => out.verdict(Verdict {
                check: format!("modulated-energy-slope t={t}"),
                status: Status::Inconclusive,
                detail: "fewer than two nonzero estimates".into(),
            }),
        }
        let rows: Vec<_> = sweep.rows.iter().filter(|r| r.t == t).collect();
        out.series.push(PlotSeries {
            name: format!("modulated energy t={t}"),
            x_label: "N".into(),
            y_label: "E[I/N]".into(),
            x: rows.iter().map(|r| r.n as f64).collect(),
            y: rows.iter().map(|r| r.modulated).collect(),
            ci: rows.iter().map(|r| 1.96 * r.se).collect(),
        });
    }
    let mut csv = String::from("n,t,modulated,se,raw,raw_se,control_mean\n");
    for r in &sweep.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.n, r.t, r.modulated, r.se, r.raw, r.raw_se, r.control_mean
        );
    }
    out.file("mfl_sweep.csv", csv);
    out.json("mfl_sweep.json", &sweep)
}

fn entropy_csv(table: &EntropyTable, seed: u64) -> String {
    let mut csv = String::from(
        "n,logz_is,logz_is_se,logz_ti,logz_ti_se,logz,logz_se,h_fwd,h_fwd_se,h_bwd,h_bwd_se,bound,min_acceptance,flagged,seed\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{seed}",
            r.n,
            r.log_z_is,
            r.log_z_is_se,
            r.log_z_ti,
            r.log_z_ti_se,
            r.log_z,
            r.log_z_se,
            r.h_forward,
            r.h_forward_se,
            r.h_backward,
            r.h_backward_se,
            r.entropy_bound,
            r.min_acceptance,
            r.flagged
        );
    }
    csv
}

fn gibbs_rates(cfg: &ExperimentConfig, kernel: &Kernel, seed: Seed, out: &mut Outputs) -> Result<()> {
    let p = cfg.gibbs.as_ref().expect("resolved");
    let potential = cfg.potential()?;
    let mp = MinimizerParams {
        cells: p.minimizer_cells,
        damping: p.minimizer_damping,
        tol: p.minimizer_tol,
        max_iter: p.minimizer_max_iter,
        eps: p.eps,
    };
    let params = EntropyParams {
        eps: p.eps,
        chain: MalaParams::new(p.burn_in, p.samples),
        is_samples: p.is_samples,
    };
    let minimizer = gibbs::solve_minimizer(kernel, &potential, mp)?;
    out.note(format!(
        "minimizer: {} iterations, residual {:e}, distance to uniform {:e}",
        minimizer.iterations,
        minimizer.residual,
        minimizer.distance_to_uniform()
    ));
    let mu = minimizer.measure()?;
    let table = gibbs::entropy_rates(kernel, &mu, &potential, &p.n_values, &params, seed.child(0))?;
    let [lo, hi] = p.slope_range;
    match &table.backward_rate {
        Some(f) => out.verdict(Verdict::new(
            "backward-entropy-rate",
            (lo..=hi).contains(&f.slope),
            format!("slope {:.3} ± {:.3}, accepted [{lo}, {hi}]", f.slope, f.slope_se),
        )),
        None => out.verdict(Verdict {
            check: "backward-entropy-rate".into(),
            status: Status::Inconclusive,
            detail: "fewer than two positive entropies".into(),
        }),
    }
    if let Some(f) = &table.forward_rate {
        out.note(format!("forward entropy slope {:.3} ± {:.3}", f.slope, f.slope_se));
    }
    if let Some(r) = table.rows.iter().find(|r| r.n == p.cross_check_n) {
        out.verdict(Verdict::new(
            &format!("log-z-agreement N={}", r.n),
            r.estimators_agree,
            format!(
                "importance {:.5} ± {:.5}, integration {:.5} ± {:.5}",
                r.log_z_is, r.log_z_is_se, r.log_z_ti, r.log_z_ti_se
            ),
        ));
    }
    let violated: Vec<usize> = table.rows.iter().filter(|r| !r.bound_holds).map(|r| r.n).collect();
    out.verdict(Verdict::new(
        "entropy-bound",
        violated.is_empty(),
        format!("violated at N = {violated:?}"),
    ));
    let flagged: Vec<usize> = table.rows.iter().filter(|r| r.flagged).map(|r| r.n).collect();
    out.verdict(Verdict {
        check: "chain-diagnostics".into(),
        status: if flagged.is_empty() {
            Status::Pass
        } else {
            Status::Inconclusive
        },
        detail: format!("flagged at N = {flagged:?}"),
    });
    let ci = |v: f64| 1.96 * v;
    out.series.push(PlotSeries {
        name: "backward entropy per particle".into(),
        x_label: "N".into(),
        y_label: "log Z_N / N".into(),
        x: table.rows.iter().map(|r| r.n as f64).collect(),
        y: table.rows.iter().map(|r| r.h_backward_bar).collect(),
        ci: table.rows.iter().map(|r| ci(r.h_backward_se / r.n as f64)).collect(),
    });
    out.series.push(PlotSeries {
        name: "forward entropy per particle".into(),
        x_label: "N".into(),
        y_label: "H_fwd / N".into(),
        x: table.rows.iter().map(|r| r.n as f64).collect(),
        y: table.rows.iter().map(|r| r.h_forward_bar).collect(),
        ci: table.rows.iter().map(|r| ci(r.h_forward_se / r.n as f64)).collect(),
    });
    out.file("gibbs.csv", entropy_csv(&table, cfg.seed));
    out.json("gibbs.json", &table)?;
    out.json("minimizer.json", &minimizer)?;

    if p.zero_control {
        let zero = Kernel::zero(kernel.domain);
        let mz = gibbs::solve_minimizer(&zero, &potential, mp)?;
        let control = gibbs::entropy_rates(&zero, &mz.measure()?, &potential, &p.n_values, &params, seed.child(1))?;
        let nonzero: Vec<usize> = control
            .rows
            .iter()
            .filter(|r| r.h_forward != 0.0 || r.h_backward != 0.0 || r.log_z != 0.0)
            .map(|r| r.n)
            .collect();
        out.verdict(Verdict::new(
            "zero-kernel-control",
            nonzero.is_empty(),
            format!("nonzero entropies at N = {nonzero:?}"),
        ));
        out.file("gibbs_control.csv", entropy_csv(&control, cfg.seed));
    }
    Ok(())
}
