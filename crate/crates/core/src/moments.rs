//! Moments of `S = (1/N) Σ_{i≠j} G(X_i, X_j)` for a symmetric, centered
//! pair function `G`: the multiindex bookkeeping behind the expansion of
//! `E[S^p]`, exact enumeration oracles on atomic measures, Monte Carlo
//! estimates and a scaling check of the correlation inequality.
//!
//! Particle labels are 0-based.

use num_complex::Complex64;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Error, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::rng::{Seed, Stream};
use crate::spectral::ModeTable;
use crate::special::binomial;
use crate::stats;

const MAX_PAIRS: usize = 30;
const MAX_P: usize = 4;
const CONFIG_BUDGET: u64 = 1_000_000;
const CHUNK: usize = 1000;

/// Map from ordered off-diagonal pairs to multiplicities summing to `p`.
/// Only nonzero entries are stored, sorted by pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub n: usize,
    pub p: usize,
    pub entries: Vec<((usize, usize), u32)>,
}

impl MultiIndex {
    pub fn new(n: usize, entries: Vec<((usize, usize), u32)>) -> Result<MultiIndex> {
        let mut e: Vec<_> = entries.into_iter().filter(|(_, c)| *c > 0).collect();
        e.sort();
        for w in e.windows(2) {
            if w[0].0 == w[1].0 {
                return config_err(format!("pair {:?} listed twice", w[0].0));
            }
        }
        for &((i, j), _) in &e {
            if i == j || i >= n || j >= n {
                return config_err(format!("({i}, {j}) is not an off-diagonal pair of {n} particles"));
            }
        }
        let p = e.iter().map(|(_, c)| *c as usize).sum();
        Ok(MultiIndex { n, p, entries: e })
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries
            .iter()
            .find(|(k, _)| *k == (i, j))
            .map_or(0, |(_, c)| *c)
    }

    /// `p! / Π I((i,j))!`.
    pub fn multinomial(&self) -> f64 {
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        fact(self.p) / self.entries.iter().map(|(_, c)| fact(*c as usize)).product::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicityProfile {
    /// `m_i = Σ_j I((i,j)) + I((j,i))`.
    pub m: Vec<u32>,
    pub active: Vec<usize>,
    pub act: usize,
    /// No particle has multiplicity exactly one.
    pub restricted: bool,
}

/// Ordered pairs `(i, j)`, `i ≠ j`, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

fn check_budget(n: usize, p: usize) -> Result<()> {
    if n < 2 {
        return config_err(format!("need at least 2 particles, got {n}"));
    }
    if p == 0 {
        return config_err("p must be at least 1");
    }
    if n * (n - 1) > MAX_PAIRS || p > MAX_P {
        return config_err(format!(
            "enumeration for n = {n}, p = {p} exceeds the budget n(n-1) ≤ {MAX_PAIRS}, p ≤ {MAX_P}"
        ));
    }
    Ok(())
}

/// Streams every `p`-multiindex on `n` particles exactly once, as a
/// nondecreasing sequence of pair positions (stars and bars).
pub struct MultiIndexIter {
    n: usize,
    pairs: Vec<(usize, usize)>,
    combo: Vec<usize>,
    done: bool,
}

impl Iterator for MultiIndexIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.done {
            return None;
        }
        let mut entries: Vec<((usize, usize), u32)> = Vec::with_capacity(self.combo.len());
        for &c in &self.combo {
            match entries.last_mut() {
                Some((pair, k)) if *pair == self.pairs[c] => *k += 1,
                _ => entries.push((self.pairs[c], 1)),
            }
        }
        let top = self.pairs.len() - 1;
        match self.combo.iter().rposition(|&c| c < top) {
            Some(pos) => {
                let v = self.combo[pos] + 1;
                for c in &mut self.combo[pos..] {
                    *c = v;
                }
            }
            None => self.done = true,
        }
        Some(MultiIndex {
            n: self.n,
            p: self.combo.len(),
            entries,
        })
    }
}

pub fn enumerate_multiindices(n: usize, p: usize) -> Result<MultiIndexIter> {
    check_budget(n, p)?;
    Ok(MultiIndexIter {
        n,
        pairs: pairs(n),
        combo: vec![0; p],
        done: false,
    })
}

/// `multichoose(n(n-1), p)`, the number of `p`-multiindices.
pub fn multiindex_count(n: usize, p: usize) -> u128 {
    let a = (n * n.saturating_sub(1)) as u64;
    if a == 0 {
        return 0;
    }
    binomial(a + p as u64 - 1, p as u64)
}

pub fn classify(index: &MultiIndex) -> MultiplicityProfile {
    let mut m = vec![0u32; index.n];
    for &((i, j), c) in &index.entries {
        m[i] += c;
        m[j] += c;
    }
    let active: Vec<usize> = (0..index.n).filter(|&i| m[i] != 0).collect();
    let restricted = m.iter().all(|&v| v != 1);
    MultiplicityProfile {
        act: active.len(),
        active,
        restricted,
        m,
    }
}

/// `max_i m_i ≤ 2p - 2(act - 1)`, which every restricted index satisfies.
pub fn check_boundonmi(profile: &MultiplicityProfile, p: usize) -> bool {
    let max = profile.m.iter().copied().max().unwrap_or(0) as i64;
    max <= 2 * p as i64 - 2 * (profile.act as i64 - 1)
}

/// `binom(n, ℓ) (ℓ² - ℓ)^p`.
pub fn cardinality_bound(n: usize, ell: usize, p: usize) -> u128 {
    binomial(n as u64, ell as u64) * ((ell * ell - ell) as u128).pow(p as u32)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictedCounts {
    pub n: usize,
    pub p: usize,
    /// `|E_{p,ℓ}|` for `ℓ = 0..=2p`.
    pub by_active: Vec<u64>,
    pub restricted: u64,
    pub total: u64,
    /// Restricted indices violating the multiplicity bound (always empty
    /// unless the bookkeeping is broken).
    pub boundonmi_violations: u64,
}

pub fn restricted_counts(n: usize, p: usize) -> Result<RestrictedCounts> {
    let mut by_active = vec![0u64; 2 * p + 1];
    let mut restricted = 0;
    let mut total = 0;
    let mut violations = 0;
    for idx in enumerate_multiindices(n, p)? {
        total += 1;
        let prof = classify(&idx);
        if prof.restricted {
            restricted += 1;
            by_active[prof.act] += 1;
            if !check_boundonmi(&prof, p) {
                violations += 1;
            }
        }
    }
    Ok(RestrictedCounts {
        n,
        p,
        by_active,
        restricted,
        total,
        boundonmi_violations: violations,
    })
}

/// `|E_{p,ℓ}|`, the number of restricted multiindices with `ℓ` active
/// particles.
pub fn count_restricted(n: usize, p: usize, ell: usize) -> Result<u64> {
    let counts = restricted_counts(n, p)?;
    let c = counts.by_active.get(ell).copied().unwrap_or(0);
    if (c as u128) > cardinality_bound(n, ell, p) {
        return Err(Error::Estimation(format!(
            "|E_(p={p}, l={ell})| = {c} exceeds binom({n}, {ell})(l² - l)^p"
        )));
    }
    Ok(c)
}

/// Splits the support of `index` into `C_k = A_k \ (A_1 ∪ … ∪ A_{k-1})`,
/// `k = 1..ℓ-1`, where `A_k` holds the support pairs touching the `k`-th
/// active particle. Returns the blocks and their weights
/// `γ_k = Σ_{C_k} I((i,j))`.
pub fn decompose(index: &MultiIndex) -> (Vec<Vec<(usize, usize)>>, Vec<u32>) {
    let prof = classify(index);
    let mut blocks: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut gammas = Vec::new();
    let mut taken = vec![false; index.entries.len()];
    for &ik in prof.active.iter().take(prof.act.saturating_sub(1)) {
        let mut block = Vec::new();
        let mut gamma = 0;
        for (e, &((i, j), c)) in index.entries.iter().enumerate() {
            if !taken[e] && (i == ik || j == ik) {
                taken[e] = true;
                block.push((i, j));
                gamma += c;
            }
        }
        blocks.push(block);
        gammas.push(gamma);
    }
    (blocks, gammas)
}

/// Whether the blocks from [`decompose`] partition the support of `index`.
pub fn is_support_partition(index: &MultiIndex, blocks: &[Vec<(usize, usize)>]) -> bool {
    let mut seen: Vec<(usize, usize)> = blocks.iter().flatten().copied().collect();
    let n = seen.len();
    seen.sort();
    seen.dedup();
    let support: Vec<(usize, usize)> = index.entries.iter().map(|(k, _)| *k).collect();
    seen.len() == n && seen == support
}

/// A symmetric pair function on the atoms of a discrete measure.
#[derive(Clone, Debug)]
pub struct AtomicPair {
    pub table: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl AtomicPair {
    pub fn new(table: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<AtomicPair> {
        let m = weights.len();
        if m == 0 || table.len() != m || table.iter().any(|r| r.len() != m) {
            return config_err("pair table must be square with one row per atom");
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return config_err("atom weights must be positive and sum to 1");
        }
        for a in 0..m {
            for b in 0..a {
                if table[a][b] != table[b][a] {
                    return config_err("pair table must be symmetric");
                }
            }
        }
        let alias = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| Error::Config(format!("atom weights: {e}")))?;
        Ok(AtomicPair {
            table,
            weights,
            alias,
        })
    }

    /// Centers an arbitrary symmetric table:
    /// `H(a,b) - h(a) - h(b) + h̄` with `h(a) = Σ_c w_c H(a,c)`.
    pub fn centered(table: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<AtomicPair> {
        let m = weights.len();
        let h: Vec<f64> = table
            .iter()
            .map(|r| r.iter().zip(&weights).map(|(v, w)| v * w).sum())
            .collect();
        let hbar: f64 = h.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let mut t = table;
        for a in 0..m {
            for b in 0..m {
                t[a][b] = t[a][b] - h[a] - h[b] + hbar;
            }
        }
        // remove the rounding asymmetry
        for a in 0..m {
            for b in 0..a {
                let s = 0.5 * (t[a][b] + t[b][a]);
                t[a][b] = s;
                t[b][a] = s;
            }
        }
        AtomicPair::new(t, weights)
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    /// `max_a |Σ_b w_b G(a,b)|`.
    pub fn centering_defect(&self) -> f64 {
        self.table
            .iter()
            .map(|r| r.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `max_a (Σ_b w_b |G(a,b)|^q)^{1/q}`.
    pub fn sup_norm(&self, q: f64) -> f64 {
        self.table
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&self.weights)
                    .map(|(v, w)| w * v.abs().powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q)
            })
            .fold(0.0, f64::max)
    }

    fn statistic_of(&self, idx: &[usize]) -> f64 {
        let mut s = 0.0;
        for (i, &a) in idx.iter().enumerate() {
            for (j, &b) in idx.iter().enumerate() {
                if i != j {
                    s += self.table[a][b];
                }
            }
        }
        s / idx.len() as f64
    }

    fn sample_statistic(&self, n: usize, rng: &mut Stream, counts: &mut Vec<f64>) -> f64 {
        counts.clear();
        counts.resize(self.atoms(), 0.0);
        for _ in 0..n {
            counts[self.alias.sample(rng)] += 1.0;
        }
        let mut s = 0.0;
        for (a, ca) in counts.iter().enumerate() {
            if *ca == 0.0 {
                continue;
            }
            for (b, cb) in counts.iter().enumerate() {
                s += ca * cb * self.table[a][b];
            }
            s -= ca * self.table[a][a];
        }
        s / n as f64
    }
}

fn for_each_config<F: FnMut(&[usize], f64)>(weights: &[f64], len: usize, mut f: F) -> Result<()> {
    let m = weights.len();
    let count = (m as u64).checked_pow(len as u32).unwrap_or(u64::MAX);
    if count > CONFIG_BUDGET {
        return config_err(format!(
            "{m}^{len} configurations exceed the budget of {CONFIG_BUDGET}"
        ));
    }
    let mut idx = vec![0usize; len];
    loop {
        let w: f64 = idx.iter().map(|&a| weights[a]).product();
        f(&idx, w);
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `E|S|^p` by summing over all `m^n` configurations.
pub fn moment_oracle(g: &AtomicPair, n: usize, p: usize) -> Result<f64> {
    moment_by_enumeration(g, n, p, true)
}

/// `E[S^p]` by summing over all `m^n` configurations.
pub fn signed_moment_oracle(g: &AtomicPair, n: usize, p: usize) -> Result<f64> {
    moment_by_enumeration(g, n, p, false)
}

fn moment_by_enumeration(g: &AtomicPair, n: usize, p: usize, absolute: bool) -> Result<f64> {
    if n < 2 || p == 0 {
        return config_err("need n ≥ 2 and p ≥ 1");
    }
    let mut acc = 0.0;
    for_each_config(&g.weights, n, |idx, w| {
        let s = g.statistic_of(idx);
        let s = if absolute { s.abs() } else { s };
        acc += w * s.powi(p as i32);
    })?;
    Ok(acc)
}

/// `E[Π_{(i,j)} G(X_i, X_j)^{I((i,j))}]`, integrating over the active
/// particles only.
pub fn term_expectation(g: &AtomicPair, index: &MultiIndex) -> Result<f64> {
    let prof = classify(index);
    let mut slot = vec![usize::MAX; index.n];
    for (s, &i) in prof.active.iter().enumerate() {
        slot[i] = s;
    }
    let mut acc = 0.0;
    for_each_config(&g.weights, prof.act, |idx, w| {
        let mut prod = w;
        for &((i, j), c) in &index.entries {
            prod *= g.table[idx[slot[i]]][idx[slot[j]]].powi(c as i32);
        }
        acc += prod;
    })?;
    Ok(acc)
}

/// `E[S^p] = N^{-p} Σ_I (p!/Π I!) E[Π G^I]`, over all multiindices or over
/// the restricted ones only.
pub fn multiindex_expansion(g: &AtomicPair, n: usize, p: usize, restricted_only: bool) -> Result<f64> {
    let mut acc = 0.0;
    for idx in enumerate_multiindices(n, p)? {
        if restricted_only && !classify(&idx).restricted {
            continue;
        }
        acc += idx.multinomial() * term_expectation(g, &idx)?;
    }
    Ok(acc / (n as f64).powi(p as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub n: usize,
    pub p: usize,
    pub non_restricted_terms: u64,
    /// Largest `|E[Π G^I]|` over non-restricted `I`.
    pub max_abs_term: f64,
    /// Number of non-restricted terms that are not exactly zero.
    pub nonzero_terms: u64,
    /// Multiindices whose decomposition blocks fail to partition the support.
    pub partition_failures: u64,
    /// Multiindices whose block weights do not sum to `p`.
    pub gamma_sum_failures: u64,
}

/// Evaluates every non-restricted term of the expansion and audits the
/// block decomposition of every multiindex.
pub fn check_vanishing(g: &AtomicPair, n: usize, p: usize) -> Result<VanishingReport> {
    let mut rep = VanishingReport {
        n,
        p,
        non_restricted_terms: 0,
        max_abs_term: 0.0,
        nonzero_terms: 0,
        partition_failures: 0,
        gamma_sum_failures: 0,
    };
    for idx in enumerate_multiindices(n, p)? {
        let (blocks, gammas) = decompose(&idx);
        if !is_support_partition(&idx, &blocks) {
            rep.partition_failures += 1;
        }
        if gammas.iter().sum::<u32>() as usize != p {
            rep.gamma_sum_failures += 1;
        }
        if classify(&idx).restricted {
            continue;
        }
        rep.non_restricted_terms += 1;
        let t = term_expectation(g, &idx)?;
        rep.max_abs_term = rep.max_abs_term.max(t.abs());
        if t != 0.0 {
            rep.nonzero_terms += 1;
        }
    }
    Ok(rep)
}

/// The centered regularization gap
/// `G_ε(x,y) = ∬ (W - W_ε) d(δ_x - ρ̄) ⊗ (δ_y - ρ̄)` of a torus kernel.
///
/// With `D = W - W_ε = Σ_k d_k e^{2πik·(x-y)}` and
/// `u_k(x) = e^{-2πik·x} - ρ̂_k`, `G_ε(x,y) = Σ_k d_k Re(conj(u_k(x)) u_k(y))`.
#[derive(Clone, Debug)]
pub struct CenteredKernel {
    pub kernel: Kernel,
    pub eps: f64,
    pub measure: BaseMeasure,
    table: ModeTable,
    rho_re: Vec<f64>,
    rho_im: Vec<f64>,
}

impl CenteredKernel {
    pub fn new(kernel: &Kernel, eps: f64, measure: &BaseMeasure) -> Result<CenteredKernel> {
        if kernel.family != KernelFamily::TorusLog {
            return Err(Error::Unsupported(
                "the centered gap kernel is implemented for the torus kernel".into(),
            ));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return domain_err(format!("the gap kernel needs eps > 0, got {eps}"));
        }
        if measure.dim() != kernel.dim() || !measure.domain.is_torus() {
            return config_err("kernel and measure live on different domains");
        }
        let table = ModeTable::new(kernel.dim(), kernel.cutoff, |k| {
            kernel.coefficient(k) * (1.0 - kernel.multiplier(k, eps))
        });
        let (rho_re, rho_im) = measure.spectrum_on(&table)?;
        Ok(CenteredKernel {
            kernel: *kernel,
            eps,
            measure: measure.clone(),
            table,
            rho_re,
            rho_im,
        })
    }

    /// `u_k(x)` on the active modes.
    pub fn features(&self, x: &[f64], phases: &mut Vec<Complex64>, out: &mut Vec<Complex64>) {
        self.table.phases(x, phases);
        out.clear();
        out.extend(self.table.active.iter().map(|&k| {
            phases[k] - Complex64::new(self.rho_re[k], self.rho_im[k])
        }));
    }

    fn pair_from_features(&self, u: &[Complex64], v: &[Complex64]) -> f64 {
        self.table
            .active
            .iter()
            .zip(u.iter().zip(v))
            .map(|(&k, (a, b))| self.table.weights[k] * (a.re * b.re + a.im * b.im))
            .sum()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut ph = Vec::new();
        let (mut u, mut v) = (Vec::new(), Vec::new());
        self.features(x, &mut ph, &mut u);
        self.features(y, &mut ph, &mut v);
        self.pair_from_features(&u, &v)
    }

    /// The table of `G_ε` over the atoms of an atomic base measure.
    pub fn atomic_pair(&self) -> Result<AtomicPair> {
        let (pts, w) = self
            .measure
            .atom_points()
            .ok_or_else(|| Error::Unsupported("atomic table needs an atomic measure".into()))?;
        let d = self.measure.dim();
        let m = w.len();
        let mut ph = Vec::new();
        let feats: Vec<Vec<Complex64>> = (0..m)
            .map(|a| {
                let mut u = Vec::new();
                self.features(&pts[a * d..(a + 1) * d], &mut ph, &mut u);
                u
            })
            .collect();
        let mut t = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..=a {
                let v = self.pair_from_features(&feats[a], &feats[b]);
                t[a][b] = v;
                t[b][a] = v;
            }
        }
        AtomicPair::new(t, w.to_vec())
    }

    /// Quadrature nodes and weights for `ρ̄`: the atoms themselves, or a
    /// midpoint grid weighted by the density.
    fn quadrature(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some((pts, w)) = self.measure.atom_points() {
            return Ok((pts.to_vec(), w.to_vec()));
        }
        let d = self.measure.dim();
        let m: usize = match d {
            1 => 256,
            2 => 32,
            _ => 12,
        };
        let total = m.pow(d as u32);
        let mut pts = vec![0.0; total * d];
        let mut w = vec![0.0; total];
        let mut pos = [0usize; 3];
        for idx in 0..total {
            crate::fft::unflatten(idx, m, d, &mut pos[..d]);
            let x = &mut pts[idx * d..(idx + 1) * d];
            for a in 0..d {
                x[a] = (pos[a] as f64 + 0.5) / m as f64;
            }
            w[idx] = self.measure.density(x)?.max(0.0);
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Ok((pts, w))
    }

    /// `sup_x ‖G_ε(x, ·)‖_{L^q(ρ̄)}`, with the supremum and the integral
    /// both taken over the quadrature nodes of `ρ̄`.
    pub fn sup_norm(&self, q: f64) -> Result<f64> {
        let (pts, w) = self.quadrature()?;
        let d = self.measure.dim();
        let mut ph = Vec::new();
        let feats: Vec<Vec<Complex64>> = (0..w.len())
            .map(|a| {
                let mut u = Vec::new();
                self.features(&pts[a * d..(a + 1) * d], &mut ph, &mut u);
                u
            })
            .collect();
        Ok(feats
            .par_iter()
            .map(|fx| {
                feats
                    .iter()
                    .zip(&w)
                    .map(|(fy, wy)| wy * self.pair_from_features(fx, fy).abs().powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q)
            })
            .reduce(|| 0.0, f64::max))
    }

    /// `∫ G_ε(x, y) dρ̄(y)` on the quadrature nodes of `ρ̄`.
    pub fn marginal(&self, x: &[f64]) -> Result<f64> {
        let (pts, w) = self.quadrature()?;
        let d = self.measure.dim();
        Ok((0..w.len())
            .map(|a| w[a] * self.eval(x, &pts[a * d..(a + 1) * d]))
            .sum())
    }

    fn sample_statistic(&self, n: usize, rng: &mut Stream, scratch: &mut KernelScratch) -> f64 {
        let d = self.measure.dim();
        let len = self.table.active.len();
        scratch.sum.clear();
        scratch.sum.resize(len, Complex64::new(0.0, 0.0));
        scratch.self_sq.clear();
        scratch.self_sq.resize(len, 0.0);
        let mut x = [0.0; 3];
        for _ in 0..n {
            self.measure.sample_point(rng, &mut x[..d]);
            self.features(&x[..d], &mut scratch.phases, &mut scratch.u);
            for (s, (acc, sq)) in scratch.u.iter().zip(scratch.sum.iter_mut().zip(scratch.self_sq.iter_mut())) {
                *acc += s;
                *sq += s.norm_sqr();
            }
        }
        let total: f64 = self
            .table
            .active
            .iter()
            .enumerate()
            .map(|(t, &k)| self.table.weights[k] * (scratch.sum[t].norm_sqr() - scratch.self_sq[t]))
            .sum();
        total / n as f64
    }
}

#[derive(Default)]
struct KernelScratch {
    phases: Vec<Complex64>,
    u: Vec<Complex64>,
    sum: Vec<Complex64>,
    self_sq: Vec<f64>,
}

/// A centered pair function that can be sampled.
#[derive(Clone, Copy, Debug)]
pub enum PairSource<'a> {
    Atomic(&'a AtomicPair),
    Kernel(&'a CenteredKernel),
}

impl PairSource<'_> {
    pub fn sup_norm(&self, q: f64) -> Result<f64> {
        match self {
            PairSource::Atomic(g) => Ok(g.sup_norm(q)),
            PairSource::Kernel(g) => g.sup_norm(q),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `E|S|^p` (or `E[S^p]` when `absolute` is false).
/// Chunk `c` of 1000 draws uses the stream `seed.child(c)`.
pub fn moment_monte_carlo(
    g: PairSource,
    n: usize,
    p: usize,
    absolute: bool,
    samples: usize,
    seed: Seed,
) -> Result<MomentEstimate> {
    if n < 2 || p == 0 || samples < 2 {
        return config_err("need n ≥ 2, p ≥ 1 and at least 2 samples");
    }
    let chunks = samples.div_ceil(CHUNK);
    let vals: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.child(c as u64).rng();
            let len = CHUNK.min(samples - c * CHUNK);
            let mut counts = Vec::new();
            let mut scratch = KernelScratch::default();
            (0..len)
                .map(|_| {
                    let s = match g {
                        PairSource::Atomic(t) => t.sample_statistic(n, &mut rng, &mut counts),
                        PairSource::Kernel(k) => k.sample_statistic(n, &mut rng, &mut scratch),
                    };
                    let s = if absolute { s.abs() } else { s };
                    s.powi(p as i32)
                })
                .collect()
        })
        .collect();
    let xs: Vec<f64> = vals.into_iter().flatten().collect();
    Ok(MomentEstimate {
        mean: stats::mean(&xs),
        std_error: stats::std_error(&xs),
        samples: xs.len(),
    })
}

/// `E[S²] = 2(N-1)/N · (E g²)²` for the rank-one kernel `g(x)g(y)` with
/// `E g = 0`.
pub fn rank_one_second_moment(n: usize, eg2: f64) -> f64 {
    let n = n as f64;
    2.0 * (n - 1.0) / n * eg2 * eg2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorineqVerdict {
    Consistent,
    Violated,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorineqReport {
    pub p: usize,
    pub gamma: f64,
    pub n_values: Vec<usize>,
    pub lhs: Vec<f64>,
    pub lhs_se: Vec<f64>,
    /// `p - 1 - ⌊γp⌋`.
    pub rhs_exponent: i64,
    /// `sup_x ‖G(x,·)‖_{L^p}^p`.
    pub leading_norm: f64,
    /// `sup_x ‖G(x,·)‖_{L^{2(p-⌈γp⌉)}}^p`.
    pub floor_norm: f64,
    pub rhs: Vec<f64>,
    /// `C_p`, fitted at the smallest `N`.
    pub constant: f64,
    pub bound_holds: bool,
    /// Best fit `lhs ≈ a N^{-s} + b`: `(s, a, b)`.
    pub decay_fit: Option<(f64, f64, f64)>,
    pub verdict: CorineqVerdict,
}

/// Monte Carlo check of the correlation inequality across `n_values`.
///
/// `C_p` is fitted at the smallest `N` and held fixed; the bound must then
/// hold at every larger `N` up to three standard errors. The `N`-dependence
/// is summarized by a least-squares fit of `a N^{-s} + b`; if the fitted
/// `N`-dependent part is below two standard errors the verdict is
/// inconclusive unless the bound fails.
pub fn verify_corineq_scaling(
    g: PairSource,
    p: usize,
    gamma: f64,
    n_values: &[usize],
    samples: usize,
    seed: Seed,
) -> Result<CorineqReport> {
    if !(2..=4).contains(&p) {
        return config_err(format!("p must be 2, 3 or 4, got {p}"));
    }
    if !(0.5..1.0).contains(&gamma) {
        return config_err(format!("gamma must lie in [1/2, 1), got {gamma}"));
    }
    let gp = gamma * p as f64;
    let q = 2 * (p as i64 - gp.ceil() as i64);
    if q <= 0 {
        return config_err(format!(
            "gamma = {gamma} leaves no integrability exponent for p = {p}"
        ));
    }
    if n_values.is_empty() || n_values.windows(2).any(|w| w[1] <= w[0]) || n_values[0] < 2 {
        return config_err("n_values must be increasing and start at 2 or more");
    }
    let rhs_exponent = p as i64 - 1 - gp.floor() as i64;
    let leading_norm = g.sup_norm(p as f64)?.powi(p as i32);
    let floor_norm = g.sup_norm(q as f64)?.powi(p as i32);
    let mut lhs = Vec::new();
    let mut lhs_se = Vec::new();
    for &n in n_values {
        let est = moment_monte_carlo(g, n, p, true, samples, seed.child(n as u64))?;
        lhs.push(est.mean);
        lhs_se.push(est.std_error);
    }
    let rhs: Vec<f64> = n_values
        .iter()
        .map(|&n| leading_norm * (n as f64).powi(-(rhs_exponent as i32)) + floor_norm)
        .collect();
    let constant = lhs[0] / rhs[0];
    let bound_holds = lhs
        .iter()
        .zip(&lhs_se)
        .zip(&rhs)
        .all(|((l, se), r)| *l <= constant * r + 3.0 * se);
    let decay_fit = fit_decay(n_values, &lhs, &lhs_se);
    let verdict = if !bound_holds {
        CorineqVerdict::Violated
    } else {
        match decay_fit {
            Some((s, a, _)) if (a * (n_values[0] as f64).powf(-s)).abs() > 2.0 * lhs_se[0] => {
                CorineqVerdict::Consistent
            }
            _ => CorineqVerdict::Inconclusive,
        }
    };
    Ok(CorineqReport {
        p,
        gamma,
        n_values: n_values.to_vec(),
        lhs,
        lhs_se,
        rhs_exponent,
        leading_norm,
        floor_norm,
        rhs,
        constant,
        bound_holds,
        decay_fit,
        verdict,
    })
}

/// Weighted least squares of `a N^{-s} + b` over a grid of `s ∈ (0, 4]`.
fn fit_decay(n: &[usize], y: &[f64], se: &[f64]) -> Option<(f64, f64, f64)> {
    if n.len() < 3 {
        return None;
    }
    let floor = se.iter().copied().fold(0.0, f64::max) * 1e-6 + 1e-300;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for step in 1..=400 {
        let s = step as f64 * 0.01;
        let (mut sww, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n.len() {
            let w = 1.0 / (se[i] * se[i]).max(floor);
            let x = (n[i] as f64).powf(-s);
            sww += w;
            swx += w * x;
            swxx += w * x * x;
            swy += w * y[i];
            swxy += w * x * y[i];
        }
        let det = sww * swxx - swx * swx;
        if det.abs() < 1e-300 {
            continue;
        }
        let a = (sww * swxy - swx * swy) / det;
        let b = (swxx * swy - swx * swxy) / det;
        let rss: f64 = (0..n.len())
            .map(|i| {
                let r = y[i] - a * (n[i] as f64).powf(-s) - b;
                r * r / (se[i] * se[i]).max(floor)
            })
            .sum();
        if best.is_none_or(|bb| rss < bb.0) {
            best = Some((rss, s, a, b));
        }
    }
    best.map(|(_, s, a, b)| (s, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom(g: f64) -> AtomicPair {
        AtomicPair::new(vec![vec![g, -g], vec![-g, g]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_multiindices(2, 1).unwrap().count(), 2);
        assert_eq!(enumerate_multiindices(2, 2).unwrap().count(), 3);
        assert_eq!(enumerate_multiindices(3, 2).unwrap().count(), 21);
        assert_eq!(enumerate_multiindices(4, 3).unwrap().count() as u128, multiindex_count(4, 3));
        assert!(enumerate_multiindices(7, 2).is_err());
        assert!(enumerate_multiindices(3, 5).is_err());
    }

    #[test]
    fn classify_examples() {
        let a = classify(&MultiIndex::new(2, vec![((0, 1), 1)]).unwrap());
        assert_eq!(a.m, vec![1, 1]);
        assert!(!a.restricted);
        let b = classify(&MultiIndex::new(2, vec![((0, 1), 2)]).unwrap());
        assert_eq!((b.m.clone(), b.restricted, b.act), (vec![2, 2], true, 2));
        let c = classify(&MultiIndex::new(4, vec![((0, 1), 1), ((2, 3), 1)]).unwrap());
        assert_eq!(c.m, vec![1, 1, 1, 1]);
        assert!(!c.restricted);
    }

    #[test]
    fn restricted_counts_small() {
        assert_eq!(count_restricted(2, 2, 2).unwrap(), 3);
        assert_eq!(count_restricted(3, 3, 1).unwrap(), 0);
        let c = restricted_counts(3, 3).unwrap();
        assert_eq!(c.by_active.iter().sum::<u64>(), c.restricted);
    }

    #[test]
    fn two_atom_moments() {
        let g = two_atom(0.75);
        assert_eq!(moment_oracle(&g, 2, 2).unwrap(), 0.75 * 0.75);
        assert_eq!(signed_moment_oracle(&g, 3, 1).unwrap(), 0.0);
        let direct = signed_moment_oracle(&g, 3, 2).unwrap();
        let expanded = multiindex_expansion(&g, 3, 2, true).unwrap();
        assert!((direct - expanded).abs() < 1e-15);
    }

    #[test]
    fn gap_kernel_matches_direct_centering() {
        use crate::domain::Domain;
        let k = Kernel::torus_log_with_cutoff(1, 32).unwrap();
        let pts = [vec![0.1], vec![0.35], vec![0.8]];
        let mu = BaseMeasure::atoms(Domain::torus(1).unwrap(), &pts).unwrap();
        let eps = 0.01;
        let d = |x: &[f64], y: &[f64]| k.eval(x, y).unwrap() - k.eval_eps(eps, x, y).unwrap();
        let table: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| d(a, b)).collect())
            .collect();
        let direct = AtomicPair::centered(table, vec![1.0 / 3.0; 3]).unwrap();
        let g = CenteredKernel::new(&k, eps, &mu).unwrap().atomic_pair().unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((g.table[a][b] - direct.table[a][b]).abs() < 1e-12);
            }
        }
        assert!(g.centering_defect() < 1e-14);
    }

    #[test]
    fn decomposition_partitions_support() {
        for idx in enumerate_multiindices(4, 3).unwrap() {
            let (blocks, gammas) = decompose(&idx);
            assert!(is_support_partition(&idx, &blocks));
            assert_eq!(gammas.iter().sum::<u32>(), 3);
        }
    }
}
