//! Dense half-space Fourier mode tables for torus kernels.
//!
//! Modes `|k|_∞ ≤ K` are stored in a dense block whose first axis is
//! restricted to `k_1 ≥ 0` (for `d ≥ 2`) and whose last axis runs over
//! `-K..=K`. A mode carries weight `2 ĉ_k m_k(ε)` when its first nonzero
//! component is positive and weight 0 otherwise, so sums over the table
//! equal sums over all `k ≠ 0` for even, real kernels.
//!
//! The structure factor `S_k = Σ_i exp(-2πi k·x_i)` of a configuration is
//! computed as a real matrix product: each particle contributes a "row"
//! vector over the leading axes and a "column" vector over the last axis.

use num_complex::Complex64;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug)]
pub struct ModeTable {
    pub dim: usize,
    pub cutoff: usize,
    /// Number of leading-axis prefixes (1 in `d = 1`).
    pub rows: usize,
    /// `2K + 1`, the extent of the last axis.
    pub width: usize,
    /// Full wavevector of each dense position (unused components are 0).
    pub modes: Vec<[i64; 3]>,
    /// `2 ĉ_k m_k(ε)` on the counted half space, 0 elsewhere.
    pub weights: Vec<f64>,
    /// Dense positions with nonzero weight.
    pub active: Vec<usize>,
}

/// Scratch buffers reused across structure-factor evaluations.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    axis: Vec<Complex64>,
    a: Vec<f64>,
    b: Vec<f64>,
    p: Vec<f64>,
    pub s_re: Vec<f64>,
    pub s_im: Vec<f64>,
}

impl ModeTable {
    /// Builds the table from `weight(k) = ĉ_k m_k`; the half-space factor 2
    /// is applied here.
    pub fn new<F: Fn(&[i64]) -> f64>(dim: usize, cutoff: usize, weight: F) -> ModeTable {
        let k = cutoff as i64;
        let width = 2 * cutoff + 1;
        let rows = match dim {
            1 => 1,
            2 => cutoff + 1,
            _ => (cutoff + 1) * width,
        };
        let mut modes = Vec::with_capacity(rows * width);
        for r in 0..rows {
            let prefix = row_prefix(dim, cutoff, r);
            for kl in -k..=k {
                let mut m = [0i64; 3];
                m[..dim - 1].copy_from_slice(&prefix[..dim - 1]);
                m[dim - 1] = kl;
                modes.push(m);
            }
        }
        let mut weights = vec![0.0; modes.len()];
        let mut active = Vec::new();
        for (idx, m) in modes.iter().enumerate() {
            let first = m[..dim].iter().copied().find(|&c| c != 0);
            if matches!(first, Some(c) if c > 0) {
                let w = 2.0 * weight(&m[..dim]);
                if w != 0.0 {
                    weights[idx] = w;
                    active.push(idx);
                }
            }
        }
        ModeTable {
            dim,
            cutoff,
            rows,
            width,
            modes,
            weights,
            active,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Sum of all weights, i.e. `Σ_{k≠0} ĉ_k m_k` (the kernel's diagonal value).
    pub fn weight_sum(&self) -> f64 {
        self.active.iter().map(|&i| self.weights[i]).sum()
    }

    /// Dense position of `k`, if it lies in the stored half of the block.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let kk = self.cutoff as i64;
        if k.iter().any(|c| c.abs() > kk) {
            return None;
        }
        let last = (k[self.dim - 1] + kk) as usize;
        let row = match self.dim {
            1 => 0,
            2 => {
                if k[0] < 0 {
                    return None;
                }
                k[0] as usize
            }
            _ => {
                if k[0] < 0 {
                    return None;
                }
                k[0] as usize * self.width + (k[1] + kk) as usize
            }
        };
        Some(row * self.width + last)
    }

    /// `exp(-2πi k·x)` at every dense position, for a single point.
    pub fn phases(&self, x: &[f64], out: &mut Vec<Complex64>) {
        let k = self.cutoff;
        let mut axes = vec![Complex64::new(0.0, 0.0); self.dim * (k + 1)];
        for a in 0..self.dim {
            power_table(x[a], &mut axes[a * (k + 1)..(a + 1) * (k + 1)]);
        }
        let get = |a: usize, ka: i64| -> Complex64 {
            let z = axes[a * (k + 1) + ka.unsigned_abs() as usize];
            if ka < 0 {
                z.conj()
            } else {
                z
            }
        };
        out.clear();
        out.reserve(self.len());
        for m in &self.modes {
            let mut z = get(0, m[0]);
            for a in 1..self.dim {
                z *= get(a, m[a]);
            }
            out.push(z);
        }
    }

    /// Structure factor `S_k` of the flat coordinate array `coords`; results
    /// land in `ws.s_re`, `ws.s_im` (dense layout).
    pub fn structure_factor(&self, coords: &[f64], ws: &mut Workspace) {
        let d = self.dim;
        let n = coords.len() / d;
        let kc = self.cutoff;
        let cols = kc + 1;
        let rows = self.rows;
        ws.axis.resize(d * cols, Complex64::new(0.0, 0.0));
        ws.a.resize(n * 2 * rows, 0.0);
        ws.b.resize(n * 2 * cols, 0.0);
        for i in 0..n {
            let x = &coords[i * d..(i + 1) * d];
            for a in 0..d {
                power_table(x[a], &mut ws.axis[a * cols..(a + 1) * cols]);
            }
            let arow = &mut ws.a[i * 2 * rows..(i + 1) * 2 * rows];
            match d {
                1 => {
                    arow[0] = 1.0;
                    arow[1] = 0.0;
                }
                2 => {
                    for r in 0..rows {
                        let z = ws.axis[r];
                        arow[r] = z.re;
                        arow[rows + r] = z.im;
                    }
                }
                _ => {
                    let w = 2 * kc + 1;
                    for k1 in 0..=kc {
                        let z1 = ws.axis[k1];
                        for j2 in 0..w {
                            let k2 = j2 as i64 - kc as i64;
                            let mut z2 = ws.axis[cols + k2.unsigned_abs() as usize];
                            if k2 < 0 {
                                z2 = z2.conj();
                            }
                            let z = z1 * z2;
                            let r = k1 * w + j2;
                            arow[r] = z.re;
                            arow[rows + r] = z.im;
                        }
                    }
                }
            }
            let brow = &mut ws.b[i * 2 * cols..(i + 1) * 2 * cols];
            let last = &ws.axis[(d - 1) * cols..d * cols];
            for c in 0..cols {
                brow[c] = last[c].re;
                brow[cols + c] = last[c].im;
            }
        }
        let pm = 2 * rows;
        let pn = 2 * cols;
        ws.p.clear();
        ws.p.resize(pm * pn, 0.0);
        // P = Aᵀ B with A: n × 2R and B: n × 2C, both row-major
        unsafe {
            matrixmultiply::dgemm(
                pm,
                n,
                pn,
                1.0,
                ws.a.as_ptr(),
                1,
                pm as isize,
                ws.b.as_ptr(),
                pn as isize,
                1,
                0.0,
                ws.p.as_mut_ptr(),
                pn as isize,
                1,
            );
        }
        let len = self.len();
        ws.s_re.clear();
        ws.s_re.resize(len, 0.0);
        ws.s_im.clear();
        ws.s_im.resize(len, 0.0);
        let w = self.width;
        for r in 0..rows {
            for c in 0..cols {
                let prr = ws.p[r * pn + c];
                let pii = ws.p[(rows + r) * pn + cols + c];
                let pri = ws.p[r * pn + cols + c];
                let pir = ws.p[(rows + r) * pn + c];
                let plus = r * w + kc + c;
                ws.s_re[plus] = prr - pii;
                ws.s_im[plus] = pri + pir;
                if c > 0 {
                    let minus = r * w + kc - c;
                    ws.s_re[minus] = prr + pii;
                    ws.s_im[minus] = pir - pri;
                }
            }
        }
    }

    /// `g_i = Σ_k 2πk Im(e^{-2πik·x_i} c_k)` for complex coefficients `c` on
    /// the dense layout, written to `out` (flat, `n·d`). Reuses the
    /// per-particle factors left in `ws` by [`Self::structure_factor`] on
    /// the same coordinates.
    ///
    /// With `u_c = p_c + i q_c` the last-axis phase, the `±c` pair gives
    /// `z_r (p_c (C⁺ + C⁻) + i q_c (C⁺ - C⁻))`, so each axis is one real
    /// product `Y = B G` followed by `Im(Σ_r z_r Y_r)`.
    pub fn phase_gradient(&self, c_re: &[f64], c_im: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let d = self.dim;
        let kc = self.cutoff;
        let cols = kc + 1;
        let rows = self.rows;
        let w = self.width;
        let n = ws.b.len() / (2 * cols);
        let mut g = vec![0.0; 2 * cols * 2 * rows];
        let mut y = vec![0.0; n * 2 * rows];
        for a in 0..d {
            g.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let plus = r * w + kc + c;
                    let kp = TWO_PI * self.modes[plus][a] as f64;
                    let (mut pr, mut pi) = (kp * c_re[plus], kp * c_im[plus]);
                    let (mut mr, mut mi) = (0.0, 0.0);
                    if c > 0 {
                        let minus = r * w + kc - c;
                        let km = TWO_PI * self.modes[minus][a] as f64;
                        mr = km * c_re[minus];
                        mi = km * c_im[minus];
                    }
                    // E = C⁺ + C⁻, F = i(C⁺ - C⁻)
                    g[c * 2 * rows + r] = pr + mr;
                    g[c * 2 * rows + rows + r] = pi + mi;
                    pr -= mr;
                    pi -= mi;
                    g[(cols + c) * 2 * rows + r] = -pi;
                    g[(cols + c) * 2 * rows + rows + r] = pr;
                }
            }
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    2 * cols,
                    2 * rows,
                    1.0,
                    ws.b.as_ptr(),
                    2 * cols as isize,
                    1,
                    g.as_ptr(),
                    2 * rows as isize,
                    1,
                    0.0,
                    y.as_mut_ptr(),
                    2 * rows as isize,
                    1,
                );
            }
            for i in 0..n {
                let ar = &ws.a[i * 2 * rows..(i + 1) * 2 * rows];
                let yr = &y[i * 2 * rows..(i + 1) * 2 * rows];
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += ar[r] * yr[rows + r] + ar[rows + r] * yr[r];
                }
                out[i * d + a] = acc;
            }
        }
    }

    /// `Σ_k w_k |S_k|²` over the counted modes, given a structure factor.
    pub fn weighted_power(&self, s_re: &[f64], s_im: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &i in &self.active {
            acc += self.weights[i] * (s_re[i] * s_re[i] + s_im[i] * s_im[i]);
        }
        acc
    }
}

fn row_prefix(dim: usize, cutoff: usize, r: usize) -> [i64; 2] {
    match dim {
        1 => [0, 0],
        2 => [r as i64, 0],
        _ => {
            let w = 2 * cutoff + 1;
            [(r / w) as i64, (r % w) as i64 - cutoff as i64]
        }
    }
}

/// Fills `out[k] = exp(-2πi k x)` for `k = 0..out.len()`.
pub fn power_table(x: f64, out: &mut [Complex64]) {
    let base = Complex64::from_polar(1.0, -TWO_PI * x);
    let mut z = Complex64::new(1.0, 0.0);
    for (k, o) in out.iter_mut().enumerate() {
        // reseed from the exact phase periodically to bound recurrence drift
        if k > 0 && k % 32 == 0 {
            z = Complex64::from_polar(1.0, -TWO_PI * x * k as f64);
        }
        *o = z;
        z *= base;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(coords: &[f64], dim: usize, k: &[i64]) -> Complex64 {
        coords
            .chunks(dim)
            .map(|x| {
                let ph: f64 = x.iter().zip(k).map(|(a, &b)| a * b as f64).sum();
                Complex64::from_polar(1.0, -TWO_PI * ph)
            })
            .sum()
    }

    #[test]
    fn structure_factor_matches_direct_sum() {
        for dim in 1..=3 {
            let t = ModeTable::new(dim, 3, |_| 1.0);
            let coords: Vec<f64> = (0..5 * dim).map(|i| (i as f64 * 0.618).fract()).collect();
            let mut ws = Workspace::default();
            t.structure_factor(&coords, &mut ws);
            let mut ph = Vec::new();
            for (idx, m) in t.modes.iter().enumerate() {
                let s = direct(&coords, dim, &m[..dim]);
                assert!((s.re - ws.s_re[idx]).abs() < 1e-12, "dim {dim} mode {m:?}");
                assert!((s.im - ws.s_im[idx]).abs() < 1e-12);
            }
            t.phases(&coords[..dim], &mut ph);
            let m = t.modes[t.len() - 1];
            let z = direct(&coords[..dim], dim, &m[..dim]);
            assert!((ph[t.len() - 1] - z).norm() < 1e-13);
        }
    }

    #[test]
    fn half_space_counts_every_nonzero_mode_once() {
        for dim in 1..=3 {
            let k = 2usize;
            let t = ModeTable::new(dim, k, |_| 1.0);
            let total = (2 * k + 1).pow(dim as u32) - 1;
            assert_eq!(2 * t.active.len(), total);
            assert!((t.weight_sum() - total as f64).abs() < 1e-12);
            for &i in &t.active {
                assert_eq!(t.index_of(&t.modes[i][..dim]), Some(i));
            }
        }
    }
}
