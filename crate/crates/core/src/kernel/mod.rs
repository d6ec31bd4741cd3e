//! Interaction kernels.
//!
//! The torus kernel is the truncated Fourier series
//! `F(x) = Σ_{0<|k|_∞≤K} ĉ_k cos(2πk·x)` with `ĉ_k = |2πk|^{-d}`, and its
//! regularization multiplies each mode by `m_k(ε) = exp(-|2πk|²ε)` (full
//! order) or `exp(-|2πk|ε)` (half order, used exactly when `d = 1`). The
//! free-space kernel is `-ln|x - y|`.

pub mod free;
pub mod regularity;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domain::{Domain, DomainKind};
use crate::error::{config_err, domain_err, Error, Result};
use crate::spectral::{power_table, ModeTable};

pub use regularity::{verify_besov, verify_superharmonicity, RegularityReport};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    TorusLog,
    FreeLog,
    /// `W ≡ 0`, the non-interacting control.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemigroupOrder {
    Full,
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub domain: Domain,
    pub family: KernelFamily,
    pub cutoff: usize,
    pub order: SemigroupOrder,
}

pub fn default_cutoff(dim: usize) -> usize {
    if dim <= 2 {
        64
    } else {
        24
    }
}

fn order_for(dim: usize) -> SemigroupOrder {
    if dim == 1 {
        SemigroupOrder::Half
    } else {
        SemigroupOrder::Full
    }
}

impl Kernel {
    pub fn torus_log(dim: usize) -> Result<Kernel> {
        Self::torus_log_with_cutoff(dim, default_cutoff(dim))
    }

    pub fn torus_log_with_cutoff(dim: usize, cutoff: usize) -> Result<Kernel> {
        let domain = Domain::torus(dim)?;
        if cutoff == 0 {
            return config_err("Fourier cutoff K must be positive");
        }
        Ok(Kernel {
            domain,
            family: KernelFamily::TorusLog,
            cutoff,
            order: order_for(dim),
        })
    }

    pub fn free_log(domain: Domain) -> Result<Kernel> {
        if domain.kind != DomainKind::FreeSpace {
            return config_err("free-log kernel needs a free-space domain");
        }
        Ok(Kernel {
            domain,
            family: KernelFamily::FreeLog,
            cutoff: 0,
            order: order_for(domain.dim),
        })
    }

    pub fn zero(domain: Domain) -> Kernel {
        Kernel {
            domain,
            family: KernelFamily::Zero,
            cutoff: 0,
            order: order_for(domain.dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn is_zero(&self) -> bool {
        self.family == KernelFamily::Zero
    }

    /// `ĉ_k = |2πk|^{-d}`, with `ĉ_0 = 0`.
    pub fn coefficient(&self, k: &[i64]) -> f64 {
        let n2: i64 = k.iter().map(|c| c * c).sum();
        if n2 == 0 || self.family != KernelFamily::TorusLog {
            return 0.0;
        }
        (TWO_PI * (n2 as f64).sqrt()).powi(-(self.dim() as i32))
    }

    pub fn multiplier(&self, k: &[i64], eps: f64) -> f64 {
        if eps == 0.0 {
            return 1.0;
        }
        let n2: i64 = k.iter().map(|c| c * c).sum();
        let norm = TWO_PI * (n2 as f64).sqrt();
        match self.order {
            SemigroupOrder::Full => (-norm * norm * eps).exp(),
            SemigroupOrder::Half => (-norm * eps).exp(),
        }
    }

    /// `ĉ_k m_k(ε)` for `|k|_∞ ≤ K`, zero beyond the cutoff.
    pub fn fourier_weight(&self, k: &[i64], eps: f64) -> f64 {
        if k.iter().any(|c| c.unsigned_abs() as usize > self.cutoff) {
            return 0.0;
        }
        self.coefficient(k) * self.multiplier(k, eps)
    }

    pub fn mode_table(&self, eps: f64) -> Result<ModeTable> {
        if self.family != KernelFamily::TorusLog {
            return Err(Error::Unsupported(format!(
                "{:?} kernel has no Fourier mode table",
                self.family
            )));
        }
        check_eps(eps)?;
        Ok(ModeTable::new(self.dim(), self.cutoff, |k| {
            self.coefficient(k) * self.multiplier(k, eps)
        }))
    }

    /// Bare kernel `W(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.eval_eps(0.0, x, y)
    }

    /// Regularized kernel `W_ε(x, y) = (P_ε W)(x, y)`, `ε > 0`.
    pub fn eval_regularized(&self, eps: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if !(eps > 0.0) {
            return domain_err(format!("regularization needs eps > 0, got {eps}"));
        }
        self.eval_eps(eps, x, y)
    }

    /// `W_ε` for `ε ≥ 0`, where `ε = 0` is the bare kernel.
    pub fn eval_eps(&self, eps: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_eps(eps)?;
        let mut r = [0.0; 3];
        let d = self.dim();
        self.domain.displacement(x, y, &mut r[..d]);
        match self.family {
            KernelFamily::Zero => Ok(0.0),
            KernelFamily::TorusLog => Ok(self.torus_series(eps, &r[..d], None)),
            KernelFamily::FreeLog => {
                let dist = norm(&r[..d]);
                if eps == 0.0 {
                    if dist == 0.0 {
                        return domain_err("free-log kernel evaluated on the diagonal");
                    }
                    Ok(-dist.ln())
                } else {
                    free::regularized(d, eps, dist)
                }
            }
        }
    }

    /// Gradient of `W_ε` in its first argument.
    pub fn eval_gradient(&self, eps: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_eps(eps)?;
        let d = self.dim();
        let mut r = [0.0; 3];
        self.domain.displacement(x, y, &mut r[..d]);
        let mut g = vec![0.0; d];
        match self.family {
            KernelFamily::Zero => {}
            KernelFamily::TorusLog => {
                self.torus_series(eps, &r[..d], Some(&mut g));
            }
            KernelFamily::FreeLog => {
                let dist = norm(&r[..d]);
                if dist == 0.0 {
                    if eps == 0.0 {
                        return domain_err("free-log gradient evaluated on the diagonal");
                    }
                    return Ok(g);
                }
                let dr = if eps == 0.0 {
                    -1.0 / dist
                } else {
                    free::regularized_derivative(d, eps, dist)?
                };
                for a in 0..d {
                    g[a] = dr * r[a] / dist;
                }
            }
        }
        Ok(g)
    }

    /// `W_ε(x, x)`.
    pub fn diagonal(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        match self.family {
            KernelFamily::Zero => Ok(0.0),
            KernelFamily::TorusLog => Ok(self.mode_table(eps)?.weight_sum()),
            KernelFamily::FreeLog => {
                if eps == 0.0 {
                    return domain_err("free-log kernel is infinite on the diagonal");
                }
                free::diagonal(self.dim(), eps)
            }
        }
    }

    /// Series value at displacement `r`; when `grad` is given, writes the
    /// gradient there as well.
    fn torus_series(&self, eps: f64, r: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        let d = self.dim();
        let k = self.cutoff;
        let mut axes = vec![Complex64::new(0.0, 0.0); d * (k + 1)];
        for a in 0..d {
            // power_table gives exp(-2πi k r); conjugate for exp(+2πi k r)
            power_table(-r[a], &mut axes[a * (k + 1)..(a + 1) * (k + 1)]);
        }
        let phase = |a: usize, ka: i64| -> Complex64 {
            let z = axes[a * (k + 1) + ka.unsigned_abs() as usize];
            if ka < 0 {
                z.conj()
            } else {
                z
            }
        };
        let kk = k as i64;
        let mut value = 0.0;
        let mut g = [0.0; 3];
        let mut idx = [-kk; 3];
        // iterate the half space: first nonzero component positive
        loop {
            let ks = &idx[..d];
            let first = ks.iter().copied().find(|&c| c != 0);
            if matches!(first, Some(c) if c > 0) {
                let w = 2.0 * self.coefficient(ks) * self.multiplier(ks, eps);
                let mut z = phase(0, ks[0]);
                for a in 1..d {
                    z *= phase(a, ks[a]);
                }
                value += w * z.re;
                for a in 0..d {
                    g[a] -= w * TWO_PI * ks[a] as f64 * z.im;
                }
            }
            let mut a = d;
            loop {
                if a == 0 {
                    if let Some(out) = grad {
                        out.copy_from_slice(&g[..d]);
                    }
                    return value;
                }
                a -= 1;
                if idx[a] < kk {
                    idx[a] += 1;
                    break;
                }
                idx[a] = -kk;
            }
        }
    }

    /// Uniform bound on the truncation error `Σ_{|k|_∞>K} ĉ_k m_k(ε)`;
    /// infinite for the bare kernel, whose coefficients are not summable.
    pub fn tail_bound(&self, eps: f64) -> f64 {
        if self.family != KernelFamily::TorusLog {
            return 0.0;
        }
        if eps == 0.0 {
            return f64::INFINITY;
        }
        let d = self.dim();
        let mut total = 0.0;
        let mut s = self.cutoff as i64 + 1;
        loop {
            let shell = self.shell_sum(s, eps);
            total += shell;
            if shell <= 1e-17 * total.max(1e-300) || s > 10_000_000 {
                break;
            }
            if d > 1 && s > 20_000 {
                break;
            }
            s += 1;
        }
        total
    }

    /// `Σ_{|k|_∞ = s} ĉ_k m_k(ε)`.
    fn shell_sum(&self, s: i64, eps: f64) -> f64 {
        let d = self.dim();
        let w = |k: &[i64]| self.coefficient(k) * self.multiplier(k, eps);
        match d {
            1 => 2.0 * w(&[s]),
            2 => {
                // four edges, corners counted once
                let mut t = 0.0;
                for c in -s..s {
                    t += w(&[s, c]) + w(&[-s, -c]) + w(&[-c, s]) + w(&[c, -s]);
                }
                t
            }
            _ => {
                let mut t = 0.0;
                for a in -s..=s {
                    for b in -s..=s {
                        if a.abs() == s || b.abs() == s {
                            for c in -s..=s {
                                t += w(&[a, b, c]);
                            }
                        } else {
                            t += w(&[a, b, s]) + w(&[a, b, -s]);
                        }
                    }
                }
                t
            }
        }
    }

    /// Truncation-error bound at a fixed displacement. In `d = 1` summation
    /// by parts gives `a_{K+1} / |sin πr|` with `a_k = 2 ĉ_k m_k(ε)`
    /// decreasing; elsewhere this is the uniform bound.
    pub fn pointwise_tail_bound(&self, eps: f64, r: &[f64]) -> f64 {
        let uniform = self.tail_bound(eps);
        if self.family != KernelFamily::TorusLog || self.dim() != 1 {
            return uniform;
        }
        let kp = [self.cutoff as i64 + 1];
        let a = 2.0 * self.coefficient(&kp) * self.multiplier(&kp, eps);
        let s = (PI * r[0]).sin().abs();
        if s == 0.0 {
            return uniform;
        }
        (a / s).min(uniform)
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return domain_err(format!("regularization must be finite and ≥ 0, got {eps}"));
    }
    Ok(())
}

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Closed form of the `d = 1` torus kernel, `-(1/π) ln(2 sin πx)`.
pub fn torus_1d_closed_form(x: f64) -> f64 {
    -(2.0 * (PI * x.rem_euclid(1.0)).sin()).ln() / PI
}

/// Derivative of the `d = 1` closed form, `-cot(πx)`.
pub fn torus_1d_closed_form_derivative(x: f64) -> f64 {
    -1.0 / (PI * x).tan()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rules() {
        assert!(Kernel::torus_log_with_cutoff(2, 0).is_err());
        assert_eq!(Kernel::torus_log(1).unwrap().order, SemigroupOrder::Half);
        assert_eq!(Kernel::torus_log(2).unwrap().order, SemigroupOrder::Full);
        assert_eq!(Kernel::torus_log(3).unwrap().cutoff, 24);
        let fs = Domain::free_space(2, 1.0).unwrap();
        assert!(Kernel::free_log(Domain::torus(2).unwrap()).is_err());
        assert!(Kernel::free_log(fs).is_ok());
    }

    #[test]
    fn torus_1d_half_period_value() {
        let k = Kernel::torus_log(1).unwrap();
        let v = k.eval(&[0.5], &[0.0]).unwrap();
        let exact = -(2f64).ln() / PI;
        assert!((v - exact).abs() <= k.pointwise_tail_bound(0.0, &[0.5]));
    }

    // Poisson-smoothed closed form: Σ_{k≥1} e^{-2πkε} cos(2πkx)/(πk)
    // = -(1/2π) ln(1 - 2q cos 2πx + q²), q = e^{-2πε}.
    fn smoothed_1d(eps: f64, x: f64) -> (f64, f64) {
        let q = (-2.0 * PI * eps).exp();
        let den = 1.0 - 2.0 * q * (2.0 * PI * x).cos() + q * q;
        let v = -den.ln() / (2.0 * PI);
        let dv = -(2.0 * q * (2.0 * PI * x).sin()) / den;
        (v, dv)
    }

    #[test]
    fn regularized_1d_matches_poisson_closed_form() {
        let k = Kernel::torus_log_with_cutoff(1, 2048).unwrap();
        for &eps in &[0.02, 0.005] {
            for &x in &[0.0, 0.1, 0.25, 0.5, 0.77] {
                let (v, dv) = smoothed_1d(eps, x);
                let tail = k.tail_bound(eps);
                assert!((k.eval_regularized(eps, &[x], &[0.0]).unwrap() - v).abs() <= tail + 1e-12);
                let g = k.eval_gradient(eps, &[x], &[0.0]).unwrap()[0];
                assert!((g - dv).abs() < 1e-8, "eps {eps} x {x}: {g} vs {dv}");
            }
        }
    }

    #[test]
    fn gradient_tends_to_cotangent() {
        // the bare differentiated series does not converge pointwise, its
        // Abel means do: F'(1/4) = -cot(π/4) = -1
        let k = Kernel::torus_log_with_cutoff(1, 8192).unwrap();
        let g = k.eval_gradient(1e-3, &[0.25], &[0.0]).unwrap()[0];
        assert!((g - torus_1d_closed_form_derivative(0.25)).abs() < 1e-3);
        assert!((torus_1d_closed_form_derivative(0.25) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_log_basics() {
        let k = Kernel::free_log(Domain::free_space(2, 2.0).unwrap()).unwrap();
        assert_eq!(k.eval(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(k.eval(&[0.3, 0.3], &[0.3, 0.3]), Err(Error::Domain(_))));
        let g = k.eval_gradient(0.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
        assert!(matches!(k.eval_regularized(0.0, &[0.0; 2], &[0.0; 2]), Err(Error::Domain(_))));
        assert!(k.eval_regularized(0.1, &[0.0; 2], &[0.0; 2]).unwrap().is_finite());
    }

    #[test]
    fn diagonal_translation_invariant_and_decays() {
        let k = Kernel::torus_log_with_cutoff(2, 16).unwrap();
        let a = k.eval_regularized(0.01, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let b = k.eval_regularized(0.01, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(a, b);
        assert!((a - k.diagonal(0.01).unwrap()).abs() < 1e-13);
        let far = k.eval_regularized(10.0, &[0.1, 0.2], &[0.5, 0.9]).unwrap();
        assert!(far.abs() < 1e-100);
    }

    #[test]
    fn tail_bound_finite_only_when_regularized() {
        let k = Kernel::torus_log_with_cutoff(2, 8).unwrap();
        assert!(k.tail_bound(0.0).is_infinite());
        let t = k.tail_bound(1e-3);
        assert!(t > 0.0 && t < 1.0);
        let k1 = Kernel::torus_log_with_cutoff(1, 8).unwrap();
        let t1 = k1.tail_bound(0.01);
        // explicit sum Σ_{k>8} 2 e^{-2πk ε}/(2πk)
        let direct: f64 = (9..200_000)
            .map(|k| 2.0 * (-TWO_PI * k as f64 * 0.01).exp() / (TWO_PI * k as f64))
            .sum();
        assert!((t1 - direct).abs() < 1e-12);
    }
}
