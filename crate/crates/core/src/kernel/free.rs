//! The free-space logarithm `-ln|x|` and its heat-semigroup regularization.
//!
//! In `d = 2, 3` the regularization is the Gaussian average with variance
//! `2ε` per coordinate. In `d = 2` it has the closed form
//! `-ln r - E1(r²/4ε)/2`; in `d = 3` it is computed by radial quadrature of
//! the sphere-averaged logarithm against the chi density. In `d = 1` the
//! half-order semigroup is the Poisson (Cauchy) kernel of scale `ε`, whose
//! action on `-ln|x|` is `-ln|x + iε| = -ln(x² + ε²)/2`.

use crate::error::Result;
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::special::{exp_int_e1, GAMMA};

pub const QUAD_TOL: f64 = 1e-8;

/// Radial profile `W_ε(r)` of the regularized free logarithm.
pub fn regularized(dim: usize, eps: f64, r: f64) -> Result<f64> {
    match dim {
        1 => Ok(-0.5 * (r * r + eps * eps).ln()),
        2 => Ok(closed_form_2d(eps, r)),
        _ => radial_quadrature(dim, eps, r),
    }
}

/// Radial derivative `dW_ε/dr`.
pub fn regularized_derivative(dim: usize, eps: f64, r: f64) -> Result<f64> {
    match dim {
        1 => Ok(-r / (r * r + eps * eps)),
        2 => {
            if r == 0.0 {
                return Ok(0.0);
            }
            Ok(-(1.0 - (-r * r / (4.0 * eps)).exp()) / r)
        }
        _ => radial_quadrature_derivative(dim, eps, r),
    }
}

fn closed_form_2d(eps: f64, r: f64) -> f64 {
    let z = r * r / (4.0 * eps);
    if z < 1e-8 {
        // -ln r - E1(z)/2 with the small-z series of E1 folded in
        return -0.5 * ((4.0 * eps).ln() - GAMMA) - 0.5 * z;
    }
    -r.ln() - 0.5 * exp_int_e1(z)
}

/// Density of `|Z|` for `Z ~ N(0, σ² I_d)`.
fn chi_density(dim: usize, sigma: f64, s: f64) -> f64 {
    let u = s / sigma;
    let g = (-0.5 * u * u).exp();
    match dim {
        2 => u * g / sigma,
        3 => (2.0 / std::f64::consts::PI).sqrt() * u * u * g / sigma,
        _ => unreachable!("radial quadrature is for d = 2, 3"),
    }
}

/// Average of `ln|x - sω|` over the unit sphere of directions `ω`, `|x| = r`.
pub fn sphere_mean_log(dim: usize, r: f64, s: f64) -> f64 {
    match dim {
        2 => r.max(s).ln(),
        _ => {
            if r == 0.0 {
                return s.ln();
            }
            if s == 0.0 {
                return r.ln();
            }
            let h = |u: f64| if u == 0.0 { 0.0 } else { 0.5 * u * u * u.ln() - 0.25 * u * u };
            (h(r + s) - h((r - s).abs())) / (2.0 * r * s)
        }
    }
}

fn sphere_mean_log_dr(dim: usize, r: f64, s: f64) -> f64 {
    match dim {
        2 => {
            if r > s {
                1.0 / r
            } else {
                0.0
            }
        }
        _ => {
            if r == 0.0 || s == 0.0 {
                return if s == 0.0 { 1.0 / r } else { 0.0 };
            }
            let hp = |u: f64| if u == 0.0 { 0.0 } else { u * u.ln() };
            let m = sphere_mean_log(dim, r, s);
            -m / r + (hp(r + s) - (r - s).signum() * hp((r - s).abs())) / (2.0 * r * s)
        }
    }
}

/// `E[-ln|x + √(2ε) Z|]` by adaptive quadrature over the radius of `Z`.
pub fn radial_quadrature(dim: usize, eps: f64, r: f64) -> Result<f64> {
    let sigma = (2.0 * eps).sqrt();
    let f = |s: f64| -chi_density(dim, sigma, s) * sphere_mean_log(dim, r, s);
    split_integral(f, r, sigma)
}

fn radial_quadrature_derivative(dim: usize, eps: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let sigma = (2.0 * eps).sqrt();
    let f = |s: f64| -chi_density(dim, sigma, s) * sphere_mean_log_dr(dim, r, s);
    split_integral(f, r, sigma)
}

fn split_integral<F: Fn(f64) -> f64>(f: F, kink: f64, scale: f64) -> Result<f64> {
    // the integrand has a kink at s = r; the chi density lives on the scale σ
    let mut pts = vec![0.0];
    for &p in &[kink, scale, 4.0 * scale, 10.0 * scale] {
        if p > 0.0 && !pts.contains(&p) {
            pts.push(p);
        }
    }
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(&f, w[0], w[1], QUAD_TOL)?;
    }
    total += integrate_to_infinity(&f, *pts.last().unwrap(), QUAD_TOL)?;
    Ok(total)
}

/// Diagonal value `W_ε(x, x)`.
pub fn diagonal(dim: usize, eps: f64) -> Result<f64> {
    match dim {
        1 => Ok(-eps.ln()),
        2 => Ok(-0.5 * ((4.0 * eps).ln() - GAMMA)),
        _ => radial_quadrature(dim, eps, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_agrees_with_quadrature_in_2d() {
        for &eps in &[1e-3, 0.05, 0.4] {
            for &r in &[0.0, 1e-3, 0.05, 0.3, 1.0, 3.0] {
                let a = closed_form_2d(eps, r);
                let b = radial_quadrature(2, eps, r).unwrap();
                assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "eps {eps} r {r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for dim in 1..=3 {
            for &r in &[0.02, 0.3, 1.5] {
                let eps = 0.01;
                let h = 1e-5;
                let fd = (regularized(dim, eps, r + h).unwrap() - regularized(dim, eps, r - h).unwrap())
                    / (2.0 * h);
                let d = regularized_derivative(dim, eps, r).unwrap();
                assert!((fd - d).abs() < 1e-5 * (1.0 + d.abs()), "d{dim} r{r}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn far_field_tends_to_bare_log() {
        for dim in 1..=3 {
            let v = regularized(dim, 1e-4, 2.0).unwrap();
            assert!((v + 2f64.ln()).abs() < 1e-4, "d{dim}: {v}");
        }
    }

    #[test]
    fn diagonal_in_3d_matches_gaussian_log_moment() {
        // E ln|Z| for Z ~ N(0, I_3) is (ln 2 + ψ(3/2))/2 with ψ(3/2) = 2 - γ - 2 ln 2
        let eps = 0.02;
        let sigma2: f64 = 2.0 * eps;
        let elog = 0.5 * (2f64.ln() + 2.0 - GAMMA - 2.0 * 2f64.ln());
        let expect = -(0.5 * sigma2.ln() + elog);
        assert!((diagonal(3, eps).unwrap() - expect).abs() < 1e-7);
    }
}
