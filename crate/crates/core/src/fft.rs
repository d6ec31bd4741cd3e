//! Multidimensional FFTs on `M^d` grids, stored row-major with the last axis
//! fastest. The forward transform carries the factor `1/M^d`, so it maps
//! grid values to Fourier coefficients `f̂_k = M^{-d} Σ_c f_c e^{-2πi k·c/M}`;
//! the inverse is unnormalized.

use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

fn transform(data: &mut [Complex64], m: usize, dim: usize, dir: Direction) {
    assert_eq!(data.len(), m.pow(dim as u32));
    let mut planner = FftPlanner::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(m),
        Direction::Inverse => planner.plan_fft_inverse(m),
    };
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for axis in 0..dim {
        let stride = m.pow((dim - 1 - axis) as u32);
        let block = stride * m;
        for start in 0..data.len() / m {
            // enumerate lines along `axis`: outer index over blocks, inner over stride
            let outer = start / stride;
            let inner = start % stride;
            let base = outer * block + inner;
            for j in 0..m {
                line[j] = data[base + j * stride];
            }
            fft.process(&mut line);
            for j in 0..m {
                data[base + j * stride] = line[j];
            }
        }
    }
    if dir == Direction::Forward {
        let s = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

pub fn forward(data: &mut [Complex64], m: usize, dim: usize) {
    transform(data, m, dim, Direction::Forward);
}

pub fn inverse(data: &mut [Complex64], m: usize, dim: usize) {
    transform(data, m, dim, Direction::Inverse);
}

pub fn forward_real(values: &[f64], m: usize, dim: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut data, m, dim);
    data
}

/// Array index of the wavenumber `k` (any integers) on an `M^d` grid.
pub fn fold_index(k: &[i64], m: usize) -> usize {
    k.iter()
        .fold(0usize, |acc, &ka| acc * m + ka.rem_euclid(m as i64) as usize)
}

/// Signed wavenumber of each array position along one axis.
pub fn wavenumber(j: usize, m: usize) -> i64 {
    if j <= m / 2 {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Multi-index of flat position `idx` on an `M^d` grid.
pub fn unflatten(mut idx: usize, m: usize, dim: usize, out: &mut [usize]) {
    for a in (0..dim).rev() {
        out[a] = idx % m;
        idx /= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_lands_on_its_coefficient() {
        let m = 8;
        let vals: Vec<f64> = (0..m * m)
            .map(|i| {
                let (c0, c1) = ((i / m) as f64, (i % m) as f64);
                (2.0 * PI * (c0 + 2.0 * c1) / m as f64).cos()
            })
            .collect();
        let h = forward_real(&vals, m, 2);
        assert!((h[fold_index(&[1, 2], m)].re - 0.5).abs() < 1e-14);
        assert!((h[fold_index(&[-1, -2], m)].re - 0.5).abs() < 1e-14);
        let total: f64 = h.iter().map(|c| c.norm()).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn round_trip_3d() {
        let m = 4;
        let vals: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut h = forward_real(&vals, m, 3);
        inverse(&mut h, m, 3);
        for (a, b) in vals.iter().zip(&h) {
            assert!((a - b.re).abs() < 1e-13 && b.im.abs() < 1e-13);
        }
    }
}
