//! Periodic tangential grids, Fourier transforms, the constant-coefficient
//! fractional Laplacian, spectral derivatives, and Sobolev norms.
//!
//! Conventions: the torus has period `P` per axis (default 2π) and physical
//! frequencies `ξ = 2πk/P` for integer `k`. Fourier coefficients are
//! normalized so that `f(x) = Σ f̂_k e^{iξ·x}`; Parseval then reads
//! `(1/N^n) Σ_j |f_j|² = Σ_k |f̂_k|²`, i.e. L²/Sobolev norms are taken with
//! respect to the normalized measure `dx/P^n`.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::Error;
use crate::Result;

/// Uniform periodic grid on the n-torus, n ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    size: usize,
    period: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, size: usize, period: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {n}")));
        }
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {size}"
            )));
        }
        if !(period > 0.0) {
            return Err(Error::InvalidGrid("period must be positive".into()));
        }
        Ok(PeriodicGrid { n, size, period })
    }

    /// Standard grid: period 2π.
    pub fn standard(n: usize, size: usize) -> Result<Self> {
        Self::new(n, size, 2.0 * std::f64::consts::PI)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.size as f64
    }

    pub fn total_points(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    /// Integer frequency for axis index `i` (half-spectrum convention with
    /// the Nyquist mode mapped to +N/2).
    pub fn freq(&self, i: usize) -> i64 {
        if i <= self.size / 2 {
            i as i64
        } else {
            i as i64 - self.size as i64
        }
    }

    /// Physical frequency `ξ = 2πk/P`.
    pub fn xi(&self, k: i64) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.period
    }

    /// Integer wavevector of a flat (row-major) index.
    pub fn wavevector(&self, flat: usize) -> [i64; 2] {
        match self.n {
            1 => [self.freq(flat), 0],
            _ => [self.freq(flat / self.size), self.freq(flat % self.size)],
        }
    }

    /// |ξ|² of a flat index.
    pub fn xi_norm_sq(&self, flat: usize) -> f64 {
        let k = self.wavevector(flat);
        let a = self.xi(k[0]);
        let b = self.xi(k[1]);
        a * a + b * b
    }

    /// Physical coordinates of a flat index, in [0, P)^n.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.n {
            1 => [flat as f64 * h, 0.0],
            _ => [(flat / self.size) as f64 * h, (flat % self.size) as f64 * h],
        }
    }

    /// Signed representative of a coordinate in (-P/2, P/2], used for
    /// distance-to-origin computations on the torus.
    pub fn signed_coord(&self, x: f64) -> f64 {
        x - self.period * (x / self.period).round()
    }

    /// Squared distance from grid point `flat` to the origin (torus metric).
    pub fn dist_sq_to_origin(&self, flat: usize) -> f64 {
        let p = self.point(flat);
        let mut d = 0.0;
        for axis in 0..self.n {
            let s = self.signed_coord(p[axis]);
            d += s * s;
        }
        d
    }
}

fn fft_1d(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
}

/// In-place n-dimensional FFT on row-major data; the forward transform is
/// normalized by 1/N^n so that coefficients are Fourier-series coefficients.
fn fft_nd(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let nn = grid.size();
    match grid.dimension() {
        1 => fft_1d(data, inverse),
        _ => {
            for row in 0..nn {
                fft_1d(&mut data[row * nn..(row + 1) * nn], inverse);
            }
            let mut col = vec![Complex64::default(); nn];
            for c in 0..nn {
                for r in 0..nn {
                    col[r] = data[r * nn + c];
                }
                fft_1d(&mut col, inverse);
                for r in 0..nn {
                    data[r * nn + c] = col[r];
                }
            }
        }
    }
    if !inverse {
        let scale = 1.0 / grid.total_points() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Fractional order γ > 0, γ ∉ ℕ, with the derived parameters
/// m = ⌊γ⌋, s = γ - m ∈ (0,1), b = 1 - 2γ + 2m = 1 - 2s ∈ (-1,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    pub gamma: f64,
    pub m: usize,
    pub s: f64,
    pub b: f64,
}

impl FractionalOrder {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("γ must be positive, got {gamma}")));
        }
        if (gamma - gamma.round()).abs() < 1e-9 {
            return Err(Error::invalid(format!("γ must be non-integer, got {gamma}")));
        }
        let m = gamma.floor() as usize;
        let s = gamma - m as f64;
        Ok(FractionalOrder {
            gamma,
            m,
            s,
            b: 1.0 - 2.0 * s,
        })
    }
}

/// Real field on a periodic grid with its Fourier coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: PeriodicGrid,
    values: Vec<f64>,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.total_points(),
                values.len()
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&grid, &mut buf, false);
        Ok(SpectralField {
            grid,
            values,
            coefficients: buf,
        })
    }

    pub fn from_coefficients(grid: PeriodicGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.total_points() {
            return Err(Error::InvalidGrid("coefficient count mismatch".into()));
        }
        let mut buf = coefficients.clone();
        fft_nd(&grid, &mut buf, true);
        let scale: f64 = coefficients.iter().map(|c| c.norm()).sum::<f64>().max(1e-300);
        let imag: f64 = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if imag > 1e-8 * scale {
            return Err(Error::invalid(
                "coefficients violate Hermitian symmetry of real data",
            ));
        }
        let values = buf.iter().map(|c| c.re).collect();
        Ok(SpectralField {
            grid,
            values,
            coefficients,
        })
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = grid.dimension();
        let values = (0..grid.total_points())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..n])
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn zero(grid: PeriodicGrid) -> Self {
        let total = grid.total_points();
        SpectralField {
            grid,
            values: vec![0.0; total],
            coefficients: vec![Complex64::default(); total],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// L² norm with respect to the normalized measure dx/P^n (equals the
    /// ℓ² norm of the coefficients by Parseval).
    pub fn l2_norm(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Discrete Sobolev norm `(Σ (1+|ξ|²)^μ |f̂_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, mu: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + self.grid.xi_norm_sq(i)).powf(mu) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Homogeneous Sobolev seminorm `(Σ |ξ|^{2μ} |f̂_k|²)^{1/2}` (zero mode
    /// excluded).
    pub fn homogeneous_norm(&self, mu: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let q = self.grid.xi_norm_sq(i);
                if q == 0.0 {
                    0.0
                } else {
                    q.powf(mu) * c.norm_sqr()
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `(-Δ)^γ f` as the Fourier multiplier `|ξ|^{2γ}`; the zero mode maps
    /// to exactly 0.
    pub fn fractional_laplacian(&self, gamma: f64) -> Result<SpectralField> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!(
                "fractional_laplacian requires γ > 0, got {gamma}"
            )));
        }
        let coeffs = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let q = self.grid.xi_norm_sq(i);
                if q == 0.0 {
                    Complex64::default()
                } else {
                    c * q.powf(gamma)
                }
            })
            .collect();
        SpectralField::from_coefficients(self.grid.clone(), coeffs)
    }

    /// Spectral partial derivative `∂^α f` for a multi-index `α` (one entry
    /// per axis). Odd-order Nyquist contributions are zeroed to keep the
    /// result real, the standard convention for even N.
    pub fn tangential_derivative(&self, multi_index: &[usize]) -> Result<SpectralField> {
        if multi_index.len() != self.grid.dimension() {
            return Err(Error::invalid(
                "multi-index length must equal the grid dimension",
            ));
        }
        let nyq = (self.grid.size() / 2) as i64;
        let coeffs = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.grid.wavevector(i);
                let mut factor = Complex64::new(1.0, 0.0);
                for (axis, &ord) in multi_index.iter().enumerate() {
                    if ord == 0 {
                        continue;
                    }
                    if k[axis] == nyq && ord % 2 == 1 {
                        factor = Complex64::default();
                        break;
                    }
                    let ixi = Complex64::new(0.0, self.grid.xi(k[axis]));
                    factor *= ixi.powi(ord as i32);
                }
                c * factor
            })
            .collect();
        SpectralField::from_coefficients(self.grid.clone(), coeffs)
    }

    /// Pointwise product with a sampled function (returns a new field with
    /// recomputed coefficients).
    pub fn pointwise_mul(&self, other: &[f64]) -> Result<SpectralField> {
        if other.len() != self.values.len() {
            return Err(Error::invalid("pointwise_mul length mismatch"));
        }
        let vals = self
            .values
            .iter()
            .zip(other)
            .map(|(a, b)| a * b)
            .collect();
        SpectralField::from_values(self.grid.clone(), vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid64() -> PeriodicGrid {
        PeriodicGrid::standard(1, 64).unwrap()
    }

    fn rand_field(grid: &PeriodicGrid, seed: u64) -> SpectralField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.total_points()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SpectralField::from_values(grid.clone(), vals).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::standard(1, 6).is_err());
        assert!(PeriodicGrid::standard(1, 48).is_err());
        assert!(PeriodicGrid::standard(3, 64).is_err());
        assert!(PeriodicGrid::standard(2, 64).is_ok());
    }

    #[test]
    fn constant_field_transform() {
        let f = SpectralField::from_fn(grid64(), |_| 1.0).unwrap();
        assert_relative_eq!(f.coefficients()[0].re, 1.0, max_relative = 1e-13);
        for c in &f.coefficients()[1..] {
            assert!(c.norm() < 1e-13);
        }
    }

    #[test]
    fn cosine_mode_transform() {
        let f = SpectralField::from_fn(grid64(), |x| (3.0 * x[0]).cos()).unwrap();
        for (i, c) in f.coefficients().iter().enumerate() {
            let k = f.grid().freq(i);
            if k.abs() == 3 {
                assert_relative_eq!(c.re, 0.5, max_relative = 1e-12);
                assert!(c.im.abs() < 1e-13);
            } else {
                assert!(c.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn parseval_and_roundtrip() {
        for n in [1usize, 2] {
            let grid = PeriodicGrid::standard(n, 32).unwrap();
            let f = rand_field(&grid, 7);
            let quad: f64 =
                f.values().iter().map(|v| v * v).sum::<f64>() / grid.total_points() as f64;
            assert_relative_eq!(quad.sqrt(), f.l2_norm(), max_relative = 1e-12);
            let back =
                SpectralField::from_coefficients(grid.clone(), f.coefficients().to_vec()).unwrap();
            for (a, b) in back.values().iter().zip(f.values()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_up_to_1024() {
        for size in [8usize, 64, 256, 1024] {
            let grid = PeriodicGrid::standard(1, size).unwrap();
            let f = rand_field(&grid, size as u64);
            let back =
                SpectralField::from_coefficients(grid, f.coefficients().to_vec()).unwrap();
            let scale = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in back.values().iter().zip(f.values()) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn fractional_laplacian_single_mode() {
        // e^{ikx}, k=2, γ=0.75 → 2^{1.5} e^{ikx}; use cos/sin pair
        let f = SpectralField::from_fn(grid64(), |x| (2.0 * x[0]).cos()).unwrap();
        let g = f.fractional_laplacian(0.75).unwrap();
        let factor = 4.0f64.powf(0.75);
        for (a, b) in g.values().iter().zip(f.values()) {
            assert_relative_eq!(*a, factor * b, epsilon = 1e-12 * factor);
        }
    }

    #[test]
    fn fractional_laplacian_zero_mode_and_validation() {
        let f = SpectralField::from_fn(grid64(), |_| 5.0).unwrap();
        let g = f.fractional_laplacian(0.9).unwrap();
        assert!(g.l2_norm() < 1e-13);
        assert!(f.fractional_laplacian(-0.5).is_err());
        assert!(f.fractional_laplacian(0.0).is_err());
    }

    #[test]
    fn fractional_laplacian_two_modes() {
        // f = cos x + cos 2x, γ = 1.5: coefficients (1, 8)/2 at |k| = 1, 2
        let f = SpectralField::from_fn(grid64(), |x| x[0].cos() + (2.0 * x[0]).cos()).unwrap();
        let g = f.fractional_laplacian(1.5).unwrap();
        for (i, c) in g.coefficients().iter().enumerate() {
            let k = g.grid().freq(i).abs();
            let expect = match k {
                1 => 0.5,
                2 => 4.0,
                _ => 0.0,
            };
            assert_relative_eq!(c.re, expect, epsilon = 1e-11);
        }
    }

    #[test]
    fn multiplier_semigroup() {
        let f = rand_field(&grid64(), 3);
        let a = f
            .fractional_laplacian(0.4)
            .unwrap()
            .fractional_laplacian(0.35)
            .unwrap();
        let b = f.fractional_laplacian(0.75).unwrap();
        let scale = b.l2_norm();
        let diff: f64 = a
            .coefficients()
            .iter()
            .zip(b.coefficients())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-10 * scale);
    }

    #[test]
    fn argmax_frequency_consistency() {
        let f = rand_field(&grid64(), 11);
        let g = f.fractional_laplacian(0.8).unwrap();
        let argmax = |c: &[Complex64], w: &dyn Fn(usize) -> f64| {
            (0..c.len())
                .max_by(|&a, &b| {
                    (c[a].norm() * w(a))
                        .partial_cmp(&(c[b].norm() * w(b)))
                        .unwrap()
                })
                .unwrap()
        };
        let ga = argmax(g.coefficients(), &|_| 1.0);
        let fa = argmax(f.coefficients(), &|i| f.grid().xi_norm_sq(i).powf(0.8));
        assert_eq!(ga, fa);
    }

    #[test]
    fn sobolev_norm_examples() {
        let zero = SpectralField::zero(grid64());
        assert_eq!(zero.sobolev_norm(2.0), 0.0);
        let f = SpectralField::from_fn(grid64(), |x| x[0].cos()).unwrap();
        assert_relative_eq!(f.sobolev_norm(1.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(f.sobolev_norm(0.0), f.l2_norm(), max_relative = 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let f = SpectralField::from_fn(grid64(), |x| x[0].sin()).unwrap();
        let d = f.tangential_derivative(&[1]).unwrap();
        for (i, v) in d.values().iter().enumerate() {
            let x = d.grid().point(i)[0];
            assert_relative_eq!(*v, x.cos(), epsilon = 1e-12);
        }
        let c = SpectralField::from_fn(grid64(), |_| 2.0).unwrap();
        assert!(c.tangential_derivative(&[3]).unwrap().l2_norm() < 1e-13);
        // cos 2x, ∂² → -4 cos 2x, cross-checked against FD h=1e-4
        let g = SpectralField::from_fn(grid64(), |x| (2.0 * x[0]).cos()).unwrap();
        let d2 = g.tangential_derivative(&[2]).unwrap();
        let h = 1e-4;
        for (i, v) in d2.values().iter().enumerate() {
            let x = d2.grid().point(i)[0];
            assert_relative_eq!(*v, -4.0 * (2.0 * x).cos(), epsilon = 1e-10);
            let fd = ((2.0 * (x + h)).cos() - 2.0 * (2.0 * x).cos() + (2.0 * (x - h)).cos())
                / (h * h);
            assert_relative_eq!(*v, fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn fractional_order_derivations() {
        let o = FractionalOrder::new(1.5).unwrap();
        assert_eq!(o.m, 1);
        assert_relative_eq!(o.s, 0.5);
        assert_relative_eq!(o.b, 0.0);
        let o = FractionalOrder::new(0.3).unwrap();
        assert_eq!(o.m, 0);
        assert_relative_eq!(o.b, 0.4, max_relative = 1e-12);
        let o = FractionalOrder::new(2.25).unwrap();
        assert_eq!(o.m, 2);
        assert_relative_eq!(o.b, 0.5, max_relative = 1e-12);
        assert!(FractionalOrder::new(2.0).is_err());
        assert!(FractionalOrder::new(-0.5).is_err());
    }

    proptest! {
        #[test]
        fn sobolev_monotone(seed in 0u64..50, mu1 in -1.0f64..2.0, dmu in 0.0f64..2.0) {
            let f = rand_field(&grid64(), seed);
            prop_assert!(f.sobolev_norm(mu1) <= f.sobolev_norm(mu1 + dmu) * (1.0 + 1e-12));
        }

        #[test]
        fn roundtrip_prop(seed in 0u64..50) {
            let f = rand_field(&grid64(), seed);
            let back = SpectralField::from_coefficients(
                f.grid().clone(), f.coefficients().to_vec()).unwrap();
            let scale = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-30));
            }
        }
    }
}
