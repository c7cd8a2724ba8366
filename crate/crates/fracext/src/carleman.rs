//! Carleman weights and their audit suite.
//!
//! The weight `h(t)` lives on the conformal radial variable `t = -ln|x|`.
//! Its curvature is a mollified step function `h'' = Σ_j b_j χ_{[j,j+1]}`
//! driven by a slowly varying sequence `a_j` (an ℓ¹ sequence convolved with
//! `2^{-ν|j|}`), and its slope starts from the baseline `⌊τ⌋ + 5/4`.  The
//! subelliptic gap condition
//!
//! ```text
//! 1/4 ≤ h'' + dist(h', {μ_k}),   μ_k² = λ_k - c_{n,b},
//! ```
//!
//! couples the weight to the Neumann spectrum `{λ_k}` of the weighted
//! spherical operator `∇_{S^n}·θ_n^b ∇_{S^n}` shifted by the conformal
//! constant `c_{n,b} = -((n+b-1)/2)²`; for `n = 1` the shifted rungs are
//! exactly `k + b/2`, a unit-spaced ladder.
//!
//! Two departures from the plain prescription `b_j = τ a_j` are needed to
//! make the gap condition hold pointwise (the interval `[τ a_j, 2τ a_j]`
//! leaves room for this, but no deterministic pick inside it works for all
//! draws):
//!
//! * active intervals get a curvature floor of 0.75 so that `h'` never crawls
//!   across a ladder rung with `h'' < 1/4`;
//! * each maximal run of active intervals is scaled by a factor `f ∈ [1, 2]`
//!   chosen so the plateau of `h'` after the run lands mid-cell between two
//!   rungs.  Because the mollifier's primitive satisfies `∫ ≤ value` on each
//!   edge, the drift of `h'` during an edge never outruns the curvature, and
//!   the gap inequality follows from the plateau placement.
//!
//! The mollifier is the Hann kernel `η(x) = 1 + cos(2πx)` on `[-1/2, 1/2]`
//! (unit width, unit mass).  Unlike the flat `C^∞` bump, its derivative is
//! uniformly comparable to its primitive, which keeps the constant in
//! `|h⁗| ≤ C(1 + h'')` small; only derivatives of `h` up to order four are
//! ever inspected, and the Hann kernel has exactly that much smoothness to
//! spare.  All five sampled arrays come from closed-form antiderivatives, so
//! no numerical convolution is involved.

use crate::error::Error;
use crate::quad::tanh_sinh_with;
use crate::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Minimum mollified curvature on an active interval.
const CURVATURE_FLOOR: f64 = 0.75;

// ---------------------------------------------------------------------------
// Hann mollifier: η and its first three antiderivatives, all closed-form.
// ---------------------------------------------------------------------------

const TAU2PI: f64 = std::f64::consts::TAU;

/// Hann kernel `η(x) = 1 + cos(2πx)` on `[-1/2, 1/2]`, zero outside.
fn hann(x: f64) -> f64 {
    if x.abs() >= 0.5 {
        0.0
    } else {
        1.0 + (TAU2PI * x).cos()
    }
}

/// `η'(x)`.
fn hann_d(x: f64) -> f64 {
    if x.abs() >= 0.5 {
        0.0
    } else {
        -TAU2PI * (TAU2PI * x).sin()
    }
}

/// `H(x) = ∫_{-1/2}^x η`, the smoothed step.
fn hann_h(x: f64) -> f64 {
    if x <= -0.5 {
        0.0
    } else if x >= 0.5 {
        1.0
    } else {
        x + 0.5 + (TAU2PI * x).sin() / TAU2PI
    }
}

/// `G(x) = ∫_{-1/2}^x H`.
fn hann_g(x: f64) -> f64 {
    if x <= -0.5 {
        0.0
    } else if x >= 0.5 {
        x
    } else {
        let u = x + 0.5;
        0.5 * u * u - (1.0 + (TAU2PI * x).cos()) / (TAU2PI * TAU2PI)
    }
}

/// `G₂(x) = ∫_{-1/2}^x G`.
fn hann_g2(x: f64) -> f64 {
    if x <= -0.5 {
        0.0
    } else if x >= 0.5 {
        hann_g2_half() + 0.5 * (x * x - 0.25)
    } else {
        let u = x + 0.5;
        u * u * u / 6.0 - u / (TAU2PI * TAU2PI) - (TAU2PI * x).sin() / (TAU2PI * TAU2PI * TAU2PI)
    }
}

fn hann_g2_half() -> f64 {
    1.0 / 6.0 - 1.0 / (TAU2PI * TAU2PI)
}

// ---------------------------------------------------------------------------
// Weight specification and construction
// ---------------------------------------------------------------------------

/// Input data for [`build_weight`].
#[derive(Debug, Clone)]
pub struct WeightSpec {
    /// Nonnegative ℓ¹ driver sequence, `Σ c_j < delta`.
    pub c: Vec<f64>,
    /// Decay parameter of the smoothing kernel `2^{-ν|j|}`.
    pub nu: f64,
    /// ℓ¹ budget for `c`.
    pub delta: f64,
    /// Large Carleman parameter.
    pub tau: f64,
    /// Sample spacing of the `t`-grid.
    pub step: f64,
    /// Right end of the `t`-window (left end is 0).
    pub t_max: f64,
    /// Offset of the unit-spaced spectral ladder the plateaus of `h'` are
    /// steered away from (`b/2` for the weighted circle; 0 by default).
    pub ladder_offset: f64,
}

impl WeightSpec {
    pub fn new(c: Vec<f64>, tau: f64) -> Self {
        WeightSpec {
            c,
            nu: 0.1,
            delta: 0.1,
            tau,
            step: 1.0 / 64.0,
            t_max: 40.0,
            ladder_offset: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.c.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("weight sequence entries must be nonnegative"));
        }
        let sum: f64 = self.c.iter().sum();
        if sum >= self.delta {
            return Err(Error::invalid(format!(
                "ℓ¹ bound violated: Σ c_j = {sum} ≥ δ = {}",
                self.delta
            )));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::invalid("decay parameter ν must lie in (0, 1)"));
        }
        if self.tau < 2.0 {
            return Err(Error::invalid("Carleman parameter τ must be ≥ 2"));
        }
        if self.step <= 0.0 || self.t_max < 2.0 {
            return Err(Error::invalid("degenerate t-grid"));
        }
        Ok(())
    }
}

/// A constructed Carleman weight, sampled on `[0, t_max]` together with its
/// first four derivatives; extended constantly outside the window.
#[derive(Debug, Clone)]
pub struct CarlemanWeight {
    pub ts: Vec<f64>,
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    pub h4: Vec<f64>,
    /// Slowly varying sequence `a_j`.
    pub a: Vec<f64>,
    /// Pre-mollification step heights of `h''` on `[j, j+1]`.
    pub b: Vec<f64>,
    pub tau: f64,
    /// Left-end slope `⌊τ⌋ + 5/4`.
    pub baseline: f64,
    pub step: f64,
}

impl CarlemanWeight {
    /// `h''(t)` from the closed-form mollified step.
    pub fn h2_at(&self, t: f64) -> f64 {
        self.b
            .iter()
            .enumerate()
            .map(|(j, &bj)| bj * (hann_h(t - j as f64) - hann_h(t - j as f64 - 1.0)))
            .sum()
    }

    /// `h'''(t)`.
    pub fn h3_at(&self, t: f64) -> f64 {
        self.b
            .iter()
            .enumerate()
            .map(|(j, &bj)| bj * (hann(t - j as f64) - hann(t - j as f64 - 1.0)))
            .sum()
    }

    /// `h⁗(t)`.
    pub fn h4_at(&self, t: f64) -> f64 {
        self.b
            .iter()
            .enumerate()
            .map(|(j, &bj)| bj * (hann_d(t - j as f64) - hann_d(t - j as f64 - 1.0)))
            .sum()
    }

    /// `h'(t)`.
    pub fn h1_at(&self, t: f64) -> f64 {
        self.baseline
            + self
                .b
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * (hann_g(t - j as f64) - hann_g(t - j as f64 - 1.0)))
                .sum::<f64>()
    }

    /// `h(t)`, anchored by `h(0) = 0`.
    pub fn h_at(&self, t: f64) -> f64 {
        let anchor = self.b.first().copied().unwrap_or(0.0) * hann_g2(0.0);
        self.baseline * t - anchor
            + self
                .b
                .iter()
                .enumerate()
                .map(|(j, &bj)| bj * (hann_g2(t - j as f64) - hann_g2(t - j as f64 - 1.0)))
                .sum::<f64>()
    }
}

/// Build the Carleman weight from a driver sequence.
///
/// `a_j` is the convolution of `c` with `2^{-ν|j|}` (hence slowly varying),
/// intervals with `a_j ≤ ν/τ` stay flat, and active intervals receive the
/// height `f · max(τ a_j, 0.75)` with a per-run scale `f ∈ [1, 2]` that
/// steers each post-run plateau of `h'` to the middle of a ladder cell.
pub fn build_weight(spec: &WeightSpec) -> Result<CarlemanWeight> {
    spec.validate()?;
    let nj = spec.t_max.floor() as usize;
    let a: Vec<f64> = (0..nj)
        .map(|j| {
            spec.c
                .iter()
                .enumerate()
                .map(|(i, &ci)| ci * 2f64.powf(-spec.nu * (j as f64 - i as f64).abs()))
                .sum()
        })
        .collect();
    let baseline = spec.tau.floor() + 1.25;
    let threshold = spec.nu / spec.tau;
    let active: Vec<bool> = a.iter().map(|&aj| aj > threshold).collect();

    // maximal runs of active intervals
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut j = 0;
    while j < nj {
        if active[j] {
            let s = j;
            while j + 1 < nj && active[j + 1] {
                j += 1;
            }
            runs.push((s, j));
        }
        j += 1;
    }

    let mut b = vec![0.0; nj];
    let mut plateau = baseline;
    for &(s, e) in &runs {
        let base: Vec<f64> = (s..=e).map(|j| (spec.tau * a[j]).max(CURVATURE_FLOOR)).collect();
        let total: f64 = base.iter().sum();
        let f = if e + 1 == nj {
            // run touches the window end: no plateau inside the window
            1.0
        } else {
            // steer the post-run plateau to the middle of a ladder cell;
            // total ≥ 0.75, so f ∈ [1, 2] sweeps the plateau over at least
            // three quarters of a cell and a miss ≤ 0.155 is guaranteed
            let steps = 4096;
            let mut best = (f64::MAX, 1.0);
            for i in 0..=steps {
                let f = 1.0 + i as f64 / steps as f64;
                let frac = (plateau + f * total - spec.ladder_offset).rem_euclid(1.0);
                let miss = (frac - 0.5).abs();
                if miss < best.0 {
                    best = (miss, f);
                }
            }
            best.1
        };
        for (k, j) in (s..=e).enumerate() {
            b[j] = f * base[k];
        }
        plateau += f * total;
    }

    let samples = (spec.t_max / spec.step).round() as usize + 1;
    let mut w = CarlemanWeight {
        ts: (0..samples).map(|i| i as f64 * spec.step).collect(),
        h: Vec::new(),
        h1: Vec::new(),
        h2: Vec::new(),
        h3: Vec::new(),
        h4: Vec::new(),
        a,
        b,
        tau: spec.tau,
        baseline,
        step: spec.step,
    };
    w.h = w.ts.iter().map(|&t| w.h_at(t)).collect();
    w.h1 = w.ts.iter().map(|&t| w.h1_at(t)).collect();
    w.h2 = w.ts.iter().map(|&t| w.h2_at(t)).collect();
    w.h3 = w.ts.iter().map(|&t| w.h3_at(t)).collect();
    w.h4 = w.ts.iter().map(|&t| w.h4_at(t)).collect();
    Ok(w)
}

// ---------------------------------------------------------------------------
// Weighted spherical spectrum (n = 1)
// ---------------------------------------------------------------------------

/// Neumann spectrum of `∇_{S^n}·θ_n^b ∇_{S^n}` together with eigenfunction
/// cosine coefficients (`n = 1`: the operator `-(sin^b θ ψ')' / sin^b θ` on
/// the arc `θ ∈ (0, π)`).
#[derive(Debug, Clone)]
pub struct SphericalSpectrum {
    pub n: usize,
    pub b: f64,
    /// Ascending Neumann eigenvalues; `λ_k = k(k+b)` for `n = 1`.
    pub eigenvalues: Vec<f64>,
    /// Cosine coefficients of the eigenfunctions, normalized in
    /// `L²(sin^b θ dθ)`.
    pub coeffs: Vec<Vec<f64>>,
}

impl SphericalSpectrum {
    /// Gap above the bottom eigenvalue.
    pub fn gap(&self) -> f64 {
        if self.eigenvalues.len() > 1 {
            self.eigenvalues[1] - self.eigenvalues[0]
        } else {
            0.0
        }
    }

    /// Evaluate eigenfunction `k` at `θ`.
    pub fn eigenfunction(&self, k: usize, theta: f64) -> f64 {
        self.coeffs[k]
            .iter()
            .enumerate()
            .map(|(j, &cj)| cj * (j as f64 * theta).cos())
            .sum()
    }

    /// Evaluate `ψ_k'(θ)`.
    pub fn eigenfunction_deriv(&self, k: usize, theta: f64) -> f64 {
        self.coeffs[k]
            .iter()
            .enumerate()
            .map(|(j, &cj)| -cj * j as f64 * (j as f64 * theta).sin())
            .sum()
    }

    /// Rungs `μ_k = √(λ_k - c_{n,b})` of the shifted ladder (the zero set of
    /// the symmetric conjugated operator), extended with the asymptotic
    /// spacing up to `limit`.  For `n = 1` the extension is exact since
    /// `μ_k = k + b/2`.
    pub fn shifted_ladder(&self, limit: f64) -> Vec<f64> {
        let c = conformal_constant(self.n, self.b);
        let mut mu: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&l| (l - c).max(0.0).sqrt())
            .collect();
        extend_ladder(&mut mu, limit);
        mu
    }

    /// Raw rungs `√λ_k`, same extension rule; reported alongside the shifted
    /// ladder so the distance convention can be audited.
    pub fn raw_ladder(&self, limit: f64) -> Vec<f64> {
        let mut mu: Vec<f64> = self.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        extend_ladder(&mut mu, limit);
        mu
    }
}

fn extend_ladder(mu: &mut Vec<f64>, limit: f64) {
    let step = if mu.len() >= 2 {
        (mu[mu.len() - 1] - mu[mu.len() - 2]).max(0.5)
    } else {
        1.0
    };
    while *mu.last().unwrap_or(&0.0) < limit {
        mu.push(mu.last().copied().unwrap_or(0.0) + step);
    }
}

/// Conformal zeroth-order constant `c_{n,b} = -((n+b-1)/2)²`.
pub fn conformal_constant(n: usize, b: f64) -> f64 {
    let s = (n as f64 + b - 1.0) / 2.0;
    -s * s
}

/// First `count` Neumann eigenvalues of the weighted spherical operator.
///
/// Discretized by a Galerkin method in the cosine basis `cos(kθ)`.  The
/// eigenfunctions are polynomials of degree `k` in `cos θ` (Gegenbauer
/// reduction), so the basis spans exact invariant subspaces and the computed
/// eigenvalues agree with `k(k+b)` to quadrature accuracy.
pub fn spherical_spectrum(n: usize, b: f64, count: usize) -> Result<SphericalSpectrum> {
    if n != 1 {
        return Err(Error::invalid("spherical spectrum implemented for n = 1 only"));
    }
    if !(b > -1.0 && b < 1.0) {
        return Err(Error::invalid("weight exponent b must lie in (-1, 1)"));
    }
    if count == 0 {
        return Err(Error::invalid("eigenvalue count must be positive"));
    }
    // cosine moments c_m = ∫_0^π cos(mθ) sin^b θ dθ; the sine is evaluated
    // through the endpoint distances to keep the singular weight accurate
    let kmax = count - 1;
    let moments: Vec<f64> = (0..=2 * kmax)
        .map(|m| {
            tanh_sinh_with(
                |_, da, db| {
                    let theta = if da <= db { da } else { std::f64::consts::PI - db };
                    (m as f64 * theta).cos() * da.min(db).sin().powf(b)
                },
                0.0,
                std::f64::consts::PI,
                1e-13,
            )
        })
        .collect();
    let cm = |m: usize| moments[m];
    // mass and stiffness in the cosine basis via product-to-sum
    let mass = DMatrix::from_fn(count, count, |j, k| {
        0.5 * (cm(j.abs_diff(k)) + cm(j + k))
    });
    let stiff = DMatrix::from_fn(count, count, |j, k| {
        (j * k) as f64 * 0.5 * (cm(j.abs_diff(k)) - cm(j + k))
    });
    let chol = nalgebra::Cholesky::new(mass.clone())
        .ok_or_else(|| Error::SingularSystem("spherical mass matrix not positive".into()))?;
    let l = chol.l();
    let li = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("mass factor not invertible".into()))?;
    let reduced = &li * &stiff * li.transpose();
    let sym = 0.5 * (&reduced + reduced.transpose());
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    let mut eigenvalues = Vec::with_capacity(count);
    let mut coeffs = Vec::with_capacity(count);
    for &i in &order {
        let mut lam = eig.eigenvalues[i];
        if lam.abs() <= 1e-10 * scale {
            lam = 0.0;
        }
        eigenvalues.push(lam);
        // back-substitute Lᵀ x = y; unit y gives ∫ ψ² sin^b θ dθ = 1
        let y = eig.eigenvectors.column(i).into_owned();
        let x = l
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::SingularSystem("mass back-substitution failed".into()))?;
        let mut v: Vec<f64> = x.iter().copied().collect();
        let at_zero: f64 = v.iter().sum();
        if at_zero < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        coeffs.push(v);
    }
    Ok(SphericalSpectrum {
        n,
        b,
        eigenvalues,
        coeffs,
    })
}

// ---------------------------------------------------------------------------
// Weight checks
// ---------------------------------------------------------------------------

/// Result of [`check_weight`].
#[derive(Debug, Clone)]
pub struct WeightReport {
    /// `h'` positive and nondecreasing on the window.
    pub slope_ok: bool,
    /// `min_t [h'' + dist(h', shifted ladder)] ≥ 1/4`.
    pub gap_ok: bool,
    /// `|h'''|, |h⁗| ≤ C(1 + h'') ≤ Cτ` with a finite constant.
    pub deriv_ok: bool,
    /// Single constant covering the slope, derivative-growth, and
    /// `(1+h'') ≤ Cτ` bounds.
    pub c: f64,
    pub slope_c: f64,
    pub deriv_c: f64,
    pub gap_min: f64,
    /// Smallest distance of `h'` to the shifted ladder `{√(λ_k - c_{n,b})}`.
    pub min_shifted_dist: f64,
    /// Smallest distance of `h'` to the raw rungs `{√λ_k}`.
    pub min_raw_dist: f64,
}

fn dist_to(x: f64, ladder: &[f64]) -> f64 {
    ladder
        .iter()
        .map(|&m| (x - m).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Audit a weight against a spherical spectrum: slope window, pointwise gap
/// inequality, and derivative growth.
pub fn check_weight(w: &CarlemanWeight, spectrum: &SphericalSpectrum) -> WeightReport {
    let h1_max = w.h1.iter().cloned().fold(f64::MIN, f64::max);
    let h1_min = w.h1.iter().cloned().fold(f64::MAX, f64::min);
    let shifted = spectrum.shifted_ladder(h1_max + 2.0);
    let raw = spectrum.raw_ladder(h1_max + 2.0);

    let mut gap_min = f64::INFINITY;
    let mut min_shift = f64::INFINITY;
    let mut min_raw = f64::INFINITY;
    let mut deriv_c = 0.0f64;
    let mut monotone = true;
    for i in 0..w.ts.len() {
        let ds = dist_to(w.h1[i], &shifted);
        let dr = dist_to(w.h1[i], &raw);
        gap_min = gap_min.min(w.h2[i] + ds);
        min_shift = min_shift.min(ds);
        min_raw = min_raw.min(dr);
        deriv_c = deriv_c.max(w.h3[i].abs().max(w.h4[i].abs()) / (1.0 + w.h2[i]));
        if i > 0 && w.h1[i] < w.h1[i - 1] - 1e-10 {
            monotone = false;
        }
    }
    let h2_max = w.h2.iter().cloned().fold(0.0f64, f64::max);
    let slope_c = (h1_max / w.tau).max(w.tau / h1_min);
    let c_tau = (1.0 + h2_max) / w.tau;
    WeightReport {
        slope_ok: h1_min > 0.0 && monotone,
        gap_ok: gap_min >= 0.25 - 1e-9,
        deriv_ok: deriv_c.is_finite() && c_tau.is_finite(),
        c: slope_c.max(deriv_c).max(c_tau).max(1.0),
        slope_c,
        deriv_c,
        gap_min,
        min_shifted_dist: min_shift,
        min_raw_dist: min_raw,
    }
}

// ---------------------------------------------------------------------------
// Conformal polar coordinates
// ---------------------------------------------------------------------------

/// Scalar samples on a (log-uniform) polar annulus grid, `values[i*nθ+j]`
/// at radius `rs[i]` and angle `thetas[j]`.
#[derive(Debug, Clone)]
pub struct AnnulusField {
    pub rs: Vec<f64>,
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
}

/// The same field in conformal cylinder coordinates `(t, θ)`, `t = -ln r`,
/// carrying the conformal factor and the constant `c_{n,b}`.
#[derive(Debug, Clone)]
pub struct CylinderField {
    pub ts: Vec<f64>,
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub n: usize,
    pub b: f64,
    pub c_nb: f64,
}

/// Catmull-Rom interpolation on a uniform grid starting at `x0` with step
/// `dx`; the query must have a full four-point stencil.
fn cubic_interp(x0: f64, dx: f64, ys: &[f64], x: f64) -> Result<f64> {
    let u = (x - x0) / dx;
    let i = u.floor() as isize;
    if i < 1 || (i as usize) + 2 >= ys.len() {
        return Err(Error::invalid(format!(
            "interpolation point {x} outside the covered range"
        )));
    }
    let i = i as usize;
    let s = u - i as f64;
    let (p0, p1, p2, p3) = (ys[i - 1], ys[i], ys[i + 1], ys[i + 2]);
    Ok(p1 + 0.5
        * s
        * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0))))
}

/// Resample an annulus field to cylinder coordinates:
/// `ṽ(t, θ) = e^{(1-b-n)t/2} v(e^{-t}, θ)`.
///
/// Radii must be log-uniform and cover `e^{-t}` for every requested `t` with
/// an interior cubic stencil.
pub fn conformal_transform(
    u: &AnnulusField,
    n: usize,
    b: f64,
    ts: &[f64],
) -> Result<CylinderField> {
    let (s0, ds, ss) = log_radius_axis(&u.rs)?;
    let ntheta = u.thetas.len();
    let mut values = vec![0.0; ts.len() * ntheta];
    for (it, &t) in ts.iter().enumerate() {
        let s = -t; // ln r
        let factor = ((1.0 - b - n as f64) * t / 2.0).exp();
        for j in 0..ntheta {
            let column: Vec<f64> = (0..u.rs.len()).map(|i| u.values[i * ntheta + j]).collect();
            // axis may be stored in either direction
            let _ = &ss;
            values[it * ntheta + j] = factor * cubic_interp(s0, ds, &column, s)?;
        }
    }
    Ok(CylinderField {
        ts: ts.to_vec(),
        thetas: u.thetas.clone(),
        values,
        n,
        b,
        c_nb: conformal_constant(n, b),
    })
}

/// Inverse of [`conformal_transform`]: resample back to radii `rs`.
pub fn inverse_conformal_transform(v: &CylinderField, rs: &[f64]) -> Result<AnnulusField> {
    if v.ts.len() < 4 {
        return Err(Error::invalid("cylinder field too short to interpolate"));
    }
    let dt = v.ts[1] - v.ts[0];
    let ntheta = v.thetas.len();
    let mut values = vec![0.0; rs.len() * ntheta];
    for (ir, &r) in rs.iter().enumerate() {
        if r <= 0.0 {
            return Err(Error::invalid("radii must be positive"));
        }
        let t = -r.ln();
        let factor = (-(1.0 - v.b - v.n as f64) * t / 2.0).exp();
        for j in 0..ntheta {
            let column: Vec<f64> = (0..v.ts.len()).map(|i| v.values[i * ntheta + j]).collect();
            values[ir * ntheta + j] = factor * cubic_interp(v.ts[0], dt, &column, t)?;
        }
    }
    Ok(AnnulusField {
        rs: rs.to_vec(),
        thetas: v.thetas.clone(),
        values,
    })
}

fn log_radius_axis(rs: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    if rs.len() < 4 {
        return Err(Error::invalid("need at least four radii"));
    }
    if rs.iter().any(|&r| r <= 0.0) {
        return Err(Error::invalid("radii must be positive"));
    }
    let ss: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let ds = ss[1] - ss[0];
    for i in 1..ss.len() {
        if ((ss[i] - ss[i - 1]) - ds).abs() > 1e-9 * ds.abs().max(1e-9) {
            return Err(Error::invalid("radii must be log-uniform"));
        }
    }
    Ok((ss[0], ds, ss))
}

// ---------------------------------------------------------------------------
// Spectral derivatives on the t-grid
// ---------------------------------------------------------------------------

/// Derivatives of the requested orders of a periodic sample vector, computed
/// spectrally and optionally upsampled by an integer factor (trigonometric
/// interpolation via zero padding).
fn spectral_derivatives(
    vals: &[f64],
    period: f64,
    orders: &[u32],
    upsample: usize,
) -> Vec<Vec<f64>> {
    let n = vals.len();
    let m = n * upsample;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(m);
    let mut spec: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut spec);
    let mut out = Vec::with_capacity(orders.len());
    for &order in orders {
        let mut padded = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            let freq: i64 = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
            let mut coef = spec[k];
            if order > 0 {
                if 2 * k == n {
                    coef = Complex64::new(0.0, 0.0); // Nyquist has no odd derivative
                } else {
                    let ik = Complex64::new(0.0, TAU2PI * freq as f64 / period);
                    coef *= ik.powu(order);
                }
            }
            let dest = if freq >= 0 {
                freq as usize
            } else {
                (m as i64 + freq) as usize
            };
            // halve a shared Nyquist bin if it lands on both sides
            padded[dest] += coef;
        }
        inv.process(&mut padded);
        out.push(padded.iter().map(|z| z.re / n as f64).collect());
    }
    out
}

// ---------------------------------------------------------------------------
// Mode-wise commutator identity
// ---------------------------------------------------------------------------

/// Result of [`mode_commutator_check`].
#[derive(Debug, Clone)]
pub struct CommutatorReport {
    /// `‖(S+A)α‖²` by direct operator application.
    pub lhs: f64,
    pub s_sq: f64,
    pub a_sq: f64,
    /// `4∫ h'² h'' α²`.
    pub term1: f64,
    /// `4∫ h'' (α')²`.
    pub term2: f64,
    /// `-∫ h⁗ α²`.
    pub term3: f64,
    /// Relative defect of `lhs = s_sq + a_sq + term1 + term2 + term3`.
    pub residual: f64,
}

/// Verify the energy identity `‖(S+A)α‖² = ‖Sα‖² + ‖Aα‖² + ⟨[S,A]α, α⟩`
/// for the conjugated mode operator
/// `S = ∂² + h'² + c - λ²`, `A = -2h'∂ - h''`,
/// with the commutator evaluated from its closed form
/// `⟨[S,A]α,α⟩ = 4∫(h'²h''α² + h''(α')²) - ∫h⁗α²`.
pub fn mode_commutator_check(
    w: &CarlemanWeight,
    lambda_sq: f64,
    c_nb: f64,
    alpha: &[f64],
) -> Result<CommutatorReport> {
    let n = w.ts.len() - 1;
    if alpha.len() != w.ts.len() {
        return Err(Error::invalid("test profile must be sampled on the weight grid"));
    }
    let peak = alpha.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::DegenerateInput("zero test profile".into()));
    }
    let margin = (1.0 / w.step).round() as usize;
    if alpha[..margin]
        .iter()
        .chain(alpha[alpha.len() - margin..].iter())
        .any(|&v| v.abs() > 1e-10 * peak)
    {
        return Err(Error::invalid("test profile support touches the grid ends"));
    }
    let period = w.step * n as f64;
    let up = 4;
    let derivs = spectral_derivatives(&alpha[..n], period, &[0, 1, 2], up);
    let (a0, a1, a2) = (&derivs[0], &derivs[1], &derivs[2]);
    let m = a0.len();
    let fine = period / m as f64;
    let mut lhs = 0.0;
    let mut s_sq = 0.0;
    let mut a_sq = 0.0;
    let mut term1 = 0.0;
    let mut term2 = 0.0;
    let mut term3 = 0.0;
    for i in 0..m {
        let t = i as f64 * fine;
        let h1 = w.h1_at(t);
        let h2 = w.h2_at(t);
        let h4 = w.h4_at(t);
        let s = a2[i] + (h1 * h1 + c_nb - lambda_sq) * a0[i];
        let aa = -2.0 * h1 * a1[i] - h2 * a0[i];
        lhs += (s + aa) * (s + aa);
        s_sq += s * s;
        a_sq += aa * aa;
        term1 += 4.0 * h1 * h1 * h2 * a0[i] * a0[i];
        term2 += 4.0 * h2 * a1[i] * a1[i];
        term3 -= h4 * a0[i] * a0[i];
    }
    for v in [
        &mut lhs, &mut s_sq, &mut a_sq, &mut term1, &mut term2, &mut term3,
    ] {
        *v *= fine;
    }
    let rhs = s_sq + a_sq + term1 + term2 + term3;
    let scale = lhs.abs().max(s_sq + a_sq).max(1e-300);
    Ok(CommutatorReport {
        lhs,
        s_sq,
        a_sq,
        term1,
        term2,
        term3,
        residual: (lhs - rhs).abs() / scale,
    })
}

// ---------------------------------------------------------------------------
// Carleman inequality ratios
// ---------------------------------------------------------------------------

/// One separated component `X(t) ψ_k(θ)` of a manufactured annulus field:
/// a radial profile on the weight's `t`-grid times a spherical eigenmode.
#[derive(Debug, Clone)]
pub struct AnnulusMode {
    pub mode: usize,
    pub profile: Vec<f64>,
}

/// A weighted-norm specification in the separated polar quadrature: the
/// squared integrand is `e^{2h} (1+h'')^q e^{et·t} Σ mult·P(t)²`.
struct NormSpec {
    tau_pow: f64,
    q: f64,
    et: f64,
    parts: Vec<(Vec<f64>, f64)>,
}

/// Empirical LHS/RHS ratio of the Carleman inequality for a manufactured
/// solution built from separated modes; `m = 0` gives the scalar estimate
/// (including its boundary term), `m = 1` the two-level system estimate with
/// `ũ_1 := Δ_b ũ_0` (so `f_0 = 0` and `f_1 = Δ_b ũ_1`).
///
/// The manufactured data satisfies the homogeneous weighted Neumann condition
/// exactly (eigenmodes in θ), so the boundary datum `g` vanishes.
pub fn carleman_ratio(
    modes: &[AnnulusMode],
    m: usize,
    w: &CarlemanWeight,
    spectrum: &SphericalSpectrum,
) -> Result<f64> {
    if m > 1 {
        return Err(Error::invalid("system ratios implemented for m ≤ 1"));
    }
    let b = spectrum.b;
    let tau = w.tau;
    let n = w.ts.len() - 1;
    let period = w.step * n as f64;
    // fine grid: e^{2h} varies like e^{2τ·Δt}, so resolve it well below one
    // e-fold per sample
    let up = ((tau / 8.0).ceil() as usize).clamp(4, 64);
    let mfine = n * up;
    let fine = period / mfine as f64;
    let tf: Vec<f64> = (0..mfine).map(|i| i as f64 * fine).collect();
    let hf: Vec<f64> = tf.iter().map(|&t| w.h_at(t)).collect();
    let h2f: Vec<f64> = tf.iter().map(|&t| w.h2_at(t)).collect();

    let mut lhs_specs: Vec<NormSpec> = Vec::new();
    let mut rhs_specs: Vec<NormSpec> = Vec::new();
    if m == 0 {
        lhs_specs.push(NormSpec { tau_pow: 1.0, q: 1.0, et: -b, parts: Vec::new() });
        lhs_specs.push(NormSpec { tau_pow: 0.0, q: 1.0, et: -b, parts: Vec::new() });
        lhs_specs.push(NormSpec { tau_pow: (1.0 - b) / 2.0, q: 1.0, et: -b, parts: Vec::new() });
        // f carries y^{-b/2}|x| on the right, and the stored source array
        // already includes the e^{2t} polar factor: net t-exponent -(4+b)
        rhs_specs.push(NormSpec { tau_pow: 0.0, q: 0.0, et: -(4.0 + b), parts: Vec::new() });
    } else {
        lhs_specs.push(NormSpec { tau_pow: 2.0, q: 2.0, et: 4.0 - b, parts: Vec::new() });
        lhs_specs.push(NormSpec { tau_pow: 1.0, q: 2.0, et: 4.0 - b, parts: Vec::new() });
        lhs_specs.push(NormSpec { tau_pow: 1.0, q: 1.0, et: -b, parts: Vec::new() });
        lhs_specs.push(NormSpec { tau_pow: 0.0, q: 1.0, et: -b, parts: Vec::new() });
        rhs_specs.push(NormSpec { tau_pow: 0.0, q: 0.0, et: -(4.0 + b), parts: Vec::new() });
    }

    let mut bdry0: Vec<f64> = vec![0.0; mfine];
    let mut bdrypi: Vec<f64> = vec![0.0; mfine];
    let mut any = false;
    for am in modes {
        if am.profile.len() != w.ts.len() {
            return Err(Error::invalid("mode profile must be sampled on the weight grid"));
        }
        let peak = am.profile.iter().fold(0.0f64, |mx, &v| mx.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        any = true;
        let margin = (1.0 / w.step).round() as usize;
        if am.profile[..margin]
            .iter()
            .chain(am.profile[am.profile.len() - margin..].iter())
            .any(|&v| v.abs() > 1e-10 * peak)
        {
            return Err(Error::invalid("mode profile support touches the annulus boundary"));
        }
        let lam = *spectrum
            .eigenvalues
            .get(am.mode)
            .ok_or_else(|| Error::invalid("mode index beyond the computed spectrum"))?;
        let d = spectral_derivatives(&am.profile[..n], period, &[0, 1, 2], up);
        let (x, x1d, x2d) = (&d[0], &d[1], &d[2]);
        // Δ_b (X ψ) separates: e^{2t} (Ẍ - bẊ - λX) ψ
        let lap: Vec<f64> = (0..mfine)
            .map(|i| ((2.0 * tf[i]).exp()) * (x2d[i] - b * x1d[i] - lam * x[i]))
            .collect();
        if m == 0 {
            lhs_specs[0].parts.push((x.clone(), 1.0));
            lhs_specs[1].parts.push((x1d.clone(), 1.0));
            lhs_specs[1].parts.push((x.clone(), lam));
            let p0 = spectrum.eigenfunction(am.mode, 0.0);
            let ppi = spectrum.eigenfunction(am.mode, std::f64::consts::PI);
            for i in 0..mfine {
                bdry0[i] += x[i] * p0;
                bdrypi[i] += x[i] * ppi;
            }
            rhs_specs[0].parts.push((lap, 1.0));
        } else {
            let d1 = spectral_derivatives_from_fine(&lap, period, &[1, 2]);
            let (u1d, u2d) = (&d1[0], &d1[1]);
            let f1: Vec<f64> = (0..mfine)
                .map(|i| ((2.0 * tf[i]).exp()) * (u2d[i] - b * u1d[i] - lam * lap[i]))
                .collect();
            lhs_specs[0].parts.push((x.clone(), 1.0));
            lhs_specs[1].parts.push((x1d.clone(), 1.0));
            lhs_specs[1].parts.push((x.clone(), lam));
            lhs_specs[2].parts.push((lap.clone(), 1.0));
            lhs_specs[3].parts.push((u1d.clone(), 1.0));
            lhs_specs[3].parts.push((lap.clone(), lam));
            rhs_specs[0].parts.push((f1, 1.0));
        }
    }
    if !any {
        return Ok(0.0);
    }
    if m == 0 {
        lhs_specs[2].parts.push((bdry0, 1.0));
        lhs_specs[2].parts.push((bdrypi, 1.0));
    }

    // common log-scale normalization so the exponentially weighted integrands
    // stay inside the double-precision range on both sides of the ratio
    let mut cstar = f64::MIN;
    let log_integrand = |spec: &NormSpec, i: usize| -> f64 {
        let mut ssq = 0.0;
        for (prof, mult) in &spec.parts {
            ssq += mult * prof[i] * prof[i];
        }
        if ssq <= 0.0 {
            return f64::MIN;
        }
        2.0 * hf[i] + spec.et * tf[i] + spec.q * (1.0 + h2f[i]).ln() + ssq.ln()
    };
    for spec in lhs_specs.iter().chain(rhs_specs.iter()) {
        for i in 0..mfine {
            cstar = cstar.max(log_integrand(spec, i));
        }
    }
    if cstar == f64::MIN {
        return Ok(0.0);
    }
    let norm_of = |spec: &NormSpec| -> f64 {
        let mut acc = 0.0;
        for i in 0..mfine {
            let l = log_integrand(spec, i);
            if l > f64::MIN {
                acc += (l - cstar).exp();
            }
        }
        tau.powf(spec.tau_pow) * (acc * fine).sqrt()
    };
    let lhs: f64 = lhs_specs.iter().map(&norm_of).sum();
    let rhs: f64 = rhs_specs.iter().map(&norm_of).sum();
    if rhs == 0.0 {
        if lhs == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateInput(
            "vanishing right-hand side with nonzero left-hand side".into(),
        ));
    }
    Ok(lhs / rhs)
}

/// Spectral derivatives of data already on the fine grid (no upsampling).
fn spectral_derivatives_from_fine(vals: &[f64], period: f64, orders: &[u32]) -> Vec<Vec<f64>> {
    spectral_derivatives(vals, period, orders, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_spec(tau: f64) -> WeightSpec {
        WeightSpec::new(Vec::new(), tau)
    }

    #[test]
    fn linear_weight_from_empty_sequence() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        assert!(w.h2.iter().all(|&v| v == 0.0));
        assert!(w.h1.iter().all(|&v| (v - 17.25).abs() < 1e-12));
        assert!((w.h_at(0.0)).abs() < 1e-12);
        assert_relative_eq!(w.h_at(3.0), 3.0 * 17.25, max_relative = 1e-12);
    }

    #[test]
    fn single_spike_convolution_oracle() {
        let mut spec = WeightSpec::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.05], 100.0);
        spec.nu = 0.1;
        let w = build_weight(&spec).unwrap();
        for (j, &aj) in w.a.iter().enumerate() {
            let oracle = 0.05 * 2f64.powf(-0.1 * (j as f64 - 5.0).abs());
            assert_relative_eq!(aj, oracle, max_relative = 1e-12);
        }
        // slowly varying
        for j in 0..w.a.len() - 1 {
            assert!(w.a[j] >= 2f64.powf(-0.1) * w.a[j + 1] - 1e-14);
            assert!(w.a[j] <= 2f64.powf(0.1) * w.a[j + 1] + 1e-14);
        }
        // positive curvature exactly where a_j clears the threshold
        let thr = 0.1 / 100.0;
        for j in 0..w.a.len() {
            assert_eq!(w.b[j] > 0.0, w.a[j] > thr, "interval {j}");
        }
    }

    fn random_spec(rng: &mut ChaCha8Rng, tau: f64) -> WeightSpec {
        let len = rng.gen_range(3..20);
        let mut c: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = c.iter().sum();
        let budget = rng.gen_range(0.01..0.08);
        c.iter_mut().for_each(|v| *v *= budget / sum);
        WeightSpec::new(c, tau)
    }

    #[test]
    fn slowly_varying_for_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 64.0);
            let w = build_weight(&spec).unwrap();
            for j in 0..w.a.len() - 1 {
                assert!(w.a[j] >= 2f64.powf(-spec.nu) * w.a[j + 1] - 1e-14);
                assert!(w.a[j] <= 2f64.powf(spec.nu) * w.a[j + 1] + 1e-14);
            }
        }
    }

    #[test]
    fn weight_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for tau in [16.0, 128.0] {
            for _ in 0..5 {
                let spec = random_spec(&mut rng, tau);
                let w = build_weight(&spec).unwrap();
                assert!(w.h2.iter().all(|&v| v >= -1e-12));
                assert!(w.h1.windows(2).all(|p| p[1] >= p[0] - 1e-10));
                assert!(w.h_at(0.0).abs() < 1e-10);
                let baseline = tau.floor() + 1.25;
                // the curvature floor can lift b_j above 2τa_j on weak
                // intervals, so the classical cap is widened accordingly
                let cap: f64 = baseline
                    + w.a
                        .iter()
                        .zip(&w.b)
                        .map(|(&aj, &bj)| {
                            if bj > 0.0 {
                                (2.0 * tau * aj).max(2.0 * CURVATURE_FLOOR)
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>();
                let h1_max = w.h1.iter().cloned().fold(f64::MIN, f64::max);
                assert!(w.h1.iter().all(|&v| v >= baseline - 1e-9));
                assert!(h1_max <= cap + 1e-9);
            }
        }
    }

    #[test]
    fn linear_weight_passes_checks() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        let sp = spherical_spectrum(1, 0.0, 24).unwrap();
        let rep = check_weight(&w, &sp);
        // dist(17.25, ℤ) = 1/4 exactly
        assert!(rep.gap_ok, "gap_min = {}", rep.gap_min);
        assert!(rep.slope_ok && rep.deriv_ok);
        assert_relative_eq!(rep.min_shifted_dist, 0.25, max_relative = 1e-9);
    }

    #[test]
    fn forced_spectral_collision_fails() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        // plant a rung exactly on the plateau of h' (c_{1,0} = 0 so the
        // shifted rung sits at √λ = 17.25)
        let sp = SphericalSpectrum {
            n: 1,
            b: 0.0,
            eigenvalues: vec![0.0, 17.25f64 * 17.25],
            coeffs: vec![vec![1.0], vec![0.0, 1.0]],
        };
        let rep = check_weight(&w, &sp);
        assert!(!rep.gap_ok);
        assert!(rep.min_shifted_dist < 1e-9);
    }

    #[test]
    fn random_weight_suite_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sp = spherical_spectrum(1, 0.0, 24).unwrap();
        for tau in [16.0, 128.0, 1024.0] {
            for _ in 0..8 {
                let spec = random_spec(&mut rng, tau);
                let w = build_weight(&spec).unwrap();
                let rep = check_weight(&w, &sp);
                assert!(rep.slope_ok && rep.deriv_ok);
                assert!(rep.gap_ok, "τ={tau} gap_min={}", rep.gap_min);
                assert!(rep.c <= 10.0, "τ={tau} C={}", rep.c);
            }
        }
    }

    #[test]
    fn spherical_spectrum_matches_gegenbauer() {
        for b in [-0.5, -0.2, 0.0, 0.3, 0.7] {
            let sp = spherical_spectrum(1, b, 13).unwrap();
            assert_eq!(sp.eigenvalues[0], 0.0);
            assert!(sp.gap() > 0.0);
            for k in 0..13usize {
                let oracle = k as f64 * (k as f64 + b);
                if k == 0 {
                    assert!(sp.eigenvalues[0].abs() < 1e-9);
                } else {
                    assert_relative_eq!(sp.eigenvalues[k], oracle, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn spherical_eigenfunctions_neumann_and_orthonormal() {
        let sp = spherical_spectrum(1, 0.5, 6).unwrap();
        // ψ' vanishes to first order at both ends for the low modes
        for k in 0..4 {
            assert!(sp.eigenfunction_deriv(k, 1e-6).abs() < 1e-3);
            assert!(sp.eigenfunction_deriv(k, std::f64::consts::PI - 1e-6).abs() < 1e-3);
        }
        // normalization ∫ ψ² sin^b = 1
        for k in 0..4 {
            let v = tanh_sinh_with(
                |_, da, db| {
                    let theta = if da <= db { da } else { std::f64::consts::PI - db };
                    sp.eigenfunction(k, theta).powi(2) * da.min(db).sin().powf(0.5)
                },
                0.0,
                std::f64::consts::PI,
                1e-12,
            );
            assert_relative_eq!(v, 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn conformal_constant_examples() {
        assert_eq!(conformal_constant(1, 0.0), 0.0);
        assert_relative_eq!(conformal_constant(1, 0.5), -0.0625, max_relative = 1e-14);
        assert_relative_eq!(conformal_constant(2, 0.0), -0.25, max_relative = 1e-14);
    }

    fn annulus_from(f: impl Fn(f64, f64) -> f64, nr: usize, ntheta: usize) -> AnnulusField {
        // log-uniform radii on [e^{-3}, e^{-1}]
        let rs: Vec<f64> = (0..nr)
            .map(|i| (-3.0 + 2.0 * i as f64 / (nr - 1) as f64).exp())
            .collect();
        let thetas: Vec<f64> = (0..ntheta)
            .map(|j| std::f64::consts::PI * (j as f64 + 0.5) / ntheta as f64)
            .collect();
        let mut values = vec![0.0; nr * ntheta];
        for i in 0..nr {
            for j in 0..ntheta {
                values[i * ntheta + j] = f(rs[i], thetas[j]);
            }
        }
        AnnulusField { rs, thetas, values }
    }

    #[test]
    fn conformal_power_law_is_exponential() {
        let alpha = 1.3;
        let u = annulus_from(|r, _| r.powf(alpha), 201, 4);
        let ts: Vec<f64> = (0..41).map(|i| 1.2 + i as f64 * 0.04).collect();
        let v = conformal_transform(&u, 1, 0.4, &ts).unwrap();
        // ṽ(t) = e^{((1-b-n)/2 - α)t}; successive ratios constant
        let rate = ((1.0 - 0.4 - 1.0) / 2.0 - alpha) * 0.04;
        for i in 1..ts.len() {
            let ratio = v.values[i * 4] / v.values[(i - 1) * 4];
            assert_relative_eq!(ratio, rate.exp(), max_relative = 1e-5);
        }
        assert_eq!(v.c_nb, conformal_constant(1, 0.4));
    }

    #[test]
    fn conformal_round_trip() {
        let u = annulus_from(
            |r, th| (-(r.ln() + 2.0).powi(2) * 8.0).exp() * (2.0 * th).cos(),
            401,
            8,
        );
        let ts: Vec<f64> = (0..257).map(|i| 1.1 + i as f64 * (1.8 / 256.0)).collect();
        let v = conformal_transform(&u, 1, 0.3, &ts).unwrap();
        let rs_back: Vec<f64> = (0..101).map(|i| (-1.3 - i as f64 * 0.014).exp()).collect();
        let back = inverse_conformal_transform(&v, &rs_back).unwrap();
        let mut max_err = 0.0f64;
        for (i, &r) in rs_back.iter().enumerate() {
            for (j, &th) in back.thetas.iter().enumerate() {
                let exact = (-(r.ln() + 2.0).powi(2) * 8.0).exp() * (2.0 * th).cos();
                max_err = max_err.max((back.values[i * 8 + j] - exact).abs());
            }
        }
        assert!(max_err <= 1e-6, "round trip error {max_err}");
    }

    fn gaussian_profile(w: &CarlemanWeight, center: f64, sigma: f64) -> Vec<f64> {
        w.ts
            .iter()
            .map(|&t| (-(t - center).powi(2) / (2.0 * sigma * sigma)).exp())
            .map(|v| if v < 1e-40 { 0.0 } else { v })
            .collect()
    }

    #[test]
    fn commutator_vanishes_for_linear_weight() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        let alpha = gaussian_profile(&w, 20.0, 1.5);
        let rep = mode_commutator_check(&w, 4.0, 0.0, &alpha).unwrap();
        assert_eq!(rep.term1, 0.0);
        assert_eq!(rep.term2, 0.0);
        assert_eq!(rep.term3, 0.0);
        assert!(rep.residual <= 1e-8, "residual {}", rep.residual);
    }

    #[test]
    fn commutator_first_terms_nonnegative_for_convex_weight() {
        let mut spec = WeightSpec::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.05], 100.0);
        spec.nu = 0.1;
        let w = build_weight(&spec).unwrap();
        let alpha = gaussian_profile(&w, 18.0, 2.0);
        let rep = mode_commutator_check(&w, 1.0, 0.0, &alpha).unwrap();
        assert!(rep.term1 >= 0.0);
        assert!(rep.term2 >= 0.0);
        assert!(rep.residual <= 1e-6, "residual {}", rep.residual);
    }

    #[test]
    fn commutator_identity_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for i in 0..20 {
            let tau = [16.0, 64.0, 256.0][i % 3];
            let spec = random_spec(&mut rng, tau);
            let w = build_weight(&spec).unwrap();
            let center = rng.gen_range(12.0..26.0);
            let sigma = rng.gen_range(0.8..1.5);
            let lam: f64 = rng.gen_range(0.0..10.0);
            let alpha = gaussian_profile(&w, center, sigma);
            let rep = mode_commutator_check(&w, lam * lam, -0.01, &alpha).unwrap();
            assert!(rep.residual <= 1e-6, "draw {i}: residual {}", rep.residual);
        }
    }

    #[test]
    fn commutator_rejects_boundary_support() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        let alpha = gaussian_profile(&w, 0.5, 1.0);
        assert!(mode_commutator_check(&w, 1.0, 0.0, &alpha).is_err());
    }

    fn bump_profile(w: &CarlemanWeight, center: f64, half_width: f64) -> Vec<f64> {
        w.ts
            .iter()
            .map(|&t| {
                let u = (t - center) / half_width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - u * u)).exp()
                }
            })
            .collect()
    }

    #[test]
    fn ratio_of_zero_field_is_zero() {
        let w = build_weight(&zero_spec(16.0)).unwrap();
        let sp = spherical_spectrum(1, 0.0, 8).unwrap();
        let modes = vec![AnnulusMode { mode: 2, profile: vec![0.0; w.ts.len()] }];
        assert_eq!(carleman_ratio(&modes, 0, &w, &sp).unwrap(), 0.0);
    }

    #[test]
    fn scalar_ratio_bounded_over_tau_sweep() {
        // b = 0 corresponds to γ = 1/2
        let sp = spherical_spectrum(1, 0.0, 8).unwrap();
        let mut worst = 0.0f64;
        for tau in [16.0, 64.0, 256.0] {
            let w = build_weight(&WeightSpec::new(vec![0.02, 0.01], tau)).unwrap();
            let modes = vec![AnnulusMode { mode: 2, profile: bump_profile(&w, 8.0, 2.0) }];
            let r = carleman_ratio(&modes, 0, &w, &sp).unwrap();
            assert!(r.is_finite() && r > 0.0);
            worst = worst.max(r);
        }
        // observed ≈ 2.2e-2 across the sweep
        assert!(worst <= 1.0, "scalar ratio sweep max {worst}");
    }

    #[test]
    fn system_ratio_bounded_over_tau_sweep() {
        // m = 1 with b = 0 corresponds to γ = 3/2
        let sp = spherical_spectrum(1, 0.0, 8).unwrap();
        let mut worst = 0.0f64;
        for tau in [16.0, 64.0, 256.0] {
            let w = build_weight(&WeightSpec::new(vec![0.02, 0.01], tau)).unwrap();
            let modes = vec![AnnulusMode { mode: 1, profile: bump_profile(&w, 8.0, 2.0) }];
            let r = carleman_ratio(&modes, 1, &w, &sp).unwrap();
            assert!(r.is_finite() && r > 0.0);
            worst = worst.max(r);
        }
        // observed ≈ 4.0e-3 across the sweep
        assert!(worst <= 1.0, "system ratio sweep max {worst}");
    }

    #[test]
    fn ell_one_violation_rejected() {
        let spec = WeightSpec::new(vec![0.2, 0.2], 16.0);
        assert!(build_weight(&spec).is_err());
    }
}
