//! Unique-continuation experiments: doubling quotients, vanishing order,
//! blow-up rescaling, trace / Caccioppoli / interpolation inequality audits,
//! measurable-set smallness, discrete antilocality, and Runge approximation.
//!
//! Everything here *measures*; nothing asserts a theorem a priori. Half-ball
//! norms `‖x_{n+1}^{b/2}·‖_{L²(B_r⁺)}` are evaluated with a tensor rule that
//! is exactly covariant under dilations: midpoint rows in `y` with the
//! degenerate weight `y^b` integrated in closed form on every cell, and a
//! trapezoid rule in the tangential direction. Covariance is what lets the
//! blow-up normalization identity hold to rounding instead of to quadrature
//! accuracy.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::extension::{eval_fourier, ExtensionField};
use crate::grid::{PeriodicGrid, SpectralField};
use crate::operator::{fractional_power_apply, DiscreteOperator};
use crate::quad::least_squares_slope;
use crate::special;
use crate::Result;

// ---------------------------------------------------------------------------
// Half-plane field families and weighted half-ball norms
// ---------------------------------------------------------------------------

/// A family of fields `u_0, …, u_m` on the upper half-plane (one tangential
/// dimension), evaluated row-by-row at fixed height.
pub trait HalfPlaneFields {
    /// Number of levels, `m + 1`.
    fn levels(&self) -> usize;

    /// Exponent `b` of the degenerate weight `y^b`.
    fn weight_power(&self) -> f64;

    /// Values of `u_j(x, y)` at the given abscissas.
    fn eval_row(&self, j: usize, y: f64, xs: &[f64]) -> Result<Vec<f64>>;

    /// Largest half-ball radius the family covers.
    fn coverage_radius(&self) -> f64 {
        f64::INFINITY
    }
}

impl HalfPlaneFields for ExtensionField {
    fn levels(&self) -> usize {
        self.order().m + 1
    }

    fn weight_power(&self) -> f64 {
        self.order().b
    }

    fn eval_row(&self, j: usize, y: f64, xs: &[f64]) -> Result<Vec<f64>> {
        let tg = self.grid().tangential();
        if tg.dimension() != 1 {
            return Err(Error::InvalidGrid(
                "half-ball quadrature needs one tangential dimension".into(),
            ));
        }
        let coeffs = self.coeffs_at(j, y)?;
        Ok(xs
            .iter()
            .map(|&x| eval_fourier(tg, &coeffs, &[x, 0.0]))
            .collect())
    }

    fn coverage_radius(&self) -> f64 {
        // tangential torus: a Euclidean ball must fit in half a period
        // (heights are evaluated analytically, so y imposes no bound)
        0.5 * self.grid().tangential().period()
    }
}

/// Closure-backed field family, for manufactured test inputs.
pub struct ClosureFields<F: Fn(usize, f64, f64) -> f64> {
    pub levels: usize,
    pub b: f64,
    pub f: F,
}

impl<F: Fn(usize, f64, f64) -> f64> HalfPlaneFields for ClosureFields<F> {
    fn levels(&self) -> usize {
        self.levels
    }

    fn weight_power(&self) -> f64 {
        self.b
    }

    fn eval_row(&self, j: usize, y: f64, xs: &[f64]) -> Result<Vec<f64>> {
        Ok(xs.iter().map(|&x| (self.f)(j, x, y)).collect())
    }
}

/// Exact integral of `y^b` over `[y0, y1]`, `0 ≤ y0 < y1`, `b > -1`.
fn weight_cell_mass(b: f64, y0: f64, y1: f64) -> f64 {
    (y1.powf(1.0 + b) - y0.powf(1.0 + b)) / (1.0 + b)
}

/// Half-ball quadrature skeleton: `row(y, xs)` returns the squared local
/// amplitude (already summed over components) at the midpoint height `y`.
fn half_ball_accumulate(
    b: f64,
    r: f64,
    nq: usize,
    mut row_sq: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let hy = r / nq as f64;
    let mut acc = 0.0;
    for iy in 0..nq {
        let y = (iy as f64 + 0.5) * hy;
        let xr = (r * r - y * y).max(0.0).sqrt();
        if xr == 0.0 {
            continue;
        }
        let xs: Vec<f64> = (0..=nq)
            .map(|i| -xr + 2.0 * xr * i as f64 / nq as f64)
            .collect();
        let sq = row_sq(y, &xs)?;
        let hx = 2.0 * xr / nq as f64;
        let mut line = 0.0;
        for (i, &v) in sq.iter().enumerate() {
            let w = if i == 0 || i == nq { 0.5 } else { 1.0 };
            line += w * v;
        }
        line *= hx;
        acc += line * weight_cell_mass(b, iy as f64 * hy, (iy + 1) as f64 * hy);
    }
    Ok(acc)
}

/// Weighted half-ball norm `‖y^{b/2} u_j‖_{L²(B_r⁺)}`.
pub fn weighted_half_ball_norm<T: HalfPlaneFields + ?Sized>(
    fields: &T,
    j: usize,
    r: f64,
    nq: usize,
) -> Result<f64> {
    if !(r > 0.0) || nq < 8 {
        return Err(Error::invalid("need r > 0 and at least 8 quadrature rows"));
    }
    let b = fields.weight_power();
    let acc = half_ball_accumulate(b, r, nq, |y, xs| {
        let v = fields.eval_row(j, y, xs)?;
        Ok(v.into_iter().map(|t| t * t).collect())
    })?;
    Ok(acc.sqrt())
}

// ---------------------------------------------------------------------------
// Doubling quotients
// ---------------------------------------------------------------------------

/// Per-radius weighted norms of a field family and the derived doubling
/// quotients `Q(r) = Σ_j r^{2j}‖y^{b/2}u_j‖_{B_{2r}⁺} / Σ_j r^{2j}‖y^{b/2}u_j‖_{B_r⁺}`.
#[derive(Debug, Clone)]
pub struct RadialReport {
    /// Probe radii, strictly decreasing.
    pub radii: Vec<f64>,
    /// `norms[ℓ][j]` = ‖y^{b/2}u_j‖ over `B_{r_ℓ}⁺`.
    pub norms: Vec<Vec<f64>>,
    /// Same norms over the doubled balls `B_{2 r_ℓ}⁺`.
    pub doubled_norms: Vec<Vec<f64>>,
    /// `Q(r_ℓ)`; infinite when the inner combination vanishes.
    pub quotients: Vec<f64>,
}

/// Measure the doubling quotients over a decreasing radius sweep. The
/// constant is reported, never asserted: a field vanishing near the origin
/// legitimately produces an unbounded (flagged infinite) quotient.
pub fn doubling_quotients<T: HalfPlaneFields + ?Sized>(
    fields: &T,
    radii: &[f64],
    nq: usize,
) -> Result<RadialReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("radii must be strictly decreasing"));
    }
    if !(radii[radii.len() - 1] > 0.0) {
        return Err(Error::invalid("radii must be positive"));
    }
    if 2.0 * radii[0] > fields.coverage_radius() {
        return Err(Error::InvalidGrid(format!(
            "doubled ball of radius {} exceeds the covered region",
            2.0 * radii[0]
        )));
    }
    let m = fields.levels();
    let mut norms = Vec::with_capacity(radii.len());
    let mut doubled = Vec::with_capacity(radii.len());
    let mut quotients = Vec::with_capacity(radii.len());
    for &r in radii {
        let inner: Vec<f64> = (0..m)
            .map(|j| weighted_half_ball_norm(fields, j, r, nq))
            .collect::<Result<_>>()?;
        let outer: Vec<f64> = (0..m)
            .map(|j| weighted_half_ball_norm(fields, j, 2.0 * r, nq))
            .collect::<Result<_>>()?;
        let num: f64 = outer
            .iter()
            .enumerate()
            .map(|(j, &v)| r.powi(2 * j as i32) * v)
            .sum();
        let den: f64 = inner
            .iter()
            .enumerate()
            .map(|(j, &v)| r.powi(2 * j as i32) * v)
            .sum();
        quotients.push(if den > 0.0 { num / den } else { f64::INFINITY });
        norms.push(inner);
        doubled.push(outer);
    }
    Ok(RadialReport {
        radii: radii.to_vec(),
        norms,
        doubled_norms: doubled,
        quotients,
    })
}

// ---------------------------------------------------------------------------
// Vanishing order
// ---------------------------------------------------------------------------

/// L² norm of a spectral field over the interval `[-r, r]` (one dimension),
/// by trapezoid on a fine Fourier-evaluated sub-grid.
fn line_norm(grid: &PeriodicGrid, coeffs: &[Complex64], r: f64, npts: usize) -> f64 {
    let h = 2.0 * r / npts as f64;
    let mut acc = 0.0;
    for i in 0..=npts {
        let x = -r + i as f64 * h;
        let v = eval_fourier(grid, coeffs, &[x, 0.0]);
        let w = if i == 0 || i == npts { 0.5 } else { 1.0 };
        acc += w * v * v;
    }
    (acc * h).sqrt()
}

/// Least-squares slope of `ln ‖f‖_{L²(B'_r)}` against `ln r` over the probe
/// radii: the measured vanishing order (plus the measure contribution 1/2 in
/// one dimension). Vanishing norms short-circuit to `+∞`.
pub fn vanishing_order(f: &SpectralField, radii: &[f64]) -> Result<f64> {
    if radii.len() < 4 {
        return Err(Error::invalid("vanishing order needs at least 4 radii"));
    }
    if f.grid().dimension() != 1 {
        return Err(Error::InvalidGrid("vanishing order implemented in one dimension".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0) || 2.0 * r > f.grid().period()) {
        return Err(Error::invalid("radii must be positive and fit in the torus"));
    }
    let mut lx = Vec::with_capacity(radii.len());
    let mut ly = Vec::with_capacity(radii.len());
    for &r in radii {
        let nrm = line_norm(f.grid(), f.coefficients(), r, 512);
        if nrm <= 1e-150 {
            return Ok(f64::INFINITY);
        }
        lx.push(r.ln());
        ly.push(nrm.ln());
    }
    Ok(least_squares_slope(&lx, &ly))
}

// ---------------------------------------------------------------------------
// Blow-up rescaling
// ---------------------------------------------------------------------------

/// The rescaled family
/// `u_{σ,j}(x) = σ^{-2(m-j)} u_j(σx) / Σ_k σ^{-(n+1)/2 - b/2 - 2(m-k)} ‖y^{b/2}u_k‖_{L²(B_σ⁺)}`,
/// normalized so the summed weighted norms over `B₁⁺` equal one.
pub struct BlowupField<'a, T: HalfPlaneFields + ?Sized> {
    source: &'a T,
    pub sigma: f64,
    /// The normalizing denominator (sum of scaled source norms at `B_σ⁺`).
    pub denominator: f64,
    /// Per-level multipliers `σ^{-2(m-j)} / denominator`.
    pub level_scales: Vec<f64>,
}

impl<'a, T: HalfPlaneFields + ?Sized> HalfPlaneFields for BlowupField<'a, T> {
    fn levels(&self) -> usize {
        self.source.levels()
    }

    fn weight_power(&self) -> f64 {
        self.source.weight_power()
    }

    fn eval_row(&self, j: usize, y: f64, xs: &[f64]) -> Result<Vec<f64>> {
        let sxs: Vec<f64> = xs.iter().map(|&x| self.sigma * x).collect();
        let mut v = self.source.eval_row(j, self.sigma * y, &sxs)?;
        for t in &mut v {
            *t *= self.level_scales[j];
        }
        Ok(v)
    }

    fn coverage_radius(&self) -> f64 {
        self.source.coverage_radius() / self.sigma
    }
}

impl<'a, T: HalfPlaneFields + ?Sized> BlowupField<'a, T> {
    /// Σ_j ‖y^{b/2} u_{σ,j}‖_{L²(B₁⁺)}; equals 1 to rounding by construction.
    pub fn normalization(&self, nq: usize) -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..self.levels() {
            acc += weighted_half_ball_norm(self, j, 1.0, nq)?;
        }
        Ok(acc)
    }
}

/// Build the blow-up rescaling at scale `σ`. Errors when the denominator
/// degenerates (all source norms vanish on `B_σ⁺`).
pub fn blowup_rescale<'a, T: HalfPlaneFields + ?Sized>(
    source: &'a T,
    sigma: f64,
    nq: usize,
) -> Result<BlowupField<'a, T>> {
    if !(sigma > 0.0) || sigma > fields_max_sigma(source) {
        return Err(Error::invalid(format!(
            "σ must lie in (0, {}]",
            fields_max_sigma(source)
        )));
    }
    let m = source.levels() - 1;
    let b = source.weight_power();
    // n = 1 tangential dimension throughout: exponent -(n+1)/2 - b/2 = -(2+b)/2
    let mut denom = 0.0;
    for k in 0..=m {
        let nrm = weighted_half_ball_norm(source, k, sigma, nq)?;
        denom += sigma.powf(-0.5 * (2.0 + b) - 2.0 * (m - k) as f64) * nrm;
    }
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateInput(
            "blow-up denominator vanishes (zero fields on B_σ⁺)".into(),
        ));
    }
    let level_scales = (0..=m)
        .map(|j| sigma.powf(-2.0 * (m - j) as f64) / denom)
        .collect();
    Ok(BlowupField {
        source,
        sigma,
        denominator: denom,
        level_scales,
    })
}

fn fields_max_sigma<T: HalfPlaneFields + ?Sized>(source: &T) -> f64 {
    source.coverage_radius() / 4.0
}

// ---------------------------------------------------------------------------
// Trace inequality ratio
// ---------------------------------------------------------------------------

/// Samples of a function on a periodic strip `[0, P) × [0, Y]`: uniform in
/// `x`, uniform rows in `y` starting at the boundary `y = 0`.
pub struct StripSamples {
    pub period: f64,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`.
    pub values: Vec<Vec<f64>>,
}

impl StripSamples {
    pub fn from_fn(
        period: f64,
        nx: usize,
        ys: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if nx < 8 || ys.len() < 8 || period <= 0.0 {
            return Err(Error::InvalidGrid("degenerate strip".into()));
        }
        if ys[0] != 0.0 {
            return Err(Error::InvalidGrid("strip rows must start at y = 0".into()));
        }
        let hy = ys[1] - ys[0];
        if hy <= 0.0 || ys.windows(2).any(|w| ((w[1] - w[0]) - hy).abs() > 1e-9 * hy) {
            return Err(Error::InvalidGrid("strip rows must be uniform".into()));
        }
        let hx = period / nx as f64;
        let values = ys
            .iter()
            .map(|&y| (0..nx).map(|i| f(i as f64 * hx, y)).collect())
            .collect();
        Ok(StripSamples { period, ys, values })
    }
}

/// Ratios of the weighted trace inequality
/// `‖w(·,0)‖ ≤ C(τ^{(1+b)/2}‖y^{b/2}w‖ + τ^{(b-1)/2}‖y^{b/2}∇w‖)`
/// across a τ sweep.
#[derive(Debug, Clone)]
pub struct TraceRatioReport {
    pub taus: Vec<f64>,
    pub ratios: Vec<f64>,
    /// LHS over the τ-minimized RHS (the best constant the sweep exhibits).
    pub best_ratio: f64,
}

/// Evaluate the trace-inequality ratio for each τ. Gradients are second-order
/// finite differences; the weight `y^b` is integrated exactly on every cell.
pub fn trace_ratio(w: &StripSamples, b: f64, taus: &[f64]) -> Result<TraceRatioReport> {
    if !(b > -1.0 && b < 1.0) {
        return Err(Error::invalid("weight exponent b must lie in (-1, 1)"));
    }
    if taus.is_empty() || taus.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("τ sweep must be positive"));
    }
    let ny = w.ys.len();
    let nx = w.values[0].len();
    if w.values.len() != ny || w.values.iter().any(|row| row.len() != nx) {
        return Err(Error::InvalidGrid("ragged strip samples".into()));
    }
    let hx = w.period / nx as f64;
    let hy = w.ys[1] - w.ys[0];

    let lhs = (w.values[0].iter().map(|v| v * v).sum::<f64>() * hx).sqrt();

    // per-node squared amplitude and squared gradient, then cell-wise exact
    // weight mass in y (periodic plain sum in x)
    let mut row_w2 = vec![0.0; ny];
    let mut row_g2 = vec![0.0; ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let v = w.values[iy][ix];
            let vx = (w.values[iy][(ix + 1) % nx] - w.values[iy][(ix + nx - 1) % nx]) / (2.0 * hx);
            let vy = if iy == 0 {
                (-3.0 * w.values[0][ix] + 4.0 * w.values[1][ix] - w.values[2][ix]) / (2.0 * hy)
            } else if iy == ny - 1 {
                (3.0 * w.values[ny - 1][ix] - 4.0 * w.values[ny - 2][ix] + w.values[ny - 3][ix])
                    / (2.0 * hy)
            } else {
                (w.values[iy + 1][ix] - w.values[iy - 1][ix]) / (2.0 * hy)
            };
            row_w2[iy] += v * v * hx;
            row_g2[iy] += (vx * vx + vy * vy) * hx;
        }
    }
    let mut bulk_w = 0.0;
    let mut bulk_g = 0.0;
    for iy in 0..ny - 1 {
        let mass = weight_cell_mass(b, w.ys[iy], w.ys[iy + 1]);
        bulk_w += 0.5 * (row_w2[iy] + row_w2[iy + 1]) * mass;
        bulk_g += 0.5 * (row_g2[iy] + row_g2[iy + 1]) * mass;
    }
    let (bw, bg) = (bulk_w.sqrt(), bulk_g.sqrt());

    let ratios: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let rhs = tau.powf(0.5 * (1.0 + b)) * bw + tau.powf(0.5 * (b - 1.0)) * bg;
            if rhs > 0.0 {
                lhs / rhs
            } else if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let best = ratios.iter().cloned().fold(0.0f64, f64::max);
    Ok(TraceRatioReport {
        taus: taus.to_vec(),
        ratios,
        best_ratio: best,
    })
}

// ---------------------------------------------------------------------------
// Caccioppoli inequality ratio
// ---------------------------------------------------------------------------

/// Both sides of the tangential-derivative Caccioppoli inequality for one
/// level of an extension field, per derivative order `j ≤ J`.
#[derive(Debug, Clone)]
pub struct CaccioppoliReport {
    pub per_j_lhs: Vec<f64>,
    pub per_j_rhs: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; zero when both sides vanish.
    pub ratio: f64,
}

/// Multiply tangential coefficients by `(iξ)^p`, zeroing odd-order Nyquist
/// contributions (matching the spectral-derivative convention).
fn tangential_power(grid: &PeriodicGrid, coeffs: &[Complex64], p: usize) -> Vec<Complex64> {
    let nyq = (grid.size() / 2) as i64;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if p == 0 {
                return *c;
            }
            let k = grid.wavevector(i)[0];
            if k == nyq && p % 2 == 1 {
                return Complex64::default();
            }
            c * Complex64::new(0.0, grid.xi(k)).powi(p as i32)
        })
        .collect()
}

/// Raw weighted Neumann trace coefficients of the top derived field:
/// `lim y^b ∂_y w_m = -2^{1-2s} Γ(1-s)/Γ(s) · |ξ|^{2γ} f̂`.
fn raw_neumann_coeffs(field: &ExtensionField) -> Vec<Complex64> {
    let order = field.order();
    let s = order.s;
    let c = -(2.0f64.powf(1.0 - 2.0 * s)) * special::gamma(1.0 - s) / special::gamma(s);
    let tg = field.grid().tangential();
    field
        .boundary_coefficients()
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let q = tg.xi_norm_sq(i);
            if q == 0.0 {
                Complex64::default()
            } else {
                fc * c * q.powf(order.gamma)
            }
        })
        .collect()
}

/// Measure the Caccioppoli ratio for level `level` of an extension field:
/// `Σ_j r^j ‖y^{b/2}∇(∂')^j u‖_{B_{r/2}⁺}` against the data side
/// `Σ_j (r^{j-1}‖y^{b/2}(∂')^j u‖_{B_r⁺} + r^{j+1}‖y^{b/2}(∂')^j f‖_{B_r⁺}
///  + r^j (∫_{B'_r} |(∂')^j g||(∂')^j u|)^{1/2})`,
/// where `f` is the system coupling source `κ w_{level+1}` (zero at the top
/// level) and `g` the weighted Neumann trace (nonzero only at the top level).
pub fn caccioppoli_ratio(
    field: &ExtensionField,
    level: usize,
    r: f64,
    j_max: usize,
    nq: usize,
) -> Result<CaccioppoliReport> {
    let order = field.order();
    if level > order.m {
        return Err(Error::invalid("level exceeds the system depth"));
    }
    if j_max > 2 * order.m {
        return Err(Error::invalid("tangential order exceeds 2m"));
    }
    if !(r > 0.0) || r > field.coverage_radius() {
        return Err(Error::InvalidGrid("ball exceeds the covered region".into()));
    }
    let tg = field.grid().tangential().clone();
    if tg.dimension() != 1 {
        return Err(Error::InvalidGrid("implemented for one tangential dimension".into()));
    }
    let b = order.b;
    let kappa = if level < order.m {
        -((order.m - level) as f64) / (order.gamma - level as f64 - 1.0)
    } else {
        0.0
    };
    let g_hat = if level == order.m {
        raw_neumann_coeffs(field)
    } else {
        vec![Complex64::default(); field.boundary_coefficients().len()]
    };
    let trace_hat = field.coeffs_at(level, 0.0)?;

    let mut per_j_lhs = Vec::with_capacity(j_max + 1);
    let mut per_j_rhs = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        // left: full gradient of (∂')^j u over the half ball of radius r/2
        let grad_sq = half_ball_accumulate(b, 0.5 * r, nq, |y, xs| {
            let base = field.coeffs_at(level, y)?;
            let cx = tangential_power(&tg, &base, j + 1);
            let dy = field.dy_coeffs_at(level, y)?;
            let cy = tangential_power(&tg, &dy, j);
            Ok(xs
                .iter()
                .map(|&x| {
                    let gx = eval_fourier(&tg, &cx, &[x, 0.0]);
                    let gy = eval_fourier(&tg, &cy, &[x, 0.0]);
                    gx * gx + gy * gy
                })
                .collect())
        })?;
        per_j_lhs.push(r.powi(j as i32) * grad_sq.sqrt());

        let u_norm = half_ball_accumulate(b, r, nq, |y, xs| {
            let c = tangential_power(&tg, &field.coeffs_at(level, y)?, j);
            Ok(xs
                .iter()
                .map(|&x| {
                    let v = eval_fourier(&tg, &c, &[x, 0.0]);
                    v * v
                })
                .collect())
        })?
        .sqrt();
        let f_norm = if kappa != 0.0 {
            kappa.abs()
                * half_ball_accumulate(b, r, nq, |y, xs| {
                    let c = tangential_power(&tg, &field.coeffs_at(level + 1, y)?, j);
                    Ok(xs
                        .iter()
                        .map(|&x| {
                            let v = eval_fourier(&tg, &c, &[x, 0.0]);
                            v * v
                        })
                        .collect())
                })?
                .sqrt()
        } else {
            0.0
        };
        // boundary pairing ∫ |(∂')^j g| |(∂')^j u(·,0)|
        let gj = tangential_power(&tg, &g_hat, j);
        let uj = tangential_power(&tg, &trace_hat, j);
        let npts = 512;
        let h = 2.0 * r / npts as f64;
        let mut pair = 0.0;
        for i in 0..=npts {
            let x = -r + i as f64 * h;
            let gv = eval_fourier(&tg, &gj, &[x, 0.0]).abs();
            let uv = eval_fourier(&tg, &uj, &[x, 0.0]).abs();
            let w = if i == 0 || i == npts { 0.5 } else { 1.0 };
            pair += w * gv * uv;
        }
        pair *= h;
        per_j_rhs.push(
            r.powi(j as i32 - 1) * u_norm
                + r.powi(j as i32 + 1) * f_norm
                + r.powi(j as i32) * pair.sqrt(),
        );
    }
    let lhs: f64 = per_j_lhs.iter().sum();
    let rhs: f64 = per_j_rhs.iter().sum();
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    };
    Ok(CaccioppoliReport {
        per_j_lhs,
        per_j_rhs,
        lhs,
        rhs,
        ratio,
    })
}

// ---------------------------------------------------------------------------
// Interpolation inequality ratio
// ---------------------------------------------------------------------------

/// Smooth descent from 1 to 0 on `[0, 1]` (standard C^∞ partition step).
fn smooth_step_down(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let f = |u: f64| (-1.0 / u).exp();
        f(1.0 - t) / (f(t) + f(1.0 - t))
    }
}

/// Ratio `‖(-Δ)^j u‖_{L²(B'_r)} / (‖uη‖^{1-j/γ} ‖uη‖_{Ḣ^{2γ}}^{j/γ})` with a
/// fixed smooth cutoff `η ≡ 1` on `B'_{4r}`. Requires `1 ≤ j ≤ ⌊γ⌋`.
pub fn interpolation_ratio(u: &SpectralField, j: usize, gamma: f64, r: f64) -> Result<f64> {
    if j == 0 || (j as f64) > gamma.floor() {
        return Err(Error::invalid("need 1 ≤ j ≤ ⌊γ⌋"));
    }
    let grid = u.grid();
    if grid.dimension() != 1 {
        return Err(Error::InvalidGrid("implemented in one dimension".into()));
    }
    if !(r > 0.0) || 2.0 * r > grid.period() {
        return Err(Error::invalid("ball must fit in the torus"));
    }
    let lap = u.fractional_laplacian(j as f64)?;
    let num = line_norm(grid, lap.coefficients(), r, 512);
    if num == 0.0 {
        return Ok(0.0);
    }
    // cutoff: 1 on |x| ≤ 4r, smooth descent over the next unit (or whatever
    // room the torus leaves)
    let inner = 4.0 * r;
    let outer = (inner + 1.0).min(0.5 * grid.period());
    let eta: Vec<f64> = (0..grid.total_points())
        .map(|i| {
            let d = grid.dist_sq_to_origin(i).sqrt();
            if outer <= inner {
                1.0
            } else {
                smooth_step_down((d - inner) / (outer - inner))
            }
        })
        .collect();
    let ue = u.pointwise_mul(&eta)?;
    let low = ue.l2_norm();
    let high = ue.homogeneous_norm(2.0 * gamma);
    let theta = j as f64 / gamma;
    let den = low.powf(1.0 - theta) * high.powf(theta);
    if den == 0.0 {
        return Err(Error::DegenerateInput(
            "cutoff annihilated the field".into(),
        ));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Measurable sets and masked smallness
// ---------------------------------------------------------------------------

/// A measurable subset of the tangential grid (the set where a trace is
/// required to vanish), with its measured density profile at the origin.
#[derive(Debug, Clone)]
pub struct MaskedSet {
    grid: PeriodicGrid,
    /// `true` marks membership in `E`.
    pub mask: Vec<bool>,
}

impl MaskedSet {
    pub fn new(grid: PeriodicGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.total_points() {
            return Err(Error::InvalidGrid("mask length mismatch".into()));
        }
        Ok(MaskedSet { grid, mask })
    }

    /// The whole grid.
    pub fn full(grid: PeriodicGrid) -> Self {
        let n = grid.total_points();
        MaskedSet { grid, mask: vec![true; n] }
    }

    /// Density-1/2 control: the half-line `{x < 0}` (signed representative).
    pub fn half_line(grid: PeriodicGrid) -> Self {
        let mask = (0..grid.total_points())
            .map(|i| grid.signed_coord(grid.point(i)[0]) < 0.0)
            .collect();
        MaskedSet { grid, mask }
    }

    /// Complement of a union of geometrically shrinking intervals clustering
    /// at the origin: density one at 0, measured (not assumed).
    pub fn density_one_cantor(grid: PeriodicGrid) -> Self {
        let centers: Vec<(f64, f64)> = (0..10)
            .map(|k| (0.3 * 0.5f64.powi(k), 0.05 * 0.25f64.powi(k)))
            .collect();
        let mask = (0..grid.total_points())
            .map(|i| {
                let x = grid.signed_coord(grid.point(i)[0]);
                !centers
                    .iter()
                    .any(|&(c, w)| (x.abs() - c).abs() <= w)
            })
            .collect();
        MaskedSet { grid, mask }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Measured density `|E ∩ B'_r| / |B'_r|` (grid-point counting) per radius.
    pub fn density_profile(&self, radii: &[f64]) -> Vec<f64> {
        radii
            .iter()
            .map(|&r| {
                let mut inside = 0usize;
                let mut hit = 0usize;
                for i in 0..self.grid.total_points() {
                    if self.grid.dist_sq_to_origin(i) < r * r {
                        inside += 1;
                        if self.mask[i] {
                            hit += 1;
                        }
                    }
                }
                if inside == 0 {
                    1.0
                } else {
                    hit as f64 / inside as f64
                }
            })
            .collect()
    }

    /// Zero a field on `E` (the masked trace construction).
    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        if f.grid() != &self.grid {
            return Err(Error::InvalidGrid("mask/field grid mismatch".into()));
        }
        let vals = f
            .values()
            .iter()
            .zip(&self.mask)
            .map(|(&v, &inside)| if inside { 0.0 } else { v })
            .collect();
        SpectralField::from_values(self.grid.clone(), vals)
    }
}

/// Measured smallness profile `ε(r) = LHS(r) / RHS(r)` of the masked-set
/// boundary estimate.
#[derive(Debug, Clone)]
pub struct SmallnessReport {
    pub radii: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Measure `ε(r) = ‖u₀(·,0)‖_{L²(B'_r)} / Σ_j r^{2j-(1+b)/2}‖y^{b/2}u_j‖_{L²(B_r⁺)}`
/// for an extension whose trace vanishes on `E` (checked at grid nodes).
pub fn masked_smallness(
    field: &ExtensionField,
    e: &MaskedSet,
    radii: &[f64],
    nq: usize,
) -> Result<SmallnessReport> {
    let tg = field.grid().tangential();
    if tg != e.grid() {
        return Err(Error::InvalidGrid("mask/field grid mismatch".into()));
    }
    let trace_hat = field.coeffs_at(0, 0.0)?;
    let trace = SpectralField::from_coefficients(tg.clone(), trace_hat.clone())?;
    let peak = trace
        .values()
        .iter()
        .fold(0.0f64, |mx, &v| mx.max(v.abs()));
    if peak > 0.0 {
        for (i, &inside) in e.mask.iter().enumerate() {
            if inside && trace.values()[i].abs() > 1e-8 * peak {
                return Err(Error::invalid(
                    "trace does not vanish on the masked set",
                ));
            }
        }
    }
    let b = field.order().b;
    let mut lhs = Vec::with_capacity(radii.len());
    let mut rhs = Vec::with_capacity(radii.len());
    let mut eps = Vec::with_capacity(radii.len());
    for &r in radii {
        let l = line_norm(tg, &trace_hat, r, 1024);
        let mut s = 0.0;
        for j in 0..field.levels() {
            s += r.powf(2.0 * j as f64 - 0.5 * (1.0 + b))
                * weighted_half_ball_norm(field, j, r, nq)?;
        }
        lhs.push(l);
        rhs.push(s);
        eps.push(if s > 0.0 {
            l / s
        } else if l == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    Ok(SmallnessReport {
        radii: radii.to_vec(),
        lhs,
        rhs,
        eps,
    })
}

// ---------------------------------------------------------------------------
// Discrete antilocality
// ---------------------------------------------------------------------------

/// Corank of the stacked restriction operator `[R_W ; R_W L^γ]` (rows
/// normalized, singular values below `1e-8 · σ_max` counted).
///
/// The count is the number of independent linear relations among the
/// constraints `u|_W = 0`, `(L^γ u)|_W = 0`; equivalently, the dimension of
/// the constrained set `{u : u|_W = 0, (L^γu)|_W = 0}` in excess of the
/// generic value `max(N - 2|W|, 0)`. For a genuinely nonlocal power the
/// constraints are independent and the count is zero; for a local operator
/// the rows at points whose stencil stays inside `W` are combinations of the
/// restriction rows, and the count is positive.
pub fn antilocality_nullspace(
    op: &DiscreteOperator,
    gamma: f64,
    window: &[usize],
) -> Result<usize> {
    let n = op.grid().total_points();
    if window.len() < 2 {
        return Err(Error::invalid("window needs at least 2 indices"));
    }
    let mut seen = vec![false; n];
    for &i in window {
        if i >= n || seen[i] {
            return Err(Error::invalid("window indices must be distinct and in range"));
        }
        seen[i] = true;
    }
    let rows = 2 * window.len();
    let mut b = DMatrix::<f64>::zeros(rows, n);
    for (r, &i) in window.iter().enumerate() {
        b[(r, i)] = 1.0;
    }
    for (r, &i) in window.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        // L^γ is symmetric: its i-th row is L^γ e_i
        let col = fractional_power_apply(op, gamma, &e)?;
        for (cidx, &v) in col.iter().enumerate() {
            b[(window.len() + r, cidx)] = v;
        }
    }
    // normalize rows so the threshold is insensitive to the operator scale
    for r in 0..rows {
        let nrm = b.row(r).norm();
        if nrm > 0.0 {
            for c in 0..n {
                b[(r, c)] /= nrm;
            }
        }
    }
    let sv = b.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Ok(rows.min(n));
    }
    Ok(sv.iter().filter(|&&s| s <= 1e-8 * smax).count())
}

// ---------------------------------------------------------------------------
// Runge approximation
// ---------------------------------------------------------------------------

/// Result of the discrete Runge least-squares experiment.
#[derive(Debug, Clone)]
pub struct RungeResult {
    /// Minimizing exterior datum, one value per index of `W`.
    pub f: Vec<f64>,
    /// Achieved `‖P_q f - v‖_{ℓ²(Ω)}`.
    pub error: f64,
    /// Error relative to `‖v‖`.
    pub relative_error: f64,
}

/// Approximate a target `v` on `Ω` by Poisson images `P_q f` of exterior data
/// `f` supported in `W`: solve `(L^γ + q)u = 0` on `Ω` with `u = f` on `W`
/// (zero elsewhere outside `Ω`), then minimize `‖u|_Ω - v‖` over `f`.
pub fn runge_approximate(
    op: &DiscreteOperator,
    gamma: f64,
    q: &[f64],
    omega: &[usize],
    w: &[usize],
    v: &[f64],
) -> Result<RungeResult> {
    let n = op.grid().total_points();
    if omega.is_empty() || w.is_empty() {
        return Err(Error::invalid("Ω and W must be non-empty"));
    }
    if q.len() != omega.len() || v.len() != omega.len() {
        return Err(Error::invalid("q and v must be given on Ω"));
    }
    let mut seen = vec![0u8; n];
    for &i in omega {
        if i >= n || seen[i] != 0 {
            return Err(Error::invalid("Ω indices must be distinct and in range"));
        }
        seen[i] = 1;
    }
    for &i in w {
        if i >= n || seen[i] != 0 {
            return Err(Error::invalid("W must be disjoint from Ω and in range"));
        }
        seen[i] = 2;
    }
    // columns of L^γ at all indices of Ω ∪ W (symmetric: column = row)
    let col_of = |i: usize| -> Result<Vec<f64>> {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        fractional_power_apply(op, gamma, &e)
    };
    let no = omega.len();
    let nw = w.len();
    let mut a_oo = DMatrix::<f64>::zeros(no, no);
    for (c, &i) in omega.iter().enumerate() {
        let col = col_of(i)?;
        for (r, &j) in omega.iter().enumerate() {
            a_oo[(r, c)] = col[j];
        }
    }
    for (d, &qv) in q.iter().enumerate() {
        a_oo[(d, d)] += qv;
    }
    let svd_m = a_oo.clone().svd(true, true);
    let smax = svd_m.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd_m
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::SingularSystem(
            "restricted block L^γ + q is singular on Ω".into(),
        ));
    }
    // Poisson columns: u_Ω = -(A_ΩΩ + q)⁻¹ A_ΩW e_i
    let mut p = DMatrix::<f64>::zeros(no, nw);
    for (c, &i) in w.iter().enumerate() {
        let col = col_of(i)?;
        let rhs = DVector::from_iterator(no, omega.iter().map(|&j| -col[j]));
        let sol = svd_m
            .solve(&rhs, 1e-14 * smax)
            .map_err(|e| Error::SingularSystem(e.to_string()))?;
        p.set_column(c, &sol);
    }
    let vv = DVector::from_column_slice(v);
    let svd_p = p.clone().svd(true, true);
    let psmax = svd_p.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let f = svd_p
        .solve(&vv, 1e-12 * psmax.max(1e-300))
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    let err = (&p * &f - &vv).norm();
    let vn = vv.norm();
    Ok(RungeResult {
        f: f.as_slice().to_vec(),
        error: err,
        relative_error: if vn > 0.0 { err / vn } else { err },
    })
}

// ---------------------------------------------------------------------------
// Manufactured potentials
// ---------------------------------------------------------------------------

/// A potential recovered from `(-Δ)^γ u + q u = 0` on the subgrid where `u`
/// stays away from zero, with the reconstruction residual and the Hardy-class
/// audit `sup |q||x|^{2γ}`.
#[derive(Debug, Clone)]
pub struct PotentialReport {
    pub q: Vec<f64>,
    /// `true` where `|u| ≥ threshold` and `q` is defined.
    pub mask: Vec<bool>,
    /// `max |(-Δ)^γ u + q u|` over the subgrid.
    pub residual: f64,
    /// `sup |q(x)| |x|^{2γ}` over the subgrid.
    pub hardy_sup: f64,
}

/// Build `q = -((-Δ)^γ u)/u` wherever `|u| ≥ threshold`.
pub fn manufactured_potential(
    u: &SpectralField,
    gamma: f64,
    threshold: f64,
) -> Result<PotentialReport> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let lap = u.fractional_laplacian(gamma)?;
    let grid = u.grid();
    let npts = grid.total_points();
    let mut q = vec![0.0; npts];
    let mut mask = vec![false; npts];
    let mut residual = 0.0f64;
    let mut hardy = 0.0f64;
    let mut any = false;
    for i in 0..npts {
        let uv = u.values()[i];
        if uv.abs() < threshold {
            continue;
        }
        any = true;
        mask[i] = true;
        q[i] = -lap.values()[i] / uv;
        residual = residual.max((lap.values()[i] + q[i] * uv).abs());
        hardy = hardy.max(q[i].abs() * grid.dist_sq_to_origin(i).powf(gamma));
    }
    if !any {
        return Err(Error::DegenerateInput(
            "field below threshold everywhere".into(),
        ));
    }
    Ok(PotentialReport {
        q,
        mask,
        residual,
        hardy_sup: hardy,
    })
}
