//! Discrete variable-coefficient operators `L = -∇·ã∇` on the torus, their
//! fractional powers and heat semigroup through a dense eigendecomposition,
//! and the heat-quadrature route to the extension.
//!
//! For the identity metric the spectral discretization is diagonalized
//! analytically (eigenvalues exactly `|ξ|²`), so all functional-calculus
//! operations are exact up to rounding. Variable metrics are assembled
//! either spectral-Galerkin (`L = Σ D_p^T ã_{pq} D_q`, exactly symmetric) or
//! by conservative finite differences.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::grid::{FractionalOrder, PeriodicGrid, SpectralField};
use crate::quad::tanh_sinh;
use crate::special;
use crate::Result;

const MAX_DENSE: usize = 4096;

/// Symmetric coefficient field ã on the tangential grid.
///
/// Components are stored per point: `[a]` for n = 1 and
/// `[a11, a12, a21, a22]` for n = 2 (symmetric constructors set a21 = a12).
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: PeriodicGrid,
    comps: Vec<Vec<f64>>,
}

impl MetricField {
    pub fn identity(grid: PeriodicGrid) -> Self {
        let np = grid.total_points();
        let comps = match grid.dimension() {
            1 => vec![vec![1.0; np]],
            _ => vec![vec![1.0; np], vec![0.0; np], vec![0.0; np], vec![1.0; np]],
        };
        MetricField { grid, comps }
    }

    /// Scalar multiple of the identity: ã(x) = a(x)·I.
    pub fn isotropic(grid: PeriodicGrid, a: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let np = grid.total_points();
        let scalar: Vec<f64> = (0..np).map(|i| a(&grid.point(i)[..grid.dimension()])).collect();
        if scalar.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite metric sample"));
        }
        let comps = match grid.dimension() {
            1 => vec![scalar],
            _ => {
                let zero = vec![0.0; np];
                vec![scalar.clone(), zero.clone(), zero, scalar]
            }
        };
        Ok(MetricField { grid, comps })
    }

    /// Upper-triangle components: `[a]` (n = 1) or `[a11, a12, a22]` (n = 2).
    pub fn from_components(grid: PeriodicGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let np = grid.total_points();
        let expect = if grid.dimension() == 1 { 1 } else { 3 };
        if comps.len() != expect || comps.iter().any(|c| c.len() != np) {
            return Err(Error::invalid("wrong metric component shape"));
        }
        let comps = if grid.dimension() == 1 {
            comps
        } else {
            let mut c = comps;
            let a22 = c.pop().unwrap();
            let a12 = c.pop().unwrap();
            let a11 = c.pop().unwrap();
            vec![a11, a12.clone(), a12, a22]
        };
        Ok(MetricField { grid, comps })
    }

    /// All four n = 2 components (possibly non-symmetric; A1 then fails).
    pub fn from_full(grid: PeriodicGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let np = grid.total_points();
        if grid.dimension() != 2 || comps.len() != 4 || comps.iter().any(|c| c.len() != np) {
            return Err(Error::invalid("from_full expects four n=2 components"));
        }
        Ok(MetricField { grid, comps })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn is_symmetric(&self) -> bool {
        if self.grid.dimension() == 1 {
            return true;
        }
        self.comps[1]
            .iter()
            .zip(&self.comps[2])
            .all(|(a, b)| (a - b).abs() <= 1e-14)
    }

    pub fn is_identity(&self) -> bool {
        let id = |c: &Vec<f64>| c.iter().all(|v| (v - 1.0).abs() <= 1e-14);
        let zero = |c: &Vec<f64>| c.iter().all(|v| v.abs() <= 1e-14);
        match self.grid.dimension() {
            1 => id(&self.comps[0]),
            _ => id(&self.comps[0]) && zero(&self.comps[1]) && zero(&self.comps[2]) && id(&self.comps[3]),
        }
    }

    /// Pointwise eigenvalue bounds (λ_min, λ_max) of the symmetrized matrix.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let np = self.grid.total_points();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..np {
            let (l1, l2) = match self.grid.dimension() {
                1 => (self.comps[0][i], self.comps[0][i]),
                _ => {
                    let a = self.comps[0][i];
                    let b = 0.5 * (self.comps[1][i] + self.comps[2][i]);
                    let d = self.comps[3][i];
                    let tr = 0.5 * (a + d);
                    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                    (tr - disc, tr + disc)
                }
            };
            lo = lo.min(l1);
            hi = hi.max(l2);
        }
        (lo, hi)
    }
}

/// Validation report for conditions (A1)–(A3).
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub a1_symmetric: bool,
    pub a1_positive: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// ã(0) = I within 1e-14
    pub a3_identity_at_origin: bool,
    /// divided-difference seminorms of orders 1 … 2m+1
    pub seminorms: Vec<f64>,
    /// first + last seminorm ≤ δ
    pub a2_small: bool,
    pub delta: f64,
}

impl MetricReport {
    pub fn all_pass(&self) -> bool {
        self.a1_symmetric && self.a1_positive && self.a2_small && self.a3_identity_at_origin
    }
}

/// Measure (A1)–(A3) with divided-difference seminorms up to order 2m+1.
pub fn validate_metric(metric: &MetricField, order: FractionalOrder, delta: f64) -> MetricReport {
    let (lambda_min, lambda_max) = metric.eigen_bounds();
    let grid = metric.grid();
    let origin_ok = {
        let i = 0usize; // grid point 0 is the origin
        match grid.dimension() {
            1 => (metric.comps[0][i] - 1.0).abs() <= 1e-14,
            _ => {
                (metric.comps[0][i] - 1.0).abs() <= 1e-14
                    && metric.comps[1][i].abs() <= 1e-14
                    && metric.comps[2][i].abs() <= 1e-14
                    && (metric.comps[3][i] - 1.0).abs() <= 1e-14
            }
        }
    };
    let max_order = 2 * order.m + 1;
    let mut seminorms = Vec::with_capacity(max_order);
    for ord in 1..=max_order {
        let mut worst = 0.0f64;
        for comp in &metric.comps {
            worst = worst.max(divided_difference_seminorm(grid, comp, ord));
        }
        seminorms.push(worst);
    }
    let a2_value = seminorms.first().copied().unwrap_or(0.0)
        + seminorms.last().copied().unwrap_or(0.0);
    MetricReport {
        a1_symmetric: metric.is_symmetric(),
        a1_positive: lambda_min > 0.0,
        lambda_min,
        lambda_max,
        a3_identity_at_origin: origin_ok,
        seminorms,
        a2_small: a2_value <= delta,
        delta,
    }
}

/// Max over points and axes of |Δ^ord a| / h^ord (periodic forward
/// differences along each axis).
fn divided_difference_seminorm(grid: &PeriodicGrid, samples: &[f64], ord: usize) -> f64 {
    let n = grid.size();
    let h = grid.spacing();
    // binomial coefficients with alternating signs
    let mut coef = vec![1.0f64];
    for _ in 0..ord {
        let mut next = vec![0.0; coef.len() + 1];
        for (i, &c) in coef.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        coef = next;
    }
    let scale = h.powi(ord as i32);
    let mut worst = 0.0f64;
    match grid.dimension() {
        1 => {
            for j in 0..n {
                let d: f64 = coef
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * samples[(j + i) % n])
                    .sum();
                worst = worst.max((d / scale).abs());
            }
        }
        _ => {
            for j1 in 0..n {
                for j2 in 0..n {
                    for axis in 0..2 {
                        let d: f64 = coef
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| {
                                let idx = if axis == 0 {
                                    ((j1 + i) % n) * n + j2
                                } else {
                                    j1 * n + (j2 + i) % n
                                };
                                c * samples[idx]
                            })
                            .sum();
                        worst = worst.max((d / scale).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Discretization scheme for `assemble_operator_with`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    SpectralGalerkin,
    FiniteDifference,
}

/// Dense symmetric PSD discretization of `L = -∇·ã∇` with its full
/// eigendecomposition (ascending eigenvalues, orthonormal eigenvectors).
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: PeriodicGrid,
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as matrix columns, ordered with the
    /// eigenvalues.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(f))
            .as_slice()
            .to_vec()
    }

    /// Σ g(λ_i) ⟨f, φ_i⟩ φ_i
    pub fn spectral_apply(&self, f: &[f64], mut g: impl FnMut(f64) -> f64) -> Vec<f64> {
        let fv = DVector::from_column_slice(f);
        let mut coeffs = self.eigenvectors.transpose() * &fv;
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c *= g(self.eigenvalues[i]);
        }
        (&self.eigenvectors * coeffs).as_slice().to_vec()
    }

    pub fn symmetry_residual(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn reconstruction_residual(&self) -> f64 {
        let lam = DMatrix::from_diagonal(&DVector::from_row_slice(&self.eigenvalues));
        let rec = &self.eigenvectors * lam * self.eigenvectors.transpose();
        (&rec - &self.matrix).amax()
    }
}

/// One-dimensional real Fourier eigenbasis of -d²/dx² as (eigenvalue,
/// vector) pairs, ascending.
fn fourier_eigenbasis_1d(grid: &PeriodicGrid) -> Vec<(f64, Vec<f64>)> {
    let n = grid.size();
    let mut basis = Vec::with_capacity(n);
    let norm0 = 1.0 / (n as f64).sqrt();
    basis.push((0.0, vec![norm0; n]));
    let pair_norm = (2.0 / n as f64).sqrt();
    for k in 1..n / 2 {
        let xi = grid.xi(k as i64);
        let lam = xi * xi;
        let cos_v: Vec<f64> = (0..n)
            .map(|j| (xi * j as f64 * grid.spacing()).cos() * pair_norm)
            .collect();
        let sin_v: Vec<f64> = (0..n)
            .map(|j| (xi * j as f64 * grid.spacing()).sin() * pair_norm)
            .collect();
        basis.push((lam, cos_v));
        basis.push((lam, sin_v));
    }
    let xi = grid.xi((n / 2) as i64);
    let nyq: Vec<f64> = (0..n)
        .map(|j| if j % 2 == 0 { norm0 } else { -norm0 })
        .collect();
    basis.push((xi * xi, nyq));
    basis
}

/// Assemble with the default (spectral-Galerkin) scheme.
pub fn assemble_operator(metric: &MetricField) -> Result<DiscreteOperator> {
    assemble_operator_with(metric, Discretization::SpectralGalerkin)
}

pub fn assemble_operator_with(
    metric: &MetricField,
    scheme: Discretization,
) -> Result<DiscreteOperator> {
    let grid = metric.grid().clone();
    let np = grid.total_points();
    if np > MAX_DENSE {
        return Err(Error::invalid(format!(
            "dense eigendecomposition capped at {MAX_DENSE} unknowns"
        )));
    }
    if !metric.is_symmetric() {
        return Err(Error::MetricViolation("metric is not symmetric".into()));
    }
    let (lo, _) = metric.eigen_bounds();
    if lo <= 0.0 {
        return Err(Error::MetricViolation(format!(
            "metric not uniformly positive definite (λ_min = {lo})"
        )));
    }
    if metric.is_identity() && scheme == Discretization::SpectralGalerkin {
        // exact Fourier diagonalization
        let (eigenvalues, eigenvectors) = match grid.dimension() {
            1 => {
                let basis = fourier_eigenbasis_1d(&grid);
                let vals: Vec<f64> = basis.iter().map(|(l, _)| *l).collect();
                let mut q = DMatrix::zeros(np, np);
                for (c, (_, v)) in basis.iter().enumerate() {
                    for (r, &x) in v.iter().enumerate() {
                        q[(r, c)] = x;
                    }
                }
                (vals, q)
            }
            _ => {
                let basis = fourier_eigenbasis_1d(&grid);
                let n = grid.size();
                let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(np);
                for i1 in 0..n {
                    for i2 in 0..n {
                        pairs.push((basis[i1].0 + basis[i2].0, i1, i2));
                    }
                }
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut q = DMatrix::zeros(np, np);
                let mut vals = Vec::with_capacity(np);
                for (c, &(lam, i1, i2)) in pairs.iter().enumerate() {
                    vals.push(lam);
                    for j1 in 0..n {
                        for j2 in 0..n {
                            q[(j1 * n + j2, c)] = basis[i1].1[j1] * basis[i2].1[j2];
                        }
                    }
                }
                (vals, q)
            }
        };
        let lam = DMatrix::from_diagonal(&DVector::from_row_slice(&eigenvalues));
        let matrix = &eigenvectors * lam * eigenvectors.transpose();
        return Ok(DiscreteOperator {
            grid,
            matrix,
            eigenvalues,
            eigenvectors,
        });
    }
    let matrix = match scheme {
        Discretization::SpectralGalerkin => galerkin_matrix(metric)?,
        Discretization::FiniteDifference => fd_matrix(metric),
    };
    // symmetrize away rounding noise before the eigensolve
    let matrix = 0.5 * (&matrix + matrix.transpose());
    let eig = nalgebra::SymmetricEigen::new(matrix.clone());
    let mut order_idx: Vec<usize> = (0..np).collect();
    order_idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut eigenvalues = Vec::with_capacity(np);
    let mut eigenvectors = DMatrix::zeros(np, np);
    for (c, &i) in order_idx.iter().enumerate() {
        let mut lam = eig.eigenvalues[i];
        if lam < -1e-8 * scale {
            return Err(Error::SingularSystem(format!(
                "assembled operator not PSD (λ = {lam})"
            )));
        }
        if lam.abs() <= 1e-10 * scale {
            // snap the numerical kernel (constant mode, and Nyquist under
            // spectral Galerkin) to exactly zero so functional calculus
            // treats it uniformly
            lam = 0.0;
        }
        eigenvalues.push(lam);
        eigenvectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(DiscreteOperator {
        grid,
        matrix,
        eigenvalues,
        eigenvectors,
    })
}

/// Spectral derivative matrix along one axis: column j is the derivative of
/// the j-th nodal indicator's trigonometric interpolant.
fn derivative_matrix(grid: &PeriodicGrid, axis: usize) -> Result<DMatrix<f64>> {
    let np = grid.total_points();
    let mut d = DMatrix::zeros(np, np);
    let mut multi = vec![0usize; grid.dimension()];
    multi[axis] = 1;
    for j in 0..np {
        let mut e = vec![0.0; np];
        e[j] = 1.0;
        let f = SpectralField::from_values(grid.clone(), e)?;
        let df = f.tangential_derivative(&multi)?;
        for (i, &v) in df.values().iter().enumerate() {
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

/// `L = Σ_{p,q} D_p^T diag(ã_{pq}) D_q` with a quadrature weight of the grid
/// spacing absorbed (the operator acts on values, so weights cancel).
fn galerkin_matrix(metric: &MetricField) -> Result<DMatrix<f64>> {
    let grid = metric.grid();
    let n = grid.dimension();
    let np = grid.total_points();
    let mut l = DMatrix::zeros(np, np);
    let comp = |p: usize, q: usize| -> &Vec<f64> {
        match n {
            1 => &metric.comps[0],
            _ => &metric.comps[p * 2 + q],
        }
    };
    let ds: Vec<DMatrix<f64>> = (0..n)
        .map(|axis| derivative_matrix(grid, axis))
        .collect::<Result<_>>()?;
    for p in 0..n {
        for q in 0..n {
            let a = DMatrix::from_diagonal(&DVector::from_row_slice(comp(p, q)));
            l += ds[p].transpose() * a * &ds[q];
        }
    }
    Ok(l)
}

/// Conservative second-order finite differences (diagonal coefficients only
/// in n = 2).
fn fd_matrix(metric: &MetricField) -> DMatrix<f64> {
    let grid = metric.grid();
    let n = grid.size();
    let h2 = grid.spacing() * grid.spacing();
    let np = grid.total_points();
    let mut l = DMatrix::zeros(np, np);
    match grid.dimension() {
        1 => {
            let a = &metric.comps[0];
            for j in 0..n {
                let ap = 0.5 * (a[j] + a[(j + 1) % n]);
                let am = 0.5 * (a[j] + a[(j + n - 1) % n]);
                l[(j, j)] += (ap + am) / h2;
                l[(j, (j + 1) % n)] -= ap / h2;
                l[(j, (j + n - 1) % n)] -= am / h2;
            }
        }
        _ => {
            let a11 = &metric.comps[0];
            let a22 = &metric.comps[3];
            let idx = |i: usize, j: usize| (i % n) * n + (j % n);
            for i in 0..n {
                for j in 0..n {
                    let c = idx(i, j);
                    let ap = 0.5 * (a11[c] + a11[idx(i + 1, j)]);
                    let am = 0.5 * (a11[c] + a11[idx(i + n - 1, j)]);
                    l[(c, c)] += (ap + am) / h2;
                    l[(c, idx(i + 1, j))] -= ap / h2;
                    l[(c, idx(i + n - 1, j))] -= am / h2;
                    let bp = 0.5 * (a22[c] + a22[idx(i, j + 1)]);
                    let bm = 0.5 * (a22[c] + a22[idx(i, j + n - 1)]);
                    l[(c, c)] += (bp + bm) / h2;
                    l[(c, idx(i, j + 1))] -= bp / h2;
                    l[(c, idx(i, j + n - 1))] -= bm / h2;
                }
            }
        }
    }
    l
}

/// `L^γ f` through the eigendecomposition (γ > 0; the kernel maps to 0).
pub fn fractional_power_apply(op: &DiscreteOperator, gamma_pow: f64, f: &[f64]) -> Result<Vec<f64>> {
    if gamma_pow <= 0.0 {
        return Err(Error::invalid("fractional power requires γ > 0"));
    }
    Ok(op.spectral_apply(f, |lam| if lam == 0.0 { 0.0 } else { lam.powf(gamma_pow) }))
}

/// `e^{-tL} f`.
pub fn heat_semigroup_apply(op: &DiscreteOperator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::invalid("heat semigroup requires t ≥ 0"));
    }
    Ok(op.spectral_apply(f, |lam| (-t * lam).exp()))
}

/// Per-eigenvalue extension profile
/// `c_γ y^{2γ} ∫₀^∞ e^{-tλ} e^{-y²/4t} dt/t^{1+γ}`, with
/// `c_γ = 1/(4^γ Γ(γ))` so λ = 0 maps to 1 exactly; equals
/// `φ_γ(√λ y)/φ_γ(0)` analytically.
pub(crate) fn heat_profile(lambda: f64, gamma_ord: f64, y: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(1.0);
    }
    // t = e^τ, integrand exp(-λe^τ - (y²/4)e^{-τ} - γτ)
    let integral = tanh_sinh(
        |tau| (-lambda * tau.exp() - 0.25 * y * y * (-tau).exp() - gamma_ord * tau).exp(),
        -30.0,
        30.0,
        1e-12,
    );
    let value = y.powf(2.0 * gamma_ord) / (4.0f64.powf(gamma_ord) * special::gamma(gamma_ord))
        * integral;
    if !value.is_finite() {
        return Err(Error::QuadratureFailure("heat profile quadrature".into()));
    }
    Ok(value)
}

/// Heat-quadrature extension `u(·, y)` of Dirichlet data `f`.
pub fn heat_extension(
    op: &DiscreteOperator,
    order: FractionalOrder,
    f: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    heat_derived_field(op, order, f, 0, y)
}

/// The k-th derived heat field `W_k(·, y)`: per mode
/// `λ^k φ_{γ-k}(√λ y)/φ_{γ-k}(0)` by quadrature.
pub fn heat_derived_field(
    op: &DiscreteOperator,
    order: FractionalOrder,
    f: &[f64],
    k: usize,
    y: f64,
) -> Result<Vec<f64>> {
    if y <= 0.0 {
        return Err(Error::invalid("extension height must be positive"));
    }
    if k > order.m {
        return Err(Error::invalid("level exceeds m"));
    }
    let nu = order.gamma - k as f64;
    let mut err = None;
    let out = op.spectral_apply(f, |lam| {
        if lam == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        match heat_profile(lam, nu, y) {
            Ok(p) => lam.powi(k as i32) * p,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Alternative representation
/// `(1/Γ(γ)) ∫₀^∞ e^{-tL} L^γ f · e^{-y²/4t} dt/t^{1-γ}` (λ = 0 maps to the
/// common limit 1).
pub fn heat_extension_alt(
    op: &DiscreteOperator,
    order: FractionalOrder,
    f: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    if y <= 0.0 {
        return Err(Error::invalid("extension height must be positive"));
    }
    let g = order.gamma;
    let mut err = None;
    let out = op.spectral_apply(f, |lam| {
        if lam == 0.0 {
            return 1.0;
        }
        let integral = tanh_sinh(
            |tau| (-lam * tau.exp() - 0.25 * y * y * (-tau).exp() + g * tau).exp(),
            -30.0,
            30.0,
            1e-12,
        );
        let v = lam.powf(g) / special::gamma(g) * integral;
        if !v.is_finite() {
            err = Some(Error::QuadratureFailure("alt heat representation".into()));
        }
        v
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Weighted Neumann trace of the heat route:
/// `lim y^b ∂_y W_m`, Richardson-extrapolated from y ∈ {0.01, 0.02, 0.04}
/// and normalized to return `L^γ f`.
pub fn heat_extension_neumann(
    op: &DiscreteOperator,
    order: FractionalOrder,
    f: &[f64],
) -> Result<Vec<f64>> {
    let s = order.s;
    let cs = 1.0 / (4.0f64.powf(s) * special::gamma(s));
    let norm = -(2.0f64.powf(1.0 - 2.0 * s)) * special::gamma(1.0 - s) / special::gamma(s);
    // error expansion exponents of y^b ∂_y W_m: combinations a(2-2s) + 2b;
    // eliminate the three smallest (deduplicated)
    let p = 2.0 - 2.0 * s;
    let mut exps: Vec<f64> = vec![p, 2.0 * p, 3.0 * p, 2.0, 2.0 + p, 4.0];
    exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    exps.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let exps = [exps[0], exps[1], exps[2]];
    let probes = [0.005f64, 0.01, 0.02, 0.04];
    let out = op.spectral_apply(f, |lam| {
        if lam == 0.0 {
            return 0.0;
        }
        let mut v = [0.0f64; 4];
        for (i, &y) in probes.iter().enumerate() {
            // y^b ∂_y W_m = λ^m c_s ∫ e^{-λt}(2s - y²/2t) e^{-y²/4t} dt/t^{1+s}
            let integral = tanh_sinh(
                |tau: f64| {
                    let t = tau.exp();
                    (-lam * t - 0.25 * y * y / t - s * tau).exp() * (2.0 * s - 0.5 * y * y / t)
                },
                -30.0,
                30.0,
                1e-12,
            );
            v[i] = lam.powi(order.m as i32) * cs * integral;
        }
        // sequential Richardson elimination, probes ascending with ratio 2
        let mut t: Vec<f64> = v.to_vec();
        for &e in &exps {
            let r = 2.0f64.powf(e);
            t = t.windows(2).map(|w| (r * w[0] - w[1]) / (r - 1.0)).collect();
        }
        t[0] / norm
    });
    Ok(out)
}

/// Values → spectral coefficients convenience for cross-module checks.
pub fn field_from_values(grid: &PeriodicGrid, values: &[f64]) -> Result<SpectralField> {
    SpectralField::from_values(grid.clone(), values.to_vec())
}

#[allow(dead_code)]
pub(crate) fn coeffs_to_values(grid: &PeriodicGrid, coeffs: Vec<Complex64>) -> Result<Vec<f64>> {
    Ok(SpectralField::from_coefficients(grid.clone(), coeffs)?
        .values()
        .to_vec())
}
