//! Quadrature kernels used throughout the crate: tanh-sinh (double
//! exponential) rules for finite intervals with endpoint singularities, and
//! plain trapezoid sums for analytic integrands that decay exponentially on
//! the line (where the trapezoid rule itself converges exponentially).

/// Tanh-sinh quadrature of `f` over the finite interval `(a, b)`.
///
/// Handles integrable endpoint singularities such as `x^α`, `α > -1`.
/// Levels are doubled until two *consecutive* refinements agree to `tol`
/// (relative) or the maximum level is reached; a minimum depth guards
/// against spurious agreement when coarse levels straddle a narrow
/// interior peak.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // reconstruct the abscissa from the nearer endpoint so nodes never
    // collapse onto a (possibly singular) endpoint by rounding
    tanh_sinh_with(
        |_, da, db| {
            if da <= db {
                f(a + da)
            } else {
                f(b - db)
            }
        },
        a,
        b,
        tol,
    )
}

/// Tanh-sinh quadrature where the integrand also receives its distances to
/// the endpoints, `(x, x-a, b-x)`, both computed without cancellation.
/// Integrands singular at an endpoint should use the distance argument to
/// avoid the rounding plateau of `x` itself near `a` or `b`.
pub fn tanh_sinh_with<F: Fn(f64, f64, f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    // node parameter u: x = c + d*tanh(s), s = (π/2)sinh u;
    // 1∓tanh(s) = 2/(e^{±2s}+1) evaluated stably
    let eval = |u: f64| -> (f64, f64, f64, f64) {
        let s = std::f64::consts::FRAC_PI_2 * u.sinh();
        let ch = s.cosh();
        let w = std::f64::consts::FRAC_PI_2 * u.cosh() / (ch * ch);
        let da = d * 2.0 / ((-2.0 * s).exp() + 1.0);
        let db = d * 2.0 / ((2.0 * s).exp() + 1.0);
        (c + d * s.tanh(), da, db, w)
    };
    let u_max = 4.0;
    let mut h = 1.0;
    let (x0, da0, db0, w0) = eval(0.0);
    let mut sum = f(x0, da0, db0) * w0;
    let mut k = 1;
    while (k as f64) * h <= u_max {
        let u = k as f64 * h;
        let (xp, dap, dbp, wp) = eval(u);
        let (xm, dam, dbm, wm) = eval(-u);
        if dbp > 0.0 {
            sum += f(xp, dap, dbp) * wp;
        }
        if dam > 0.0 {
            sum += f(xm, dam, dbm) * wm;
        }
        k += 1;
    }
    let mut estimate = sum * h * d;
    let mut agreed = 0u32;
    for level in 0..11 {
        // refine: add midpoints at half the step
        h *= 0.5;
        let mut add = 0.0;
        let mut j = 1;
        while (j as f64) * h <= u_max {
            let u = j as f64 * h;
            let (xp, dap, dbp, wp) = eval(u);
            let (xm, dam, dbm, wm) = eval(-u);
            if dbp > 0.0 {
                add += f(xp, dap, dbp) * wp;
            }
            if dam > 0.0 {
                add += f(xm, dam, dbm) * wm;
            }
            j += 2; // only the new (odd) nodes
        }
        sum += add;
        let refined = sum * h * d;
        let err = (refined - estimate).abs();
        estimate = refined;
        if err <= tol * estimate.abs().max(1e-300) {
            agreed += 1;
            if agreed >= 2 && level >= 4 {
                break;
            }
        } else {
            agreed = 0;
        }
    }
    estimate
}

/// Trapezoid sum of an analytic integrand over the whole line, centered at
/// `center` with step `h`. Summation stops on each side once terms fall below
/// `cutoff` times the running peak. Exponentially accurate for integrands
/// decaying at least exponentially in both directions.
pub fn trapezoid_line<F: Fn(f64) -> f64>(f: F, center: f64, h: f64, cutoff: f64) -> f64 {
    let mut sum = f(center);
    let mut peak = sum.abs();
    for dir in [-1.0f64, 1.0] {
        let mut k = 1u64;
        let mut below = 0u32;
        loop {
            let v = f(center + dir * h * k as f64);
            sum += v;
            peak = peak.max(v.abs());
            if v.abs() < cutoff * peak.max(1e-300) {
                below += 1;
                if below >= 3 {
                    break;
                }
            } else {
                below = 0;
            }
            k += 1;
            if k > 2_000_000 {
                break;
            }
        }
    }
    sum * h
}

/// Cumulative trapezoid of samples `y` on nodes `x` (same length), starting
/// at 0 at the first node.
pub fn cumulative_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..y.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
        out.push(acc);
    }
    out
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Trapezoid integral of samples `y` on nodes `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..y.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tanh_sinh_polynomial() {
        let v = tanh_sinh(|x| x * x, 0.0, 1.0, 1e-13);
        assert_relative_eq!(v, 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        // accuracy floor ~1e-8: abscissas within rounding distance of the
        // singular endpoint evaluate on a plateau
        let v = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-13);
        assert_relative_eq!(v, 2.0, max_relative = 2e-8);
        // ∫_0^π sin(θ)^{-0.7} dθ = √π Γ(0.15)/Γ(0.65) (Beta-function value);
        // sin θ evaluated through the endpoint distances (sin(π-x) = sin x)
        let v2 = tanh_sinh_with(
            |_, da, db| da.min(db).sin().powf(-0.7),
            0.0,
            std::f64::consts::PI,
            1e-13,
        );
        let exact = std::f64::consts::PI.sqrt() * crate::special::gamma(0.15)
            / crate::special::gamma(0.65);
        assert_relative_eq!(v2, exact, max_relative = 1e-9);
    }

    #[test]
    fn trapezoid_line_gaussian() {
        let v = trapezoid_line(|x| (-x * x).exp(), 0.0, 0.25, 1e-18);
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn cumulative_matches_total() {
        let x: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|&t| t.cos()).collect();
        let c = cumulative_trapezoid(&x, &y);
        assert_relative_eq!(c[100], trapezoid(&x, &y), max_relative = 1e-14);
        assert_relative_eq!(c[100], 1.0f64.sin(), max_relative = 1e-4);
    }
}
