//! Convolution of two tempered power-law envelopes over the exterior of the
//! unit balls around both endpoints, and the trend classifier that decides
//! whether the convolution stays dominated by a single envelope as the
//! separation grows.
//!
//! For endpoints at distance `r > 2` and `g(u) = phi(u) u^{-alpha-dim}` the
//! integral is
//!
//! ```text
//! I(r) = integral over { |z-x| > 1, |z-y| > 1 } of g(|z-x|) g(|z-y|) dz
//! ```
//!
//! computed in the rescaled form `I(r) / g(r)` so deep tempering (where both
//! `I` and `g` underflow) stays representable. The integrand is symmetric
//! under reflection across the bisector plane, so only the half closer to
//! `x` is integrated and doubled.

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::profile::PhiProfile;
use crate::quad::{integrate_piecewise, integrate_to_inf, QuadratureSpec};
use crate::scalar::Real;

/// Rescaled convolution value at one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionResult<F: Real> {
    /// `I(r) / [phi(r) r^{-alpha-dim}]`.
    pub value_ratio: F,
    /// Portion with `|z - x| <= r/2` (both kernels at moderate range).
    pub near_part: F,
    /// Portion with `|z - x| > r/2` on the x-side, doubled like the rest.
    pub far_part: F,
    pub error_bound: F,
    pub fn_evals: usize,
}

fn validate_common<F: Real>(alpha: F, dim: usize, lag: F) -> Result<()> {
    if !(alpha > F::zero()) || !(alpha < F::of(2.0)) {
        return Err(Error::InvalidParam(format!("alpha {alpha} must lie in (0, 2)")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::Unsupported(format!("dimension {dim} not in 1..=3")));
    }
    if !(lag > F::of(2.0)) {
        return Err(Error::InvalidParam(format!(
            "separation {lag} must exceed 2 (the exterior balls must not cover the segment)"
        )));
    }
    Ok(())
}

/// Computes `I(r)/g(r)` for the profile-tempered envelope at separation
/// `lag`, splitting near and far contributions at `|z - x| = r/2`.
pub fn convolution_ratio<F: Real>(
    profile: &PhiProfile<F>,
    alpha: F,
    dim: usize,
    lag: F,
    spec: &QuadratureSpec<F>,
) -> Result<ConvolutionResult<F>> {
    validate_common(alpha, dim, lag)?;
    let r = lag;
    let power = alpha + F::of_usize(dim);
    let ln_phi_r = profile.log_eval(r);
    let ln_r = r.ln();

    // ln of w = g(rho_x) g(rho_y) / g(r), the rescaled integrand density.
    let ln_w = |rho_x: F, rho_y: F| {
        profile.log_eval(rho_x) + profile.log_eval(rho_y) - ln_phi_r
            - power * (rho_x.ln() + rho_y.ln() - ln_r)
    };

    let half = F::of(0.5);
    let two = F::of(2.0);
    let mid = r * half;

    // Radii where the profile itself has kinks, in both distance coordinates.
    let kinks = profile.kink_radii();
    let mut rho_breaks: Vec<F> = kinks.clone();
    for &k in &kinks {
        rho_breaks.push(r - k);
        rho_breaks.push(r + k);
    }
    // Unit shells help the first adaptive pass along the segment.
    let mut j = F::of(2.0);
    while j < r + two {
        rho_breaks.push(j);
        j += F::one();
    }

    let mut near = F::zero();
    let mut far = F::zero();
    let mut err = F::zero();
    let mut evals = 0usize;

    if dim == 1 {
        // Branch along the segment: rho in (1, r/2], partner at r - rho.
        let q = integrate_piecewise(
            |rho: F| ln_w(rho, r - rho).exp(),
            F::one(),
            mid,
            &rho_breaks,
            spec,
        )?;
        near += q.value;
        err += q.error_bound;
        evals += q.fn_evals;

        // Branch behind x: rho in (1, inf), partner at r + rho. Using
        // phi(r + rho) <= 1 and (r + rho)^-power <= rho^-power, the
        // integrand is at most phi(rho) rho^{-2 power} r^power / phi(r).
        let tail = profile
            .decay_tail(power + power)?
            .scale_ln(power * ln_r - ln_phi_r);
        let q = integrate_to_inf(
            |rho: F| ln_w(rho, r + rho).exp(),
            F::one(),
            &tail,
            &rho_breaks,
            spec,
        )?;
        // The behind-x branch has rho spanning both sides of r/2; it is all
        // "far" in the sense of never bringing the two kernels close.
        far += q.value;
        err += q.error_bound;
        evals += q.fn_evals;

        return Ok(ConvolutionResult {
            value_ratio: two * (near + far),
            near_part: two * near,
            far_part: two * far,
            error_bound: two * err,
            fn_evals: evals,
        });
    }

    // dim 2 or 3: polar coordinates centered at x with axis toward y.
    // The half-space closer to x is cos(theta) <= r / (2 rho); the partner
    // distance is ell(rho, theta) = sqrt(rho^2 + r^2 - 2 rho r cos theta).
    let ang_coef: F = match dim {
        2 => two,
        _ => F::of(2.0 * std::f64::consts::PI),
    };
    let pi = F::of(std::f64::consts::PI);

    let angular = |rho: F| -> Result<(F, usize)> {
        let cos_cap = (r / (two * rho)).min(F::one());
        let theta_min = cos_cap.acos();
        let ell = |theta: F| {
            let c = theta.cos();
            (rho * rho + r * r - two * rho * r * c).sqrt().max(F::of(1e-300))
        };
        // Breakpoints where the partner distance crosses a profile kink.
        let mut tb: Vec<F> = Vec::new();
        for &k in &kinks {
            let c = (rho * rho + r * r - k * k) / (two * rho * r);
            if c.abs() < F::one() {
                tb.push(c.acos());
            }
        }
        let q = integrate_piecewise(
            |theta: F| {
                let l = ell(theta);
                let w = ln_w(rho, l).exp();
                if dim == 3 {
                    w * theta.sin()
                } else {
                    w
                }
            },
            theta_min,
            pi,
            &tb,
            spec,
        )?;
        Ok((q.value, q.fn_evals))
    };

    // Outer radial integrand including the surface factor rho^{dim-1}.
    let evals_cell = std::cell::Cell::new(0usize);
    let outer = |rho: F| -> F {
        let (th, ev) = match angular(rho) {
            Ok(v) => v,
            Err(_) => (F::nan(), 0),
        };
        evals_cell.set(evals_cell.get() + ev);
        let mut surf = F::one();
        for _ in 0..dim - 1 {
            surf *= rho;
        }
        ang_coef * surf * th
    };

    // Near: rho in (1, r/2]. Far: rho in (r/2, inf). Past 2r the partner
    // distance is at least rho/2, giving the integrand bound
    //   ang_coef * pi * phi(rho) rho^{-power + dim - 1} (2r)^{power} / phi(r).
    let q = integrate_piecewise(&outer, F::one(), mid, &rho_breaks, spec)?;
    near = q.value;
    err += q.error_bound;

    let far_start = two * r;
    let q = integrate_piecewise(&outer, mid, far_start, &rho_breaks, spec)?;
    far = q.value;
    err += q.error_bound;

    let ln_tail_coef = (ang_coef * pi).ln() - ln_phi_r + power * (two * r).ln();
    let tail_power = two * power - F::of_usize(dim - 1);
    let tail = profile.decay_tail(tail_power)?.scale_ln(ln_tail_coef);
    let q = integrate_to_inf(&outer, far_start, &tail, &[], spec)?;
    far += q.value;
    err += q.error_bound;

    Ok(ConvolutionResult {
        value_ratio: two * (near + far),
        near_part: two * near,
        far_part: two * far,
        error_bound: two * err,
        fn_evals: evals + evals_cell.get(),
    })
}

/// Qualitative behavior of `I(r)/g(r)` over increasing separations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioTrend<F: Real> {
    /// Ratios settle; `level` is the last observed value.
    Converged { level: F },
    /// Ratios grow like `slope * ln(lag)` with a sustained slope.
    LogGrowth { slope: F, r_squared: F },
    /// Ratios grew by `growth` from first to last lag (>= 10x or overflow).
    Divergent { growth: F },
    /// Not enough structure to call.
    Undetermined,
}

/// Classifies a ratio sequence measured at increasing lags.
///
/// Divergence is a 10x end-to-end rise (or non-finite values). Logarithmic
/// growth must sustain its slope across both halves of the lag range;
/// a slope that decays between halves is treated as convergence toward a
/// finite level.
pub fn classify_ratio_trend<F: Real>(lags: &[F], ratios: &[F]) -> RatioTrend<F> {
    if lags.len() != ratios.len() || lags.len() < 4 {
        return RatioTrend::Undetermined;
    }
    if ratios.iter().any(|v| !v.is_finite()) {
        return RatioTrend::Divergent { growth: F::infinity() };
    }
    let first = ratios[0];
    let last = ratios[ratios.len() - 1];
    if !(first > F::zero()) {
        return RatioTrend::Undetermined;
    }
    let growth = last / first;
    if growth >= F::of(10.0) {
        return RatioTrend::Divergent { growth };
    }

    let half_at = ratios.len() / 2;
    let tail_vals = &ratios[half_at..];
    let t_max = tail_vals.iter().copied().fold(F::neg_infinity(), F::max);
    let t_min = tail_vals.iter().copied().fold(F::infinity(), F::min);
    let t_mean = tail_vals.iter().copied().sum::<F>() / F::of_usize(tail_vals.len());
    let tail_variation = (t_max - t_min) / t_mean.abs().max(F::of(1e-300));
    if tail_variation < F::of(0.05) {
        return RatioTrend::Converged { level: last };
    }

    let slack = F::one() - F::of(1e-9);
    let increasing = ratios.windows(2).all(|w| w[1] >= w[0] * slack);
    if increasing {
        let ln_lags: Vec<F> = lags.iter().map(|l| l.ln()).collect();
        let fit_full = linear_fit(&ln_lags, ratios);
        let fit_lo = linear_fit(&ln_lags[..=half_at], &ratios[..=half_at]);
        let fit_hi = linear_fit(&ln_lags[half_at..], &ratios[half_at..]);
        if let (Some((_, b, r2)), Some((_, b1, _)), Some((_, b2, _))) = (fit_full, fit_lo, fit_hi) {
            let mean = ratios.iter().copied().sum::<F>() / F::of_usize(ratios.len());
            let rise_frac = b * (ln_lags[ln_lags.len() - 1] - ln_lags[0]) / mean;
            if b > F::zero()
                && r2 >= F::of(0.9)
                && rise_frac >= F::of(0.25)
                && b2 >= F::of(0.9) * b1
            {
                return RatioTrend::LogGrowth { slope: b, r_squared: r2 };
            }
            if b2 <= F::of(0.8) * b1 && tail_variation < F::of(0.2) {
                return RatioTrend::Converged { level: last };
            }
        }
        return RatioTrend::Undetermined;
    }
    if tail_variation < F::of(0.2) {
        RatioTrend::Converged { level: last }
    } else {
        RatioTrend::Undetermined
    }
}

/// Axis-aligned shell cell used to partition the convolution region around
/// the far endpoint: distance to `y` in `[n-p-1, n-p)`, distance to `x` in
/// `[p+k, p+k+1)`, restricted to the half closer to `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShellCell {
    pub p: usize,
    pub k: usize,
}

impl ShellCell {
    /// Whether a point at distances `(dist_x, dist_y)` from the endpoints
    /// lies in this cell for separation `n`.
    pub fn contains<F: Real>(&self, n: usize, dist_x: F, dist_y: F) -> bool {
        let nf = F::of_usize(n);
        let pf = F::of_usize(self.p);
        let base = F::of_usize(self.p + self.k);
        dist_y >= nf - pf - F::one()
            && dist_y < nf - pf
            && dist_x >= base
            && dist_x < base + F::one()
            && dist_x < dist_y
    }
}

/// Cells `(p, k)` for even integer separation `n >= 4`: `1 <= p < n/2` and
/// `0 <= k <= n - 2p - 1`. Together they cover the part of the closer-to-x
/// half with `dist_y < n - 1`.
pub fn shell_cells(n: usize) -> Result<Vec<ShellCell>> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParam(format!(
            "shell decomposition needs an even separation >= 4, got {n}"
        )));
    }
    let mut cells = Vec::new();
    for p in 1..n / 2 {
        for k in 0..=(n - 2 * p - 1) {
            cells.push(ShellCell { p, k });
        }
    }
    Ok(cells)
}
