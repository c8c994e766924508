//! Truncated generator applied to smooth compactly supported probes, and
//! the small-truncation convergence study.
//!
//! The truncated generator is
//!
//! ```text
//! A_eps u(x) = integral over |y - x| > eps of f(x, y) [u(y) - u(x)] dy
//! ```
//!
//! For kernels with symmetric increments the integrand is paired as
//! `f(x, x + h) [u(x + h) + u(x - h) - 2 u(x)] / 2`, which cancels the
//! first-order term and keeps the integral stable as `eps` shrinks. Without
//! increment symmetry the plain form is used, which only converges (in
//! `eps`) for `alpha < 1`; larger `alpha` is rejected.

use crate::error::{Error, Result};
use crate::kernel::{dist, tail_mass, JumpKernel};
use crate::quad::{integrate, integrate_piecewise, QuadratureSpec};
use crate::scalar::Real;

/// Smooth compactly supported probe: the standard mollifier bump, equal to
/// 1 at the center and vanishing to all orders at `|p - center| = radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction<F: Real> {
    pub center: [F; 3],
    pub radius: F,
}

impl<F: Real> TestFunction<F> {
    pub fn new(center: [F; 3], radius: F) -> Result<Self> {
        if !(radius > F::zero()) || !radius.is_finite() {
            return Err(Error::InvalidParam(format!(
                "probe radius {radius} must be positive and finite"
            )));
        }
        Ok(TestFunction { center, radius })
    }

    pub fn eval(&self, p: &[F; 3]) -> F {
        let r = dist(p, &self.center) / self.radius;
        if r < F::one() {
            (F::one() - (F::one() - r * r).recip()).exp()
        } else {
            F::zero()
        }
    }
}

/// Average of `u(x + rho u) - u(x)` over the unit sphere directions, with
/// the kernel weight folded in; `pair` selects the symmetrized increment.
fn shell_increment<F: Real>(
    kernel: &JumpKernel<F>,
    fun: &TestFunction<F>,
    x: &[F; 3],
    rho: F,
    pair: bool,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let u_x = fun.eval(x);
    let half = F::of(0.5);
    let weighted = |u: [F; 3]| {
        let y = [x[0] + rho * u[0], x[1] + rho * u[1], x[2] + rho * u[2]];
        let fy = kernel.eval(x, &y);
        if pair {
            let y_op = [x[0] - rho * u[0], x[1] - rho * u[1], x[2] - rho * u[2]];
            fy * (fun.eval(&y) + fun.eval(&y_op) - u_x - u_x) * half
        } else {
            fy * (fun.eval(&y) - u_x)
        }
    };
    match kernel.params.dim {
        1 => {
            Ok(weighted([F::one(), F::zero(), F::zero()])
                + weighted([-F::one(), F::zero(), F::zero()]))
        }
        2 => {
            let q = integrate(
                |theta: F| weighted([theta.cos(), theta.sin(), F::zero()]),
                F::zero(),
                F::of(2.0 * std::f64::consts::PI),
                spec,
            )?;
            Ok(q.value * rho)
        }
        3 => {
            let q = integrate(
                |theta: F| {
                    let st = theta.sin();
                    let ct = theta.cos();
                    let inner = integrate(
                        |az: F| weighted([st * az.cos(), st * az.sin(), ct]),
                        F::zero(),
                        F::of(2.0 * std::f64::consts::PI),
                        spec,
                    )
                    .map(|r| r.value)
                    .unwrap_or_else(|_| F::nan());
                    inner * st
                },
                F::zero(),
                F::of(std::f64::consts::PI),
                spec,
            )?;
            if !q.value.is_finite() {
                return Err(Error::Domain("sphere quadrature did not converge".into()));
            }
            Ok(q.value * rho * rho)
        }
        d => Err(Error::Unsupported(format!("dimension {d} not in 1..=3"))),
    }
}

/// Applies the truncated generator to the probe at one point.
///
/// Kernels without increment symmetry are rejected for `alpha >= 1`: the
/// plain increment integral then fails to settle as the truncation shrinks,
/// so values at different `eps` would not be comparable.
pub fn generator_apply<F: Real>(
    kernel: &JumpKernel<F>,
    fun: &TestFunction<F>,
    x: &[F; 3],
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let p = &kernel.params;
    let pair = kernel.flags.symmetric_increments;
    if !pair && p.alpha >= F::one() {
        return Err(Error::Unsupported(format!(
            "generator limits need symmetric increments when alpha = {} >= 1",
            p.alpha
        )));
    }
    let eps = p.eps;

    // Past every point of the probe's support only the -u(x) term remains,
    // and that part is exactly -u(x) times the kernel mass outside R_far.
    let r_far = (dist(x, &fun.center) + fun.radius + F::one()).max(eps + eps);

    let mut breaks = vec![F::one()];
    breaks.extend(kernel.phi.kink_radii());
    // Radii where the sphere of directions first touches or last leaves the
    // probe's support; the integrand is smooth there but changes character.
    let dc = dist(x, &fun.center);
    breaks.push((dc - fun.radius).abs());
    breaks.push(dc + fun.radius);

    let finite = integrate_piecewise(
        |rho: F| shell_increment(kernel, fun, x, rho, pair, spec).unwrap_or_else(|_| F::nan()),
        eps,
        r_far,
        &breaks,
        spec,
    )?;
    if !finite.value.is_finite() {
        return Err(Error::Domain(
            "generator shell quadrature did not converge".into(),
        ));
    }
    let tail = tail_mass(kernel, x, r_far, spec)?;
    Ok(finite.value - fun.eval(x) * tail)
}

/// Gaps to a reference truncation and their decay ratios.
#[derive(Debug, Clone)]
pub struct GeneratorConvergence<F: Real> {
    /// Truncation radii, sorted largest first.
    pub eps_values: Vec<F>,
    /// Reference radius the gaps are measured against (smallest / 8).
    pub eps_ref: F,
    /// `sup_x |A_eps u(x) - A_ref u(x)|` per truncation radius.
    pub sup_gaps: Vec<F>,
    /// Consecutive gap ratios; each halving of `eps` should multiply the
    /// gap by about `2^-(2 - alpha)` under increment symmetry.
    pub ratios: Vec<F>,
    pub converged: bool,
}

/// Tolerated worst-case ratio per halving step; genuine convergence rates
/// sit well below it (0.71 at the slowest supported case).
const RATIO_GATE: f64 = 0.8;

/// Evaluates the truncated generator across `eps_values` on the probe
/// points and measures convergence toward a much smaller reference radius.
pub fn generator_convergence<F: Real>(
    kernel: &JumpKernel<F>,
    fun: &TestFunction<F>,
    probes: &[[F; 3]],
    eps_values: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<GeneratorConvergence<F>> {
    if eps_values.len() < 2 {
        return Err(Error::InvalidParam(
            "convergence study needs at least two truncation radii".into(),
        ));
    }
    if probes.is_empty() {
        return Err(Error::InvalidParam("no probe points given".into()));
    }
    let mut eps_sorted = eps_values.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if eps_sorted.windows(2).any(|w| w[0] == w[1]) || !(eps_sorted[eps_sorted.len() - 1] > F::zero())
    {
        return Err(Error::InvalidParam(
            "truncation radii must be positive and distinct".into(),
        ));
    }

    let eps_ref = eps_sorted[eps_sorted.len() - 1] / F::of(8.0);
    let k_ref = kernel.with_eps(eps_ref)?;
    let reference: Vec<F> = probes
        .iter()
        .map(|x| generator_apply(&k_ref, fun, x, spec))
        .collect::<Result<Vec<F>>>()?;

    let mut sup_gaps = Vec::with_capacity(eps_sorted.len());
    for &eps in &eps_sorted {
        let k_eps = kernel.with_eps(eps)?;
        let mut worst = F::zero();
        for (x, &a_ref) in probes.iter().zip(&reference) {
            let a = generator_apply(&k_eps, fun, x, spec)?;
            worst = worst.max((a - a_ref).abs());
        }
        sup_gaps.push(worst);
    }

    let ratios: Vec<F> = sup_gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let converged = sup_gaps.iter().all(|g| g.is_finite())
        && ratios.iter().all(|&r| r <= F::of(RATIO_GATE));
    Ok(GeneratorConvergence {
        eps_values: eps_sorted,
        eps_ref,
        sup_gaps,
        ratios,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelFlags, ModelParams};
    use crate::profile::PhiProfile;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    fn bump() -> TestFunction<f64> {
        TestFunction::new([0.0; 3], 2.0).unwrap()
    }

    #[test]
    fn probe_shape() {
        let b = bump();
        assert_eq!(b.eval(&[0.0; 3]), 1.0);
        assert_eq!(b.eval(&[2.0, 0.0, 0.0]), 0.0);
        assert_eq!(b.eval(&[5.0, 0.0, 0.0]), 0.0);
        let v = b.eval(&[1.0, 0.0, 0.0]);
        assert_relative_eq!(v, (1.0f64 - 1.0 / 0.75).exp(), max_relative = 1e-12);
        assert!(TestFunction::<f64>::new([0.0; 3], 0.0).is_err());
    }

    #[test]
    fn matches_mesh_oracle_in_dimension_one() {
        let k = JumpKernel::saturated(
            ModelParams::new(1.0f64, 1, 1.0, 0.25).unwrap(),
            PhiProfile::ConstantOne,
        )
        .unwrap();
        let b = bump();
        let x = [0.5f64, 0.0, 0.0];
        let got = generator_apply(&k, &b, &x, &spec()).unwrap();

        // Fine midpoint mesh of the pair form out to 400, plus the exact
        // analytic remainder -u(x) * 2 * 400^-1.
        let n = 2_000_000usize;
        let h = (400.0 - 0.25) / n as f64;
        let mut want = 0.0;
        for i in 0..n {
            let rho: f64 = 0.25 + (i as f64 + 0.5) * h;
            let up = b.eval(&[x[0] + rho, 0.0, 0.0]);
            let dn = b.eval(&[x[0] - rho, 0.0, 0.0]);
            want += rho.powi(-2) * (up + dn - 2.0 * b.eval(&x));
        }
        want *= h;
        want -= b.eval(&x) * 2.0 / 400.0;
        assert_relative_eq!(got, want, max_relative = 1e-6);
    }

    #[test]
    fn peak_value_is_negative() {
        for alpha in [0.5f64, 1.0, 1.5] {
            let k = JumpKernel::saturated(
                ModelParams::new(alpha, 1, 1.0, 0.2).unwrap(),
                PhiProfile::ConstantOne,
            )
            .unwrap();
            let v = generator_apply(&k, &bump(), &[0.0; 3], &spec()).unwrap();
            assert!(v < 0.0, "alpha {alpha}: peak value {v}");
        }
    }

    #[test]
    fn pair_and_plain_forms_agree_below_one() {
        let params = ModelParams::new(0.7f64, 1, 1.0, 0.3).unwrap();
        let sym = JumpKernel::saturated(params, PhiProfile::ConstantOne).unwrap();
        let envc = sym.clone();
        let plain = JumpKernel::with_intensity(
            params,
            PhiProfile::ConstantOne,
            Arc::new(move |x: &[f64; 3], y: &[f64; 3]| envc.envelope(dist(x, y))),
            KernelFlags {
                translation_invariant: true,
                symmetric_increments: false,
                symmetric_arguments: true,
            },
        )
        .unwrap();
        let b = bump();
        for x0 in [0.0f64, 0.8, 1.6] {
            let x = [x0, 0.0, 0.0];
            let a = generator_apply(&sym, &b, &x, &spec()).unwrap();
            let c = generator_apply(&plain, &b, &x, &spec()).unwrap();
            assert_relative_eq!(a, c, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn asymmetric_kernel_rejected_at_large_alpha() {
        let params = ModelParams::new(1.2f64, 1, 1.0, 0.3).unwrap();
        let env = JumpKernel::saturated(params, PhiProfile::ConstantOne).unwrap();
        let envc = env.clone();
        let skew = JumpKernel::with_intensity(
            params,
            PhiProfile::ConstantOne,
            Arc::new(move |x: &[f64; 3], y: &[f64; 3]| {
                let w = if y[0] > x[0] { 1.0 } else { 0.5 };
                w * envc.envelope(dist(x, y))
            }),
            KernelFlags {
                translation_invariant: true,
                symmetric_increments: false,
                symmetric_arguments: false,
            },
        )
        .unwrap();
        assert!(matches!(
            generator_apply(&skew, &bump(), &[0.0; 3], &spec()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn truncation_gaps_shrink_at_the_expected_rate() {
        let k = JumpKernel::saturated(
            ModelParams::new(0.5f64, 1, 1.0, 0.4).unwrap(),
            PhiProfile::ConstantOne,
        )
        .unwrap();
        let probes = [[0.0f64, 0.0, 0.0], [0.7, 0.0, 0.0], [1.4, 0.0, 0.0]];
        let r = generator_convergence(
            &k,
            &bump(),
            &probes,
            &[0.4, 0.2, 0.1, 0.05],
            &spec(),
        )
        .unwrap();
        assert!(r.converged, "gaps {:?} ratios {:?}", r.sup_gaps, r.ratios);
        // Symmetric increments at alpha = 0.5: each halving scales the gap
        // by 2^-1.5 ~ 0.354.
        for &ratio in &r.ratios {
            assert!(
                (0.25..0.5).contains(&ratio),
                "ratio {ratio} outside the 2^-1.5 neighborhood"
            );
        }
        assert_relative_eq!(r.eps_ref, 0.05 / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn two_dimensional_generator_matches_polar_mesh() {
        let k = JumpKernel::saturated(
            ModelParams::new(1.0f64, 2, 1.0, 0.5).unwrap(),
            PhiProfile::ConstantOne,
        )
        .unwrap();
        let b = bump();
        let x = [0.0f64; 3];
        let got = generator_apply(&k, &b, &x, &spec()).unwrap();

        // Radial probe at the center: the angular average is the value at
        // any direction, so a 1d mesh in rho suffices.
        let n = 400_000usize;
        let h = (60.0 - 0.5) / n as f64;
        let mut want = 0.0;
        for i in 0..n {
            let rho: f64 = 0.5 + (i as f64 + 0.5) * h;
            let u = b.eval(&[rho, 0.0, 0.0]);
            want += rho.powi(-3) * (u - 1.0) * 2.0 * std::f64::consts::PI * rho;
        }
        want *= h;
        want -= 2.0 * std::f64::consts::PI / 60.0;
        assert_relative_eq!(got, want, max_relative = 1e-5);
    }
}
