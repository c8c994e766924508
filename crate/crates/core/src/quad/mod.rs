//! Deterministic adaptive quadrature.
//!
//! The engine is a 15-point Kronrod rule with an embedded 7-point Gauss rule
//! on each segment, refined by a worst-first bisection worklist. Semi-infinite
//! ranges are truncated at a radius certified by an analytic tail bound and
//! the certified remainder is folded into the reported error bound.

pub mod balls;
pub mod convolution;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerances and budget for one quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec<F: Real> {
    pub rel_tol: F,
    pub abs_tol: F,
    pub max_subdivisions: usize,
}

impl<F: Real> Default for QuadratureSpec<F> {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: F::of(1e-9),
            abs_tol: F::of(1e-13),
            max_subdivisions: 2000,
        }
    }
}

impl<F: Real> QuadratureSpec<F> {
    pub fn with_tols(rel_tol: F, abs_tol: F) -> Self {
        QuadratureSpec {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    fn target(&self, total: F) -> F {
        self.abs_tol.max(self.rel_tol * total.abs())
    }
}

/// Outcome of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<F: Real> {
    pub value: F,
    /// Sum of per-segment Gauss/Kronrod discrepancies plus any certified
    /// truncation remainder. An estimate, not a rigorous enclosure.
    pub error_bound: F,
    pub subdivisions: usize,
    pub fn_evals: usize,
    /// Truncation radius actually used for a semi-infinite range.
    pub truncation_radius: Option<F>,
}

impl<F: Real> QuadResult<F> {
    fn zero() -> Self {
        QuadResult {
            value: F::zero(),
            error_bound: F::zero(),
            subdivisions: 0,
            fn_evals: 0,
            truncation_radius: None,
        }
    }

    fn absorb(&mut self, other: &QuadResult<F>) {
        self.value += other.value;
        self.error_bound += other.error_bound;
        self.subdivisions += other.subdivisions;
        self.fn_evals += other.fn_evals;
    }
}

// 15-point Kronrod abscissae on [-1, 1] (positive half) and weights, with
// the embedded 7-point Gauss weights. Values are the classical dqk15 tables.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_69,
    0.279_705_391_489_276_67,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// One Gauss/Kronrod evaluation over [a, b]. Returns (value, discrepancy).
fn gk15<F: Real>(f: &mut dyn FnMut(F) -> F, a: F, b: F) -> Result<(F, F)> {
    let half = (b - a) * F::of(0.5);
    let center = (a + b) * F::of(0.5);
    let fc = f(center);
    let mut resk = F::of(WGK[7]) * fc;
    let mut resg = F::of(WG[3]) * fc;
    for j in 0..7 {
        let x = half * F::of(XGK[j]);
        let f1 = f(center - x);
        let f2 = f(center + x);
        resk += F::of(WGK[j]) * (f1 + f2);
        if j % 2 == 1 {
            resg += F::of(WG[j / 2]) * (f1 + f2);
        }
    }
    let value = resk * half;
    let err = ((resk - resg) * half).abs();
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "integrand produced a non-finite value on [{a}, {b}]"
        )));
    }
    Ok((value, err))
}

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Real>(
    mut f: impl FnMut(F) -> F,
    a: F,
    b: F,
    spec: &QuadratureSpec<F>,
) -> Result<QuadResult<F>> {
    if a == b {
        return Ok(QuadResult::zero());
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParam(format!(
            "integration range [{a}, {b}] must be finite and ordered"
        )));
    }

    struct Seg<F> {
        a: F,
        b: F,
        value: F,
        err: F,
    }

    let (v0, e0) = gk15(&mut f, a, b)?;
    let mut segs = vec![Seg {
        a,
        b,
        value: v0,
        err: e0,
    }];
    let mut fn_evals = 15usize;
    let mut prev_total = v0;

    loop {
        let mut total = F::zero();
        let mut total_err = F::zero();
        for s in &segs {
            total += s.value;
            total_err += s.err;
        }
        if total_err <= spec.target(total) {
            return Ok(QuadResult {
                value: total,
                error_bound: total_err,
                subdivisions: segs.len() - 1,
                fn_evals,
                truncation_radius: None,
            });
        }
        if segs.len() > spec.max_subdivisions {
            return Err(Error::QuadratureStalled {
                estimate: total.as_f64(),
                previous: prev_total.as_f64(),
                error: total_err.as_f64(),
                subdivisions: segs.len() - 1,
            });
        }
        let mut worst = 0;
        for (i, s) in segs.iter().enumerate() {
            if s.err > segs[worst].err {
                worst = i;
            }
        }
        let Seg { a: wa, b: wb, .. } = segs[worst];
        let mid = (wa + wb) * F::of(0.5);
        if mid <= wa || mid >= wb {
            // Interval no longer splittable in this precision; accept it.
            return Ok(QuadResult {
                value: total,
                error_bound: total_err,
                subdivisions: segs.len() - 1,
                fn_evals,
                truncation_radius: None,
            });
        }
        let (lv, le) = gk15(&mut f, wa, mid)?;
        let (rv, re) = gk15(&mut f, mid, wb)?;
        fn_evals += 30;
        prev_total = total;
        segs[worst] = Seg {
            a: wa,
            b: mid,
            value: lv,
            err: le,
        };
        segs.push(Seg {
            a: mid,
            b: wb,
            value: rv,
            err: re,
        });
    }
}

/// Integral over `[a, b]` split at the interior `breakpoints` (radii where
/// the integrand has kinks). Breakpoints outside `(a, b)` are ignored.
pub fn integrate_piecewise<F: Real>(
    mut f: impl FnMut(F) -> F,
    a: F,
    b: F,
    breakpoints: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<QuadResult<F>> {
    if a == b {
        return Ok(QuadResult::zero());
    }
    let mut cuts: Vec<F> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > a && p < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("breakpoints must not be NaN"));
    cuts.dedup();

    let mut out = QuadResult::zero();
    let mut lo = a;
    for p in cuts.into_iter().chain(std::iter::once(b)) {
        if p > lo {
            let r = integrate(&mut f, lo, p, spec)?;
            out.absorb(&r);
            lo = p;
        }
    }
    Ok(out)
}

/// Analytic upper bound on the tail `integral_R^inf` of a nonnegative
/// integrand, used to certify truncation radii.
///
/// Coefficients are stored as logarithms so profiles that require rescaling
/// by huge factors (deep exponential decay) stay representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailBound<F: Real> {
    /// Integrand bounded by `e^{ln_coef} rho^{-exponent}`.
    Power { ln_coef: F, exponent: F },
    /// Integrand bounded by `e^{ln_coef} e^{-m rho^beta} rho^{-exponent}`.
    PowerExp {
        ln_coef: F,
        exponent: F,
        m: F,
        beta: F,
    },
}

impl<F: Real> TailBound<F> {
    pub fn power(ln_coef: F, exponent: F) -> Self {
        TailBound::Power { ln_coef, exponent }
    }

    pub fn power_exp(ln_coef: F, exponent: F, m: F, beta: F) -> Self {
        TailBound::PowerExp {
            ln_coef,
            exponent,
            m,
            beta,
        }
    }

    /// Multiplies the coefficient by `e^{extra}`.
    pub fn scale_ln(self, extra: F) -> Self {
        match self {
            TailBound::Power { ln_coef, exponent } => TailBound::Power {
                ln_coef: ln_coef + extra,
                exponent,
            },
            TailBound::PowerExp {
                ln_coef,
                exponent,
                m,
                beta,
            } => TailBound::PowerExp {
                ln_coef: ln_coef + extra,
                exponent,
                m,
                beta,
            },
        }
    }

    /// `ln` of the certified remainder past radius `r`. Returns `+inf` when
    /// no bound is certified at this radius yet (the exponential term has
    /// not overcome a weak power); errors when the tail can never converge.
    pub fn ln_remainder(&self, r: F) -> Result<F> {
        if !(r > F::zero()) {
            return Err(Error::InvalidParam(format!("tail radius {r} must be > 0")));
        }
        let one = F::one();
        match *self {
            TailBound::Power { ln_coef, exponent } => {
                if exponent <= one {
                    return Err(Error::DivergentTail(format!(
                        "power tail with exponent {exponent} <= 1"
                    )));
                }
                Ok(ln_coef + (one - exponent) * r.ln() - (exponent - one).ln())
            }
            TailBound::PowerExp {
                ln_coef,
                exponent,
                m,
                beta,
            } => {
                if !(m > F::zero()) || !(beta > F::zero()) {
                    return Err(Error::DivergentTail(
                        "power-exp tail needs m > 0 and beta > 0".into(),
                    ));
                }
                // From e^{-m rho^beta} <= e^{-m r^beta} (rho/r)^{-m beta r^beta}:
                //   integral <= e^{ln_coef - m r^beta} r^{1-exponent} / (exponent + q - 1)
                // with q = m beta r^beta, valid once exponent + q > 1.
                let q = m * beta * r.powf(beta);
                let denom = exponent + q - one;
                if denom <= F::zero() {
                    return Ok(F::infinity());
                }
                Ok(ln_coef - m * r.powf(beta) + (one - exponent) * r.ln() - denom.ln())
            }
        }
    }

    /// Certified remainder past radius `r` (may be 0 after underflow).
    pub fn remainder(&self, r: F) -> Result<F> {
        Ok(self.ln_remainder(r)?.exp())
    }

    /// Smallest radius of the form `start * 2^k` whose certified remainder
    /// is at most `tol`.
    pub fn radius_for(&self, tol: F, start: F) -> Result<F> {
        if !(tol > F::zero()) {
            return Err(Error::InvalidParam(format!("tail tolerance {tol} must be > 0")));
        }
        let mut r = start.max(F::one());
        let ln_tol = tol.ln();
        for _ in 0..200 {
            if self.ln_remainder(r)? <= ln_tol {
                return Ok(r);
            }
            r = r + r;
        }
        Err(Error::DivergentTail(format!(
            "remainder still above tolerance {tol} at radius {r}"
        )))
    }
}

/// Integral of `f` over `[a, inf)`, truncated at a radius past which `tail`
/// certifies the remainder is below tolerance. The remainder joins the
/// reported error bound.
///
/// The domain grows one octave at a time. Keeping each segment at a
/// bounded ratio of endpoints matters: a single panel spanning many decades
/// puts every quadrature node past the integrand's support and reports a
/// spurious zero.
///
/// A far segment that exhausts its subdivision budget (an integrand
/// oscillating on a fixed wavelength does this once the octave holds more
/// periods than the budget) is accepted with its honest error estimate,
/// provided that estimate fits under the certified bound for everything
/// past the segment's start. The loop then stops as soon as the certified
/// remainder drops below the error already accumulated, since pushing the
/// radius further cannot make the result more accurate.
pub fn integrate_to_inf<F: Real>(
    mut f: impl FnMut(F) -> F,
    a: F,
    tail: &TailBound<F>,
    breakpoints: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<QuadResult<F>> {
    let mut radius = (a + a).max(a + F::one());
    let mut out = integrate_piecewise(&mut f, a, radius, breakpoints, spec)?;

    let seg_spec = QuadratureSpec {
        max_subdivisions: spec.max_subdivisions.min(250),
        ..*spec
    };
    for _ in 0..250 {
        let rem = tail.remainder(radius)?;
        if rem <= spec.target(out.value).max(out.error_bound * F::of(0.5)) {
            out.error_bound += rem;
            out.truncation_radius = Some(radius);
            return Ok(out);
        }
        let next = radius + radius;
        let extra = match integrate_piecewise(&mut f, radius, next, breakpoints, &seg_spec) {
            Ok(q) => q,
            Err(Error::QuadratureStalled {
                estimate,
                error,
                subdivisions,
                ..
            }) if F::of(error) <= rem => QuadResult {
                value: F::of(estimate),
                error_bound: F::of(error),
                subdivisions,
                fn_evals: subdivisions * 15,
                truncation_radius: None,
            },
            Err(e) => return Err(e),
        };
        out.absorb(&extra);
        radius = next;
    }
    Err(Error::DivergentTail(format!(
        "tail remainder would not drop below the relative target by radius {radius}"
    )))
}

/// Surface measure of the unit sphere in dimension 1, 2, or 3.
pub fn sphere_surface<F: Real>(dim: usize) -> Result<F> {
    match dim {
        1 => Ok(F::of(2.0)),
        2 => Ok(F::of(2.0 * std::f64::consts::PI)),
        3 => Ok(F::of(4.0 * std::f64::consts::PI)),
        _ => Err(Error::Unsupported(format!("dimension {dim} not in 1..=3"))),
    }
}

/// Upper limit of a radial integral.
#[derive(Debug, Clone, Copy)]
pub enum RadialUpper<F: Real> {
    Finite(F),
    /// Semi-infinite; `tail` must bound the full integrand including the
    /// `sigma_d rho^{d-1}` surface factor.
    Infinite(TailBound<F>),
}

/// Integral of the radial function `g` over the annulus
/// `r_min <= |u| <= upper` in dimension `dim`, i.e.
/// `integral g(rho) sigma_d rho^{d-1} drho`.
pub fn integrate_radial<F: Real>(
    g: impl Fn(F) -> F,
    r_min: F,
    upper: RadialUpper<F>,
    dim: usize,
    breakpoints: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<QuadResult<F>> {
    if !(r_min >= F::zero()) {
        return Err(Error::InvalidParam(format!("radial lower limit {r_min} must be >= 0")));
    }
    let sigma: F = sphere_surface(dim)?;
    let h = |rho: F| {
        let mut w = sigma;
        for _ in 0..dim - 1 {
            w *= rho;
        }
        g(rho) * w
    };
    match upper {
        RadialUpper::Finite(b) => {
            if b < r_min {
                return Err(Error::InvalidParam(format!(
                    "radial upper limit {b} below lower limit {r_min}"
                )));
            }
            integrate_piecewise(h, r_min, b, breakpoints, spec)
        }
        RadialUpper::Infinite(tail) => {
            if r_min == F::zero() {
                return Err(Error::Domain(
                    "semi-infinite radial integral needs a positive lower limit".into(),
                ));
            }
            integrate_to_inf(h, r_min, &tail, breakpoints, spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    #[test]
    fn polynomial_and_trig_anchors() {
        let r = integrate(|x: f64| x * x, 0.0, 1.0, &spec()).unwrap();
        assert_relative_eq!(r.value, 1.0 / 3.0, max_relative = 1e-14);

        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, &spec()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn kinked_integrand_with_breakpoint() {
        let r = integrate_piecewise(|x: f64| (x - 1.0).abs(), 0.0, 2.0, &[1.0], &spec()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity_converges_adaptively() {
        let r = integrate(|x: f64| x.sqrt().recip(), 1e-12, 1.0, &spec()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-5);
        assert!(r.subdivisions > 5, "needs refinement near 0");
    }

    #[test]
    fn stalls_with_tiny_budget() {
        let tight = QuadratureSpec {
            rel_tol: 1e-15,
            abs_tol: 1e-300,
            max_subdivisions: 8,
        };
        let r = integrate(|x: f64| x.abs().sqrt().recip(), 1e-14, 1.0, &tight);
        assert!(matches!(r, Err(Error::QuadratureStalled { .. })));
    }

    #[test]
    fn power_tail_remainder_is_exact_for_pure_powers() {
        // integral_R^inf rho^-2 drho = 1/R and the bound is tight.
        let t: TailBound<f64> = TailBound::power(0.0, 2.0);
        assert_relative_eq!(t.remainder(4.0).unwrap(), 0.25, max_relative = 1e-14);

        let r = t.radius_for(1e-6, 1.0).unwrap();
        assert!(t.remainder(r).unwrap() <= 1e-6);
        assert!(r <= 2.1e6, "doubling should stop shortly after 1e6");
    }

    #[test]
    fn power_exp_remainder_bounds_the_true_tail() {
        // integral_2^inf e^-rho drho = e^-2; bound with m=1, beta=1, e=0.
        let t: TailBound<f64> = TailBound::power_exp(0.0, 0.0, 1.0, 1.0);
        let bound = t.remainder(2.0).unwrap();
        let truth = (-2.0f64).exp();
        assert!(bound >= truth);
        assert!(bound <= 3.0 * truth, "bound {bound} too loose vs {truth}");
    }

    #[test]
    fn divergent_power_tail_is_rejected() {
        let t: TailBound<f64> = TailBound::power(0.0, 0.9);
        assert!(matches!(t.remainder(2.0), Err(Error::DivergentTail(_))));
    }

    #[test]
    fn semi_infinite_integral_matches_closed_form() {
        // integral_1^inf rho^-3 drho = 1/2.
        let t: TailBound<f64> = TailBound::power(0.0, 3.0);
        let r = integrate_to_inf(|x: f64| x.powi(-3), 1.0, &t, &[], &spec()).unwrap();
        assert_relative_eq!(r.value, 0.5, max_relative = 1e-9);
        assert!(r.truncation_radius.is_some());

        // integral_0^inf e^-rho drho = 1.
        let t: TailBound<f64> = TailBound::power_exp(0.0, 0.0, 1.0, 1.0);
        let r = integrate_to_inf(|x: f64| (-x).exp(), 0.0, &t, &[], &spec()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn radial_integrals_hit_geometry_anchors() {
        // sigma_1 integral_{0.5}^inf rho^-2 drho = 2 * 2 = 4.
        let tail: TailBound<f64> = TailBound::power(2.0f64.ln(), 2.0);
        let r = integrate_radial(
            |rho: f64| rho.powi(-2),
            0.5,
            RadialUpper::Infinite(tail),
            1,
            &[],
            &spec(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-9);

        // Unit disc area and unit ball volume.
        let r = integrate_radial(|_| 1.0f64, 0.0, RadialUpper::Finite(1.0), 2, &[], &spec()).unwrap();
        assert_relative_eq!(r.value, std::f64::consts::PI, max_relative = 1e-12);

        let r = integrate_radial(|_| 1.0f64, 0.0, RadialUpper::Finite(1.0), 3, &[], &spec()).unwrap();
        assert_relative_eq!(r.value, 4.0 * std::f64::consts::PI / 3.0, max_relative = 1e-12);
    }

    /// Exponential integral `E_1(x)` by the modified Lentz continued
    /// fraction, an evaluation route with no shared code with the panels.
    fn exp_integral_e1(x: f64) -> f64 {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }

    #[test]
    fn exponential_radial_tail_matches_the_continued_fraction() {
        let oracle = 2.0 * exp_integral_e1(1.0);
        assert_relative_eq!(oracle, 0.43876786879104057, max_relative = 1e-12);

        let tail: TailBound<f64> = TailBound::PowerExp {
            ln_coef: 2.0f64.ln(),
            exponent: 1.0,
            m: 1.0,
            beta: 1.0,
        };
        let r = integrate_radial(
            |rho: f64| (-rho).exp() / rho,
            1.0,
            RadialUpper::Infinite(tail),
            1,
            &[],
            &spec(),
        )
        .unwrap();
        assert_relative_eq!(r.value, oracle, max_relative = 1e-9);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        assert!(sphere_surface::<f64>(4).is_err());
        assert!(sphere_surface::<f64>(0).is_err());
    }

    #[test]
    fn non_finite_integrand_is_a_domain_error() {
        let r = integrate(|x: f64| (x - 0.5).recip(), 0.0, 1.0, &spec());
        assert!(matches!(r, Err(Error::Domain(_)) | Err(Error::QuadratureStalled { .. })));
    }

    proptest! {
        #[test]
        fn integrates_cubics_exactly(
            c0 in -3.0f64..3.0, c1 in -3.0f64..3.0,
            c2 in -3.0f64..3.0, c3 in -3.0f64..3.0,
            a in -5.0f64..5.0, len in 0.01f64..10.0,
        ) {
            let b = a + len;
            let f = |x: f64| c0 + x * (c1 + x * (c2 + x * c3));
            let prim = |x: f64| {
                x * (c0 + x * (c1 / 2.0 + x * (c2 / 3.0 + x * c3 / 4.0)))
            };
            let r = integrate(f, a, b, &spec()).unwrap();
            let exact = prim(b) - prim(a);
            prop_assert!((r.value - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
        }

        #[test]
        fn piecewise_split_agrees_with_single_range(
            cut in 0.1f64..0.9,
        ) {
            let f = |x: f64| (1.0 + x * x).recip();
            let whole = integrate(f, 0.0, 1.0, &spec()).unwrap().value;
            let split = integrate_piecewise(f, 0.0, 1.0, &[cut], &spec()).unwrap().value;
            prop_assert!((whole - split).abs() < 1e-11);
        }
    }
}
