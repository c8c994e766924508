//! Sample-based checks of the regularity conditions a kernel must satisfy
//! for the truncation scheme to behave: bounded profile ratios on unit
//! displacements, controlled log-derivatives, a dominated self-convolution,
//! increment and argument symmetry, and a uniform lower bound on truncated
//! jump mass.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{sphere_mean, JumpKernel};
use crate::profile::PhiProfile;
use crate::quad::convolution::{classify_ratio_trend, convolution_ratio, RatioTrend};
use crate::quad::{integrate_radial, QuadratureSpec, RadialUpper};
use crate::scalar::Real;

/// Which regularity condition a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Condition {
    /// Profile ratio bound on displacements within distance 1.
    A1a,
    /// Bounded first and second log-derivatives of the profile.
    A1b,
    /// Self-convolution dominated by the envelope at large separation.
    A1c,
    /// Increment symmetry (or `alpha < 1`, which waives it).
    A2,
    /// Symmetry in the two arguments.
    A3,
    /// Lower bound on truncated mass, uniformly in the base point.
    A4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one condition check.
#[derive(Debug, Clone)]
pub struct AssumptionReport<F: Real> {
    pub condition: Condition,
    pub verdict: Verdict,
    /// The extremal ratio the condition is about (meaning varies per check).
    pub worst_ratio: F,
    /// Coordinates of the extremal sample (layout varies per check).
    pub worst_location: Vec<F>,
    pub samples_checked: usize,
    /// Extracted constants, keyed by conventional names like "c1".
    pub constants: BTreeMap<String, F>,
    pub notes: String,
}

impl<F: Real> AssumptionReport<F> {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Largest profile ratio `phi(a)/phi(b)` over `|a - b| <= 1`, sampled on a
/// uniform grid of pitch `step` over `[0, lag_max]`, then re-sampled over
/// `[0, 2 lag_max]` to detect unbounded growth.
pub fn check_a1a<F: Real>(
    profile: &PhiProfile<F>,
    lag_max: F,
    step: F,
) -> Result<AssumptionReport<F>> {
    if !(lag_max >= F::of(4.0)) || !(step > F::zero()) || step > F::one() {
        return Err(Error::InvalidParam(
            "profile ratio check needs lag_max >= 4 and step in (0, 1]".into(),
        ));
    }

    let scan = |upto: F| -> (F, F, F, usize) {
        let n = (upto / step).as_f64().ceil() as usize;
        let win = (F::one() / step).as_f64().ceil() as usize;
        let lnphi: Vec<F> = (0..=n).map(|i| profile.log_eval(step * F::of_usize(i))).collect();
        let mut best = F::neg_infinity();
        let (mut wa, mut wb) = (F::zero(), F::zero());
        let mut count = 0usize;
        for i in 0..=n {
            let j_hi = (i + win).min(n);
            for j in i..=j_hi {
                if (F::of_usize(j) - F::of_usize(i)) * step > F::one() + F::of(1e-12) {
                    break;
                }
                count += 1;
                let d = lnphi[i] - lnphi[j];
                let d = d.max(lnphi[j] - lnphi[i]);
                if d > best {
                    best = d;
                    wa = step * F::of_usize(i);
                    wb = step * F::of_usize(j);
                }
            }
        }
        (best, wa, wb, count)
    };

    let (ln1, wa, wb, n1) = scan(lag_max);
    let (ln2, _, _, n2) = scan(lag_max + lag_max);

    let mut constants = BTreeMap::new();
    constants.insert("ln_c1".to_string(), ln2.max(ln1));
    constants.insert("c1".to_string(), ln2.max(ln1).exp());

    let mut notes = String::new();
    let mut verdict = Verdict::Pass;
    if ln2 > ln1 + F::of(0.095) {
        // Growth of ~10% in the log under range doubling: unbounded ratio.
        verdict = Verdict::Fail;
        notes = format!(
            "worst log-ratio grew from {:.6} to {:.6} when doubling the range",
            ln1.as_f64(),
            ln2.as_f64()
        );
    }
    if let PhiProfile::Tabulated { knots } = profile {
        let mut prev = F::one();
        for &(r, _) in knots {
            if r - prev > F::one() && verdict == Verdict::Pass {
                verdict = Verdict::Inconclusive;
                notes = format!("knot spacing {} exceeds 1 near radius {}; undersampled", (r - prev).as_f64(), r.as_f64());
            }
            prev = r;
        }
    }

    Ok(AssumptionReport {
        condition: Condition::A1a,
        verdict,
        worst_ratio: ln1.exp(),
        worst_location: vec![wa, wb],
        samples_checked: n1 + n2,
        constants,
        notes,
    })
}

/// Supremum of `max(|phi'|, |phi''|) / phi` over `(1, s_max]`, with a
/// doubled-range rescan for growth. Uses closed-form log-derivatives when
/// available and finite differences of `ln phi` otherwise.
pub fn check_a1b<F: Real>(
    profile: &PhiProfile<F>,
    s_max: F,
    n_samples: usize,
) -> Result<AssumptionReport<F>> {
    if !(s_max > F::of(2.0)) || n_samples < 16 {
        return Err(Error::InvalidParam(
            "log-derivative check needs s_max > 2 and at least 16 samples".into(),
        ));
    }

    let ratios_at = |s: F| -> (F, F) {
        match profile.log_derivatives(s) {
            Some((l1, l2)) => (l1.abs(), l2.abs()),
            None => {
                let h = F::of(1e-5) * s.max(F::one());
                let l = |u: F| profile.log_eval(u);
                let d1 = (l(s + h) - l(s - h)) / (h + h);
                let d2 = (l(s + h) - l(s) - l(s) + l(s - h)) / (h * h);
                // phi'/phi = (ln phi)', phi''/phi = (ln phi)'' + ((ln phi)')^2.
                (d1.abs(), (d2 + d1 * d1).abs())
            }
        }
    };

    let scan = |upto: F| -> (F, F) {
        let mut best = F::zero();
        let mut at = F::one();
        for i in 0..n_samples {
            let t = F::of_usize(i) / F::of_usize(n_samples - 1);
            // Geometric mesh in (s - 1) emphasizes the region just past 1.
            let u = F::of(1e-8) * ((upto - F::one()) / F::of(1e-8)).powf(t);
            let s = F::one() + u;
            let (a, b) = ratios_at(s);
            let m = a.max(b);
            if m > best {
                best = m;
                at = s;
            }
        }
        (best, at)
    };

    let (sup1, at1) = scan(s_max);
    let (sup2, _) = scan(s_max + s_max);

    let mut constants = BTreeMap::new();
    constants.insert("c2".to_string(), sup1.max(sup2));

    let (verdict, notes) = if sup2 > sup1 * F::of(1.1) {
        (
            Verdict::Fail,
            format!(
                "derivative ratio grew from {:.6e} to {:.6e} when doubling the range",
                sup1.as_f64(),
                sup2.as_f64()
            ),
        )
    } else {
        (Verdict::Pass, String::new())
    };

    Ok(AssumptionReport {
        condition: Condition::A1b,
        verdict,
        worst_ratio: sup1,
        worst_location: vec![at1],
        samples_checked: 2 * n_samples,
        constants,
        notes,
    })
}

/// Self-convolution domination: computes `I(r)/g(r)` at each lag and
/// classifies the trend. Converging ratios pass and freeze the constant
/// `c3`; sustained logarithmic growth or outright divergence fails.
pub fn check_a1c<F: Real>(
    profile: &PhiProfile<F>,
    alpha: F,
    dim: usize,
    lags: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<AssumptionReport<F>> {
    if lags.len() < 4 || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam(
            "convolution check needs at least 4 strictly increasing lags".into(),
        ));
    }
    let mut ratios = Vec::with_capacity(lags.len());
    let mut evals = 0usize;
    for &lag in lags {
        let r = convolution_ratio(profile, alpha, dim, lag, spec)?;
        evals += r.fn_evals;
        ratios.push(r.value_ratio);
    }
    let (worst_idx, &worst) = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("nonempty");

    let trend = classify_ratio_trend(lags, &ratios);
    let mut constants = BTreeMap::new();
    let (verdict, notes) = match trend {
        RatioTrend::Converged { level } => {
            constants.insert("c3".to_string(), worst);
            (Verdict::Pass, format!("ratios settle near {:.6e}", level.as_f64()))
        }
        RatioTrend::LogGrowth { slope, r_squared } => (
            Verdict::Fail,
            format!(
                "ratios grow like {:.3} ln(lag) (r^2 = {:.4}); no finite constant",
                slope.as_f64(),
                r_squared.as_f64()
            ),
        ),
        RatioTrend::Divergent { growth } => (
            Verdict::Fail,
            format!("ratios grew {:.3e}x across the lag range", growth.as_f64()),
        ),
        RatioTrend::Undetermined => (
            Verdict::Inconclusive,
            "trend not resolved over the given lags".to_string(),
        ),
    };

    Ok(AssumptionReport {
        condition: Condition::A1c,
        verdict,
        worst_ratio: worst,
        worst_location: vec![lags[worst_idx]],
        samples_checked: evals,
        constants,
        notes,
    })
}

fn symmetry_sample_points<F: Real>(dim: usize, eps: F) -> Vec<([F; 3], [F; 3])> {
    let bases = [
        [0.0f64, 0.0, 0.0],
        [0.61, -0.37, 0.44],
        [-1.7, 0.91, -0.23],
        [2.3, -1.1, 0.8],
    ];
    let dirs = [
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.6, 0.8, 0.0],
        [0.48, -0.6, 0.64],
    ];
    let mut pts = Vec::new();
    for b in &bases {
        let mut x = [F::zero(); 3];
        x[..dim].copy_from_slice(
            &b.map(F::of)[..dim],
        );
        for d in &dirs {
            for k in 0..12 {
                let rho = eps * F::of(1.7f64.powi(k));
                let mut h = [F::zero(); 3];
                for (hc, dc) in h.iter_mut().zip(d.iter()).take(dim) {
                    *hc = rho * F::of(*dc);
                }
                if h.iter().all(|c| *c == F::zero()) {
                    continue;
                }
                pts.push((x, h));
            }
        }
    }
    pts
}

/// Increment symmetry `f(x, x+h) = f(x, x-h)` on a deterministic sample.
/// Kernels with `alpha < 1` pass outright: the scheme does not require
/// symmetry there.
pub fn check_a2<F: Real>(kernel: &JumpKernel<F>) -> Result<AssumptionReport<F>> {
    let p = &kernel.params;
    if p.alpha < F::one() {
        return Ok(AssumptionReport {
            condition: Condition::A2,
            verdict: Verdict::Pass,
            worst_ratio: F::zero(),
            worst_location: vec![],
            samples_checked: 0,
            constants: BTreeMap::new(),
            notes: "alpha < 1: increment symmetry not required".to_string(),
        });
    }
    let mut worst = F::zero();
    let mut loc = vec![];
    let pts = symmetry_sample_points(p.dim, p.eps);
    let n = pts.len();
    for (x, h) in pts {
        let plus = [x[0] + h[0], x[1] + h[1], x[2] + h[2]];
        let minus = [x[0] - h[0], x[1] - h[1], x[2] - h[2]];
        let a = kernel.eval(&x, &plus);
        let b = kernel.eval(&x, &minus);
        let scale = a.abs().max(b.abs()).max(F::of(1e-300));
        let rel = (a - b).abs() / scale;
        if rel > worst {
            worst = rel;
            loc = vec![x[0], x[1], x[2], h[0], h[1], h[2]];
        }
    }
    let verdict = if worst <= F::of(1e-9) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AssumptionReport {
        condition: Condition::A2,
        verdict,
        worst_ratio: worst,
        worst_location: loc,
        samples_checked: n,
        constants: BTreeMap::new(),
        notes: String::new(),
    })
}

/// Argument symmetry `f(x, y) = f(y, x)` on a deterministic sample.
pub fn check_a3<F: Real>(kernel: &JumpKernel<F>) -> Result<AssumptionReport<F>> {
    let p = &kernel.params;
    let mut worst = F::zero();
    let mut loc = vec![];
    let pts = symmetry_sample_points(p.dim, p.eps);
    let n = pts.len();
    for (x, h) in pts {
        let y = [x[0] + h[0], x[1] + h[1], x[2] + h[2]];
        let a = kernel.eval(&x, &y);
        let b = kernel.eval(&y, &x);
        let scale = a.abs().max(b.abs()).max(F::of(1e-300));
        let rel = (a - b).abs() / scale;
        if rel > worst {
            worst = rel;
            loc = vec![x[0], x[1], x[2], y[0], y[1], y[2]];
        }
    }
    let verdict = if worst <= F::of(1e-9) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AssumptionReport {
        condition: Condition::A3,
        verdict,
        worst_ratio: worst,
        worst_location: loc,
        samples_checked: n,
        constants: BTreeMap::new(),
        notes: String::new(),
    })
}

/// Profile-normalized tail mass `integral over |y-x| > r of f(x,y)/phi(|y-x|) dy`.
fn normalized_tail_mass<F: Real>(
    kernel: &JumpKernel<F>,
    x: &[F; 3],
    radius: F,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let p = &kernel.params;
    let sigma: F = crate::quad::sphere_surface(p.dim)?;
    // f / phi <= M rho^{-alpha-dim}, so the tail is a pure power.
    let tail = crate::quad::TailBound::power((p.m_upper * sigma).ln(), p.alpha + F::one());
    let breaks = kernel.phi.kink_radii();
    let q = if kernel.is_saturated() {
        integrate_radial(
            |rho: F| (p.m_upper.ln() - (p.alpha + F::of_usize(p.dim)) * rho.ln()).exp(),
            radius,
            RadialUpper::Infinite(tail),
            p.dim,
            &breaks,
            spec,
        )?
    } else {
        integrate_radial(
            |rho: F| {
                let mean = sphere_mean(kernel, x, rho, spec).unwrap_or_else(|_| F::nan());
                mean * (-kernel.phi.log_eval(rho)).exp()
            },
            radius,
            RadialUpper::Infinite(tail),
            p.dim,
            &breaks,
            spec,
        )?
    };
    Ok(q.value)
}

/// Lower/upper truncated-mass scaling: extracts
///
/// * `c4`: smallest `r^alpha * integral f/phi` over tested radii and points,
/// * `c5`: largest `r^alpha * b_r(x)`,
/// * `c6`: smallest `r^alpha * b_r(x)` over radii up to the operational eps0,
///
/// where `b_r(x)` is the plain truncated mass. Passing requires the
/// normalized lower bound to be positive and stable across radii.
pub fn check_a4<F: Real>(
    kernel: &JumpKernel<F>,
    radii: &[F],
    x_samples: &[[F; 3]],
    spec: &QuadratureSpec<F>,
) -> Result<AssumptionReport<F>> {
    if radii.is_empty() || x_samples.is_empty() {
        return Err(Error::InvalidParam("a4 check needs radii and sample points".into()));
    }
    for &r in radii {
        if !(r > F::zero()) || r > F::one() {
            return Err(Error::InvalidParam(format!("a4 radius {r} must lie in (0, 1]")));
        }
    }

    let alpha = kernel.params.alpha;
    let mut k4_min = F::infinity();
    let mut k4_per_radius: Vec<F> = Vec::new();
    let mut c5 = F::zero();
    let mut k6_per_radius: Vec<F> = Vec::new();
    let mut worst_loc = vec![];
    let mut samples = 0usize;

    for &r in radii {
        let scale = r.powf(alpha);
        let mut k4_r = F::infinity();
        let mut k6_r = F::infinity();
        for x in x_samples {
            samples += 1;
            let lower = normalized_tail_mass(kernel, x, r, spec)? * scale;
            let plain = crate::kernel::tail_mass(kernel, x, r, spec)? * scale;
            if lower < k4_r {
                k4_r = lower;
            }
            if plain < k6_r {
                k6_r = plain;
            }
            if plain > c5 {
                c5 = plain;
            }
            if lower < k4_min {
                k4_min = lower;
                worst_loc = vec![x[0], x[1], x[2], r];
            }
        }
        k4_per_radius.push(k4_r);
        k6_per_radius.push(k6_r);
    }

    // Operational eps0: the largest tested radius up to which the plain
    // lower mass keeps at least half its small-radius level.
    let k6_ref = k6_per_radius[0];
    let mut eps0_op = radii[0];
    for (i, &r) in radii.iter().enumerate() {
        if k6_per_radius[i] >= k6_ref * F::of(0.5) {
            eps0_op = r;
        } else {
            break;
        }
    }
    let c6 = radii
        .iter()
        .zip(&k6_per_radius)
        .filter(|(r, _)| **r <= eps0_op)
        .map(|(_, k)| *k)
        .fold(F::infinity(), F::min);

    let k4_max = k4_per_radius.iter().copied().fold(F::zero(), F::max);
    let stable = k4_min > F::zero() && k4_max <= k4_min * F::of(2.0);

    let mut constants = BTreeMap::new();
    constants.insert("c4".to_string(), k4_min);
    constants.insert("c5".to_string(), c5);
    constants.insert("c6".to_string(), c6);
    constants.insert("eps0_operational".to_string(), eps0_op);

    let (verdict, notes) = if !(k4_min > F::zero()) {
        (Verdict::Fail, "normalized truncated mass vanished".to_string())
    } else if stable {
        (Verdict::Pass, String::new())
    } else {
        (
            Verdict::Inconclusive,
            format!(
                "normalized mass varies by {:.2}x across radii",
                (k4_max / k4_min).as_f64()
            ),
        )
    };

    Ok(AssumptionReport {
        condition: Condition::A4,
        verdict,
        worst_ratio: k4_min,
        worst_location: worst_loc,
        samples_checked: samples,
        constants,
        notes,
    })
}
