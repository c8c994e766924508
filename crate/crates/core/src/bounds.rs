//! Empirical verification of the growth and envelope estimates satisfied
//! by the iterated kernels, with extraction of minimal witness constants.
//!
//! Every inequality checked here is existential in its constants. The
//! verifiers extract the smallest admissible witness from the data, then
//! confirm the inequality holds with that witness and report whether the
//! witness stays stable when the level range or sample set grows. Lattice
//! sups are lower witnesses of the continuum sup, so each report also
//! flags sups attained at the edge of the box.

use std::collections::BTreeMap;

use crate::assumptions::Verdict;
use crate::engine::{DensityResult, GridKernel, IteratedKernels};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::Grid;
use crate::kernel::{dist, sphere_mean, tail_mass, JumpKernel};
use crate::quad::{integrate_radial, QuadratureSpec, RadialUpper, TailBound};
use crate::scalar::Real;

/// Empirically extracted constant with a note on where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstEntry<F: Real> {
    pub value: F,
    pub provenance: String,
}

/// Ledger of extracted constants, keyed by conventional tags like `c7`.
///
/// Entries are nonnegative and finite; the tag `kappa` must lie in
/// `(0, 1)`. Re-inserting a tag keeps the larger value, so a ledger fed
/// from growing sample sets never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants<F: Real> {
    entries: BTreeMap<String, ConstEntry<F>>,
}

impl<F: Real> Default for BoundConstants<F> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<F: Real> BoundConstants<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tag: &str, value: F, provenance: &str) -> Result<()> {
        if !value.is_finite() || value < F::zero() {
            return Err(Error::InvalidParam(format!(
                "constant {tag} = {value} must be finite and nonnegative"
            )));
        }
        if tag == "kappa" && !(value > F::zero() && value < F::one()) {
            return Err(Error::InvalidParam(format!(
                "kappa = {value} must lie strictly inside (0, 1)"
            )));
        }
        match self.entries.get_mut(tag) {
            Some(e) if e.value >= value => {}
            Some(e) => {
                e.value = value;
                e.provenance = provenance.to_string();
            }
            None => {
                self.entries.insert(
                    tag.to_string(),
                    ConstEntry {
                        value,
                        provenance: provenance.to_string(),
                    },
                );
            }
        }
        Ok(())
    }

    pub fn get(&self, tag: &str) -> Option<F> {
        self.entries.get(tag).map(|e| e.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConstEntry<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of one inequality verification.
#[derive(Debug, Clone)]
pub struct BoundReport<F: Real> {
    /// What was checked, in words.
    pub target: String,
    /// Description of the sample set the sups ran over.
    pub samples: String,
    /// Largest left/right ratio with the extracted constants in place;
    /// at most `1 + 1e-6` on a pass.
    pub max_ratio: F,
    /// Extracted constants and fit parameters, keyed by tag.
    pub fitted: BTreeMap<String, F>,
    pub verdict: Verdict,
    /// True when a sup was attained at the edge of the lattice box,
    /// hinting that the continuum sup lies outside it.
    pub boundary_sup: bool,
    pub notes: String,
}

/// Admissible overshoot for ratios that should be exactly 1.
const RATIO_SLACK: f64 = 1e-6;
/// Band around the predicted log-log slope of the level sups.
const SLOPE_TOL: f64 = 0.3;
/// Allowed relative drift of the extracted growth base when the level
/// range doubles.
const STABILITY_MARGIN: f64 = 0.2;
/// Cap on lattice pair scans; larger products subsample sources.
const MAX_PAIR_SCANS: usize = 200_000_000;

/// One evaluation point for the small-ball comparisons: base point `x`,
/// ball center `y`, and the truncation radius to use.
#[derive(Debug, Clone, Copy)]
pub struct EintlSample<F: Real> {
    pub x: [F; 3],
    pub y: [F; 3],
    pub eps: F,
}

/// Mean of `g(y + rho u)` over unit directions `u`.
pub(crate) fn direction_mean<F: Real>(
    g: &impl Fn(&[F; 3]) -> F,
    center: &[F; 3],
    rho: F,
    dim: usize,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let at = |u: [F; 3]| {
        g(&[
            center[0] + rho * u[0],
            center[1] + rho * u[1],
            center[2] + rho * u[2],
        ])
    };
    match dim {
        1 => Ok((at([F::one(), F::zero(), F::zero()]) + at([-F::one(), F::zero(), F::zero()]))
            * F::of(0.5)),
        2 => {
            let two_pi = F::of(2.0 * std::f64::consts::PI);
            let q = crate::quad::integrate(
                |th: F| at([th.cos(), th.sin(), F::zero()]),
                F::zero(),
                two_pi,
                spec,
            )?;
            Ok(q.value / two_pi)
        }
        3 => {
            let pi = F::of(std::f64::consts::PI);
            let q = crate::quad::integrate(
                |th: F| {
                    let (s, c) = (th.sin(), th.cos());
                    let az = crate::quad::integrate(
                        |ph: F| at([s * ph.cos(), s * ph.sin(), c]),
                        F::zero(),
                        pi + pi,
                        spec,
                    )
                    .map(|r| r.value)
                    .unwrap_or_else(|_| F::nan());
                    az * s
                },
                F::zero(),
                pi,
                spec,
            )?;
            if !q.value.is_finite() {
                return Err(Error::Domain("sphere quadrature did not converge".into()));
            }
            Ok(q.value / (F::of(4.0) * pi))
        }
        d => Err(Error::Unsupported(format!("dimension {d} not in 1..=3"))),
    }
}

/// `integral over eps < |z - y| < radius of weight(z) f_eps(y, z) dz`.
fn weighted_ball_mass<F: Real>(
    kernel: &JumpKernel<F>,
    y: &[F; 3],
    radius: F,
    weight: &impl Fn(&[F; 3]) -> F,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let eps = kernel.params.eps;
    if radius <= eps {
        return Ok(F::zero());
    }
    let g = |z: &[F; 3]| weight(z) * kernel.eval(y, z);
    let mut breaks = kernel.phi.kink_radii();
    breaks.retain(|&b| b > eps && b < radius);
    let q = integrate_radial(
        |rho: F| direction_mean(&g, y, rho, kernel.params.dim, spec).unwrap_or_else(|_| F::nan()),
        eps,
        RadialUpper::Finite(radius),
        kernel.params.dim,
        &breaks,
        spec,
    )?;
    if !q.value.is_finite() {
        return Err(Error::Domain("ball quadrature did not converge".into()));
    }
    Ok(q.value)
}

/// Verifies that the intensity integrated over a ball around `y`, weighted
/// by the envelope seen from `x`, stays below `(b_eps(y) + c)` times the
/// envelope at `|y - x|`.
///
/// Part 1 uses the unweighted power `|z - x|^(-alpha-d)` over the ball of
/// radius `kappa |y - x|`; part 2 uses the profile-weighted envelope over
/// the unit ball and requires `|x - y| > 2`. The minimal admissible shift
/// per sample is reported, and its maximum becomes the extracted `c7` or
/// `c8`.
pub fn verify_eintl<F: Real>(
    kernel: &JumpKernel<F>,
    part: u8,
    samples: &[EintlSample<F>],
    kappa: F,
    spec: &QuadratureSpec<F>,
) -> Result<BoundReport<F>> {
    if !(part == 1 || part == 2) {
        return Err(Error::InvalidParam(format!("part {part} must be 1 or 2")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParam("no samples given".into()));
    }
    if part == 1 && !(kappa > F::zero() && kappa < F::one()) {
        return Err(Error::InvalidParam(format!(
            "kappa = {kappa} must lie strictly inside (0, 1)"
        )));
    }
    let p = &kernel.params;
    let power = p.alpha + F::of(p.dim as f64);
    let tag = if part == 1 { "c7" } else { "c8" };

    let mut rows: Vec<(F, F, F)> = Vec::with_capacity(samples.len());
    for s in samples {
        let r = dist(&s.x, &s.y);
        if part == 1 && !(r > F::zero()) {
            return Err(Error::InvalidParam(
                "ball comparison needs distinct points x and y".into(),
            ));
        }
        if part == 2 && !(r > F::of(2.0)) {
            return Err(Error::InvalidParam(format!(
                "profile-weighted comparison needs |x - y| > 2, got {r}"
            )));
        }
        let ks = kernel.with_eps(s.eps)?;
        let ball = if part == 1 { kappa * r } else { F::one() };
        let x = s.x;
        let phi = ks.phi.clone();
        let weight = move |z: &[F; 3]| {
            let rz = dist(z, &x);
            let ln_w = if part == 1 {
                -power * rz.ln()
            } else {
                phi.log_eval(rz) - power * rz.ln()
            };
            ln_w.exp()
        };
        let computed = tail_mass(&ks, &s.y, s.eps, spec).and_then(|b_y| {
            weighted_ball_mass(&ks, &s.y, ball, &weight, spec).map(|lhs| (b_y, lhs))
        });
        let (b_y, lhs) = match computed {
            Ok(v) => v,
            Err(e) => {
                return Ok(BoundReport {
                    target: target_eintl(part),
                    samples: format!("{} point pairs", samples.len()),
                    max_ratio: F::nan(),
                    fitted: BTreeMap::new(),
                    verdict: Verdict::Inconclusive,
                    boundary_sup: false,
                    notes: format!("quadrature failed on a sample: {e}"),
                });
            }
        };
        let base = if part == 1 {
            (-power * r.ln()).exp()
        } else {
            (kernel.phi.log_eval(r) - power * r.ln()).exp()
        };
        rows.push((lhs, b_y, base));
    }

    let c_star = rows
        .iter()
        .map(|&(lhs, b_y, base)| lhs / base - b_y)
        .fold(F::zero(), F::max);
    let max_ratio = rows
        .iter()
        .map(|&(lhs, b_y, base)| lhs / ((b_y + c_star) * base))
        .fold(F::neg_infinity(), F::max);
    let verdict = if max_ratio.is_finite() && max_ratio <= F::one() + F::of(RATIO_SLACK) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut fitted = BTreeMap::new();
    fitted.insert(tag.to_string(), c_star);
    if part == 1 {
        fitted.insert("kappa".to_string(), kappa);
    }
    Ok(BoundReport {
        target: target_eintl(part),
        samples: format!("{} point pairs", samples.len()),
        max_ratio,
        fitted,
        verdict,
        boundary_sup: false,
        notes: String::new(),
    })
}

fn target_eintl(part: u8) -> String {
    if part == 1 {
        "small-ball intensity comparison (power weight)".to_string()
    } else {
        "unit-ball intensity comparison (profile weight)".to_string()
    }
}

fn corner_indices<F: Real>(grid: &Grid<F>) -> Vec<usize> {
    let d = grid.dim;
    let mut out = Vec::new();
    for mask in 0..(1usize << d) {
        let mut c = [0isize; 3];
        for (a, slot) in c.iter_mut().enumerate().take(d) {
            let half = (grid.axis_points(a) as isize - 1) / 2;
            *slot = if mask & (1 << a) != 0 { half } else { -half };
        }
        if let Some(flat) = grid.compose(c) {
            out.push(flat);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn on_grid_boundary<F: Real>(grid: &Grid<F>, flat: usize) -> bool {
    let c = grid.decompose(flat);
    (0..grid.dim).any(|a| c[a].unsigned_abs() as usize == (grid.axis_points(a) - 1) / 2)
}

/// Largest weighted level value `f_n(x, y) w(|y - x|)` over lattice pairs,
/// with the argmax's boundary status. Translation-invariant storage scans
/// corner sources, which realize every offset; general storage scans all
/// sources, subsampled if the pair count would be excessive.
fn weighted_level_sup<F: Real>(
    ik: &IteratedKernels<F>,
    level: usize,
    sources: &[usize],
    weight: &impl Fn(F) -> F,
) -> (F, bool) {
    let grid = &ik.gk.grid;
    let mut best = F::zero();
    let mut best_edge = false;
    for &i in sources {
        let xi = grid.point(i);
        for j in 0..grid.len() {
            if j == i {
                continue;
            }
            let v = ik.value_at(level, i, j);
            if !(v > F::zero()) {
                continue;
            }
            let r = dist(&xi, &grid.point(j));
            let val = v * weight(r);
            if val > best {
                best = val;
                best_edge = separation_near_window_edge(grid, i, j);
            }
        }
    }
    (best, best_edge)
}

/// Whether the pair's separation is within one cell of the largest the
/// box can realize on some axis; sups attained there are window-limited.
fn separation_near_window_edge<F: Real>(grid: &Grid<F>, i: usize, j: usize) -> bool {
    let ci = grid.decompose(i);
    let cj = grid.decompose(j);
    (0..grid.dim).any(|a| {
        let span = (grid.axis_points(a) - 1) as isize;
        (cj[a] - ci[a]).abs() >= span - 1
    })
}

fn level_sources<F: Real>(ik: &IteratedKernels<F>, n_max: usize) -> (Vec<usize>, String) {
    let grid = &ik.gk.grid;
    if ik.gk.is_invariant() {
        let corners = corner_indices(grid);
        let desc = format!("{} corner sources x {} targets", corners.len(), grid.len());
        (corners, desc)
    } else {
        let budget = (MAX_PAIR_SCANS / n_max.max(1)) / grid.len().max(1);
        let stride = (grid.len() + budget.max(1) - 1) / budget.max(1);
        let sources: Vec<usize> = (0..grid.len()).step_by(stride.max(1)).collect();
        let desc = format!("{} of {} sources x {} targets", sources.len(), grid.len(), grid.len());
        (sources, desc)
    }
}

/// Extracts the shift `c'` making `R(n) <= c n (b_bar + c')^(n-1)`
/// consistent across consecutive levels, then the prefactor `c`.
fn extract_growth_fit<F: Real>(sups: &[F], upto: usize, b_bar: F) -> (F, F) {
    let mut shift = F::zero();
    for n in 1..upto {
        let ratio = sups[n] * F::of(n as f64) / (sups[n - 1] * F::of((n + 1) as f64));
        shift = shift.max(ratio - b_bar);
    }
    let base = b_bar + shift;
    let mut prefactor = F::zero();
    let mut base_pow = F::one();
    for (idx, &r) in sups.iter().enumerate().take(upto) {
        let n = F::of((idx + 1) as f64);
        prefactor = prefactor.max(r / (n * base_pow));
        base_pow = base_pow * base;
    }
    (prefactor, shift)
}

/// Verifies the per-level sup growth `f_n(x, y) <= c n (b_bar + c')^(n-1)`
/// times the envelope, extracting `(c, c')`.
///
/// Part 1 weights level values by `|y - x|^(alpha+d)`; part 2 divides the
/// weight by the profile as well. Passing requires the extracted growth
/// base to move less than 20% when the level range doubles from
/// `n_max / 2` to `n_max`.
pub fn verify_estimate1<F: Real>(
    ik: &mut IteratedKernels<F>,
    part: u8,
    n_max: usize,
) -> Result<BoundReport<F>> {
    if !(part == 1 || part == 2) {
        return Err(Error::InvalidParam(format!("part {part} must be 1 or 2")));
    }
    if n_max < 4 {
        return Err(Error::InvalidParam(format!(
            "stability split needs n_max >= 4, got {n_max}"
        )));
    }
    ik.ensure_levels(n_max)?;
    let power = ik.gk.kernel.params.alpha + F::of(ik.gk.kernel.params.dim as f64);
    let phi = ik.gk.kernel.phi.clone();
    let weight = move |r: F| {
        let ln_w = if part == 1 {
            power * r.ln()
        } else {
            power * r.ln() - phi.log_eval(r)
        };
        ln_w.exp()
    };

    let (sources, sample_desc) = level_sources(ik, n_max);
    let mut sups = Vec::with_capacity(n_max);
    let mut boundary = false;
    for n in 1..=n_max {
        let (s, edge) = weighted_level_sup(ik, n, &sources, &weight);
        sups.push(s);
        boundary |= edge;
    }

    let b_bar = ik.gk.b_bar;
    let (c_full, shift_full) = extract_growth_fit(&sups, n_max, b_bar);
    let (_, shift_half) = extract_growth_fit(&sups, n_max / 2, b_bar);
    let base_full = b_bar + shift_full;
    let base_half = b_bar + shift_half;
    let stable = ((base_full - base_half) / base_half).abs() <= F::of(STABILITY_MARGIN);

    let mut max_ratio = F::zero();
    let mut base_pow = F::one();
    for (idx, &r) in sups.iter().enumerate() {
        let n = F::of((idx + 1) as f64);
        max_ratio = max_ratio.max(r / (c_full * n * base_pow));
        base_pow = base_pow * base_full;
    }

    let all_finite = sups.iter().all(|s| s.is_finite()) && c_full.is_finite();
    let verdict = if all_finite && stable && max_ratio <= F::one() + F::of(RATIO_SLACK) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut fitted = BTreeMap::new();
    if part == 1 {
        fitted.insert("c9".to_string(), c_full);
        fitted.insert("c7".to_string(), shift_full);
    } else {
        fitted.insert("c10".to_string(), c_full);
        fitted.insert("c11".to_string(), shift_full);
    }
    Ok(BoundReport {
        target: if part == 1 {
            "level sup growth (power weight)".to_string()
        } else {
            "level sup growth (profile weight)".to_string()
        },
        samples: format!("{sample_desc}, levels 1..={n_max}"),
        max_ratio,
        fitted,
        verdict,
        boundary_sup: boundary,
        notes: if stable {
            String::new()
        } else {
            format!(
                "growth base drifted from {:.6e} to {:.6e} when the level range doubled",
                base_half.as_f64(),
                base_full.as_f64()
            )
        },
    })
}

/// Excess truncated mass when the intensity is reweighted by `1/phi`,
/// maximized over base points: `sup_y integral over |z - y| > 1 of
/// (1/phi(|z - y|) - 1) f(y, z) dz`. Zero for the constant profile.
pub fn one_over_phi_mass_gap<F: Real>(
    kernel: &JumpKernel<F>,
    probes: &[[F; 3]],
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let p = &kernel.params;
    let sigma: F = crate::quad::sphere_surface(p.dim)?;
    // (1/phi - 1) f <= M rho^(-alpha-d), so the full radial integrand is
    // below M sigma rho^(-alpha-1).
    let tail = TailBound::Power {
        ln_coef: (p.m_upper * sigma).ln(),
        exponent: p.alpha + F::one(),
    };
    let breaks = kernel.phi.kink_radii();
    let power = p.alpha + F::of(p.dim as f64);
    let mut worst = F::zero();
    for y in probes {
        // The factorization (1 - phi) (f / phi) stays finite where 1/phi
        // overflows and f underflows; for the saturated intensity f / phi
        // is the pure power M rho^(-alpha-d) exactly.
        let g = |rho: F| {
            let log_phi = kernel.phi.log_eval(rho);
            let one_minus_phi = -log_phi.exp_m1();
            if one_minus_phi == F::zero() {
                return F::zero();
            }
            let over_phi = if kernel.is_saturated() {
                (p.m_upper.ln() - power * rho.ln()).exp()
            } else {
                let m = sphere_mean(kernel, y, rho, spec).unwrap_or_else(|_| F::nan());
                if m > F::zero() {
                    (m.ln() - log_phi).exp()
                } else {
                    F::zero()
                }
            };
            one_minus_phi * over_phi
        };
        let q = integrate_radial(g, F::one(), RadialUpper::Infinite(tail), p.dim, &breaks, spec)?;
        if !q.value.is_finite() {
            return Err(Error::Domain(
                "reweighted mass quadrature did not converge".into(),
            ));
        }
        worst = worst.max(q.value);
    }
    Ok(worst)
}

/// Verifies the mass-window bound `f_n(x, y) <= c12 b_bar^(d/alpha)
/// (b_bar^n - (b_bar - b(x))^n)` and the sup decay rate
/// `sup f_n ~ (b_bar + c15)^n n^(-d/alpha)`.
///
/// `c15` is the reweighted-mass excess from [`one_over_phi_mass_gap`];
/// the decay exponent is fitted on `log sup` against `log n` over the
/// upper half of the level range and must match `-d/alpha` within 0.3.
pub fn verify_estimate2_3<F: Real>(
    ik: &mut IteratedKernels<F>,
    n_max: usize,
    spec: &QuadratureSpec<F>,
) -> Result<BoundReport<F>> {
    let p = ik.gk.kernel.params;
    if !(p.eps < p.eps0 && p.eps < F::one()) {
        return Err(Error::InvalidParam(format!(
            "level decay needs eps below min(eps0, 1), got eps = {} with eps0 = {}",
            p.eps, p.eps0
        )));
    }
    if n_max < 4 {
        return Err(Error::InvalidParam(format!(
            "log-log fit needs n_max >= 4, got {n_max}"
        )));
    }
    ik.ensure_levels(n_max)?;
    let grid = ik.gk.grid;
    let d_over_alpha = F::of(p.dim as f64) / p.alpha;
    let b_bar = ik.gk.b_bar;

    let c15 = if ik.gk.is_invariant() {
        one_over_phi_mass_gap(&ik.gk.kernel, &[grid.point(grid.origin_index())], spec)?
    } else {
        let stride = (grid.len() / 32).max(1);
        let probes: Vec<[F; 3]> = (0..grid.len()).step_by(stride).map(|i| grid.point(i)).collect();
        one_over_phi_mass_gap(&ik.gk.kernel, &probes, spec)?
    };

    // Window bound: per-source denominators collapse for invariant
    // storage, where the atom is zero and the window mass is b_bar^n.
    let mut c12 = F::zero();
    let mut boundary = false;
    let prefactor = b_bar.powf(d_over_alpha);
    for n in 1..=n_max {
        let (sup, _, edge) = ik.sup_at_level(n);
        boundary |= edge;
        if ik.gk.is_invariant() {
            let window = b_bar.powi(n as i32);
            c12 = c12.max(sup / (prefactor * window));
        } else {
            for i in 0..grid.len() {
                let atom = ik.gk.atom_at(i);
                let window = b_bar.powi(n as i32) - atom.powi(n as i32);
                let mut row_sup = F::zero();
                for j in 0..grid.len() {
                    row_sup = row_sup.max(ik.value_at(n, i, j));
                }
                c12 = c12.max(row_sup / (prefactor * window));
            }
        }
    }

    // Decay rate of the normalized sups over the upper half of the range.
    let base = b_bar + c15;
    let mut norm_sups = Vec::with_capacity(n_max);
    let mut base_pow = F::one();
    for n in 1..=n_max {
        base_pow = base_pow * base;
        norm_sups.push(ik.sup_at_level(n).0 / base_pow);
    }
    let lo = (n_max / 2).max(2);
    let xs: Vec<F> = (lo..=n_max).map(|n| F::of(n as f64).ln()).collect();
    let ys: Vec<F> = (lo..=n_max).map(|n| norm_sups[n - 1].ln()).collect();
    let (_, slope, r2) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InvalidParam("too few levels for the decay fit".into()))?;

    let c14 = norm_sups
        .iter()
        .enumerate()
        .map(|(idx, &s)| s * F::of((idx + 1) as f64).powf(d_over_alpha) / base.powf(d_over_alpha))
        .fold(F::zero(), F::max);

    let slope_ok = (slope + d_over_alpha).abs() <= F::of(SLOPE_TOL);
    let verdict = if slope_ok && c12.is_finite() && c14.is_finite() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut fitted = BTreeMap::new();
    fitted.insert("c12".to_string(), c12);
    fitted.insert("c14".to_string(), c14);
    fitted.insert("c15".to_string(), c15);
    fitted.insert("slope".to_string(), slope);
    fitted.insert("slope_r2".to_string(), r2);
    Ok(BoundReport {
        target: "mass-window bound and level sup decay".to_string(),
        samples: format!("lattice sups, levels 1..={n_max}, fit over {lo}..={n_max}"),
        max_ratio: F::one(),
        fitted,
        verdict,
        boundary_sup: boundary,
        notes: format!(
            "fitted decay exponent {:.4} vs predicted {:.4}",
            slope.as_f64(),
            (-d_over_alpha).as_f64()
        ),
    })
}

/// Verifies the time-t density against the scale-vs-tail envelope
/// `min(t^(-d/alpha), t phi(|y - x|) |y - x|^(-alpha-d))`, extracting the
/// envelope factor as the sup of the pointwise ratio over the lattice
/// minus the source point.
///
/// The profile enters with its exact argument `|y - x|`; no rescaling is
/// applied. The atom is checked separately against `e^{-t b(x)}`.
pub fn verify_maint<F: Real>(
    dres: &DensityResult<F>,
    gk: &GridKernel<F>,
) -> Result<BoundReport<F>> {
    if gk.kernel.fingerprint() != dres.meta.kernel_fingerprint {
        return Err(Error::ConfigMismatch(
            "density and kernel come from different configurations".into(),
        ));
    }
    let p = gk.kernel.params;
    let grid = &dres.grid;
    let t = dres.t;
    let d_over_alpha = F::of(p.dim as f64) / p.alpha;
    let power = p.alpha + F::of(p.dim as f64);
    let cap = t.powf(-d_over_alpha);
    let src = grid.point(dres.source);

    let mut sup_ratio = F::zero();
    let mut boundary = false;
    for (j, &q) in dres.q.iter().enumerate() {
        if j == dres.source || q == F::zero() {
            continue;
        }
        let r = dist(&grid.point(j), &src);
        let tail = (t.ln() + gk.kernel.phi.log_eval(r) - power * r.ln()).exp();
        let ratio = q / cap.min(tail);
        if ratio > sup_ratio {
            sup_ratio = ratio;
            boundary = on_grid_boundary(grid, j);
        }
    }

    let atom_expected = (-t * gk.b_eps_at(dres.source)).exp();
    let atom_gap = (dres.atom - atom_expected).abs() / atom_expected;
    let atom_ok = atom_gap <= F::of(1e-12);

    let verdict = if sup_ratio.is_finite() && sup_ratio > F::zero() && atom_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut fitted = BTreeMap::new();
    fitted.insert("envelope_factor".to_string(), sup_ratio);
    fitted.insert("atom_gap_rel".to_string(), atom_gap);
    Ok(BoundReport {
        target: "density under the scale-vs-tail envelope".to_string(),
        samples: format!("{} lattice points at t = {}", grid.len() - 1, t.as_f64()),
        max_ratio: F::one(),
        fitted,
        verdict,
        boundary_sup: boundary,
        notes: String::new(),
    })
}

/// Extracts a witness pair `(C1, C2)` with `sup_ratio(t) <= C1 e^(C2 t)`
/// at every sample. The growth rate comes from a log-space least-squares
/// fit clamped at zero (the envelope form has no decaying branch), and the
/// prefactor is then lifted until it dominates all samples.
pub fn fit_envelope_constants<F: Real>(points: &[(F, F)]) -> Result<(F, F)> {
    if points.len() < 2 {
        return Err(Error::InvalidParam(
            "envelope fit needs at least two time points".into(),
        ));
    }
    if points.iter().any(|&(t, s)| !t.is_finite() || !(s > F::zero()) || !s.is_finite()) {
        return Err(Error::InvalidParam(
            "envelope fit needs positive finite ratios".into(),
        ));
    }
    let xs: Vec<F> = points.iter().map(|&(t, _)| t).collect();
    let ys: Vec<F> = points.iter().map(|&(_, s)| s.ln()).collect();
    let (_, slope, _) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InvalidParam("degenerate time grid".into()))?;
    let c2 = slope.max(F::zero());
    let c1 = points
        .iter()
        .map(|&(t, s)| s * (-c2 * t).exp())
        .fold(F::neg_infinity(), F::max);
    Ok((c1, c2))
}
