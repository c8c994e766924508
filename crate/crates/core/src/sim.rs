//! Monte Carlo simulation of the truncated jump process by thinning, as a
//! stochastic oracle independent of the series evaluator.
//!
//! Proposals arrive at the constant rate of the pure power envelope
//! `M |h|^(-alpha-d)` outside the truncation radius, whose radial inverse
//! CDF is closed form; a proposal is accepted with probability
//! `f(x, x + h) / (M |h|^(-alpha-d))`, which domination keeps in `[0, 1]`.
//! The accepted-jump process then has exactly the truncated intensity, so
//! its time-t law is the same object the series evaluator approximates and
//! the two methods check each other up to Monte Carlo error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::assumptions::Verdict;
use crate::engine::{DensityResult, RunMeta};
use crate::error::{Error, Result};
use crate::kernel::{dist, JumpKernel};
use crate::quad::sphere_surface;
use crate::scalar::Real;

/// Terminal-position histogram layout: signed bins along the axis in one
/// dimension, radial shells around the source otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec<F: Real> {
    pub dim: usize,
    /// Half width of the box the bins must cover.
    pub half_width: F,
    /// Width of one bin.
    pub width: F,
    count: usize,
}

impl<F: Real> BinSpec<F> {
    pub fn new(dim: usize, half_width: F, width: F) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParam(format!("dimension {dim} not in 1..=3")));
        }
        if !(width > F::zero()) || !width.is_finite() || !(half_width >= width) {
            return Err(Error::InvalidParam(format!(
                "need 0 < width <= half_width, got width {width}, half width {half_width}"
            )));
        }
        // Radial shells must reach the box corners, not just the face.
        let reach = if dim == 1 {
            half_width + half_width
        } else {
            half_width * F::of(dim as f64).sqrt()
        };
        let count = (reach / width).ceil().as_f64() as usize;
        Ok(BinSpec {
            dim,
            half_width,
            width,
            count: count.max(1),
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Lower edge of the signed layout; bins span `[lo, lo + count * width]`.
    fn lo(&self) -> F {
        -(F::of(self.count as f64) * self.width) * F::of(0.5)
    }

    /// Bin holding a terminal position, or `None` when it falls outside
    /// the covered span.
    pub fn index_of(&self, y: &[F; 3], source: &[F; 3]) -> Option<usize> {
        let offset = if self.dim == 1 {
            y[0] - self.lo()
        } else {
            dist(y, source)
        };
        if offset < F::zero() {
            return None;
        }
        let idx = (offset / self.width).floor().as_f64() as usize;
        (idx < self.count).then_some(idx)
    }

    /// Signed center in one dimension, shell mid-radius otherwise.
    pub fn center(&self, idx: usize) -> F {
        let mid = (F::of(idx as f64) + F::of(0.5)) * self.width;
        if self.dim == 1 {
            self.lo() + mid
        } else {
            mid
        }
    }
}

/// One simulation run: kernel, horizon, path budget, seed, and bins.
#[derive(Debug, Clone)]
pub struct SimConfig<F: Real> {
    pub kernel: JumpKernel<F>,
    pub source: [F; 3],
    pub t_horizon: F,
    pub n_paths: usize,
    pub seed: u64,
    pub bins: BinSpec<F>,
}

/// Binned terminal-position masses with binomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDensity<F: Real> {
    pub bins: BinSpec<F>,
    /// Terminal positions per bin, excluding zero-jump paths.
    pub counts: Vec<u64>,
    /// Terminal positions per bin among paths with exactly one accepted
    /// jump; their displacement law is the normalized truncated intensity.
    pub single_jump_counts: Vec<u64>,
    /// Paths with zero accepted jumps by the horizon.
    pub n_atom: u64,
    /// Paths ending inside the safety box but outside the binned span.
    pub n_outside: u64,
    /// Paths flagged for leaving the safety box; simulation stops there.
    pub n_overflow: u64,
    pub n_paths: usize,
    pub meta: RunMeta,
}

impl<F: Real> EmpiricalDensity<F> {
    /// Fraction of paths ending in the bin.
    pub fn mass(&self, idx: usize) -> F {
        F::of(self.counts[idx] as f64) / F::of(self.n_paths as f64)
    }

    /// Binomial standard error of [`Self::mass`].
    pub fn std_error(&self, idx: usize) -> F {
        let p = self.mass(idx);
        (p * (F::one() - p) / F::of(self.n_paths as f64)).sqrt()
    }

    pub fn atom_estimate(&self) -> F {
        F::of(self.n_atom as f64) / F::of(self.n_paths as f64)
    }

    pub fn atom_std_error(&self) -> F {
        let p = self.atom_estimate();
        (p * (F::one() - p) / F::of(self.n_paths as f64)).sqrt()
    }

    /// `(center, width, mass, standard error)` rows for reporting.
    pub fn rows(&self) -> impl Iterator<Item = (F, F, F, F)> + '_ {
        (0..self.bins.count()).map(|i| {
            (
                self.bins.center(i),
                self.bins.width,
                self.mass(i),
                self.std_error(i),
            )
        })
    }
}

/// Paths straying this many half-widths from the source stop and count as
/// overflow; returns from that far within desk-scale horizons are beyond
/// Monte Carlo resolution.
const SAFETY_FACTOR: f64 = 100.0;

#[derive(Clone)]
struct Histogram {
    counts: Vec<u64>,
    single: Vec<u64>,
    atom: u64,
    outside: u64,
    overflow: u64,
}

impl Histogram {
    fn empty(count: usize) -> Self {
        Histogram {
            counts: vec![0; count],
            single: vec![0; count],
            atom: 0,
            outside: 0,
            overflow: 0,
        }
    }

    fn merge(mut self, other: Histogram) -> Histogram {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.single.iter_mut().zip(&other.single) {
            *a += b;
        }
        self.atom += other.atom;
        self.outside += other.outside;
        self.overflow += other.overflow;
        self
    }
}

enum PathEnd {
    Atom,
    Bin { idx: usize, single: bool },
    Outside,
    Overflow,
}

/// Runs one path on its own RNG stream; draws go waiting time, radius,
/// direction, acceptance, in that fixed order.
fn run_path<F: Real>(cfg: &SimConfig<F>, rate: F, path: u64) -> PathEnd {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path + 1);

    let p = &cfg.kernel.params;
    let exponent = p.alpha + F::of(p.dim as f64);
    let inv_alpha = p.alpha.recip();
    let safety = cfg.bins.half_width * F::of(SAFETY_FACTOR);
    let two_pi = F::of(2.0 * std::f64::consts::PI);

    let mut pos = cfg.source;
    let mut jumps = 0u64;
    let mut clock = F::zero();
    loop {
        let u_wait = F::one() - F::of(rng.random::<f64>());
        clock = clock - u_wait.ln() / rate;
        if clock > cfg.t_horizon {
            break;
        }
        let u_radius = F::one() - F::of(rng.random::<f64>());
        let rho = p.eps * u_radius.powf(-inv_alpha);
        let dir = match p.dim {
            1 => {
                let sign = if F::of(rng.random::<f64>()) < F::of(0.5) {
                    -F::one()
                } else {
                    F::one()
                };
                [sign, F::zero(), F::zero()]
            }
            2 => {
                let theta = two_pi * F::of(rng.random::<f64>());
                [theta.cos(), theta.sin(), F::zero()]
            }
            _ => {
                let z = F::of(2.0) * F::of(rng.random::<f64>()) - F::one();
                let az = two_pi * F::of(rng.random::<f64>());
                let s = (F::one() - z * z).max(F::zero()).sqrt();
                [s * az.cos(), s * az.sin(), z]
            }
        };
        let y = [
            pos[0] + rho * dir[0],
            pos[1] + rho * dir[1],
            pos[2] + rho * dir[2],
        ];
        let u_accept = F::of(rng.random::<f64>());
        // f / (M rho^(-alpha-d)), computed with the positive power so huge
        // proposals cannot turn it into 0/0.
        let ratio = cfg.kernel.eval(&pos, &y) * rho.powf(exponent) / p.m_upper;
        if u_accept < ratio {
            pos = y;
            jumps += 1;
            let strayed = (0..p.dim).any(|a| (pos[a] - cfg.source[a]).abs() > safety);
            if strayed {
                return PathEnd::Overflow;
            }
        }
    }

    if jumps == 0 {
        return PathEnd::Atom;
    }
    match cfg.bins.index_of(&pos, &cfg.source) {
        Some(idx) => PathEnd::Bin {
            idx,
            single: jumps == 1,
        },
        None => PathEnd::Outside,
    }
}

/// Simulates `n_paths` independent paths of the truncated process and bins
/// their terminal positions.
///
/// Each path draws from its own counter-based stream keyed by the seed and
/// the path index, so results are reproducible and independent of how the
/// paths are partitioned across threads.
pub fn simulate_paths<F: Real>(cfg: &SimConfig<F>) -> Result<EmpiricalDensity<F>> {
    let p = &cfg.kernel.params;
    if cfg.bins.dim != p.dim {
        return Err(Error::ConfigMismatch(format!(
            "bins are {}d but the kernel is {}d",
            cfg.bins.dim, p.dim
        )));
    }
    if !(cfg.t_horizon > F::zero()) || !cfg.t_horizon.is_finite() {
        return Err(Error::InvalidParam(format!(
            "horizon {} must be positive and finite",
            cfg.t_horizon
        )));
    }
    if cfg.n_paths == 0 {
        return Err(Error::InvalidParam("need at least one path".into()));
    }

    // Full mass of the dominating envelope M |h|^(-alpha-d) outside eps.
    let sigma: F = sphere_surface(p.dim)?;
    let rate = p.m_upper * sigma * p.eps.powf(-p.alpha) / p.alpha;

    let hist = (0..cfg.n_paths as u64)
        .into_par_iter()
        .fold(
            || Histogram::empty(cfg.bins.count()),
            |mut h, i| {
                match run_path(cfg, rate, i) {
                    PathEnd::Atom => h.atom += 1,
                    PathEnd::Bin { idx, single } => {
                        h.counts[idx] += 1;
                        if single {
                            h.single[idx] += 1;
                        }
                    }
                    PathEnd::Outside => h.outside += 1,
                    PathEnd::Overflow => h.overflow += 1,
                }
                h
            },
        )
        .reduce(|| Histogram::empty(cfg.bins.count()), Histogram::merge);

    let meta = RunMeta {
        kernel_fingerprint: cfg.kernel.fingerprint(),
        alpha: p.alpha.as_f64(),
        dim: p.dim,
        eps: p.eps.as_f64(),
        t: cfg.t_horizon.as_f64(),
        source: [
            cfg.source[0].as_f64(),
            cfg.source[1].as_f64(),
            cfg.source[2].as_f64(),
        ],
    };
    Ok(EmpiricalDensity {
        bins: cfg.bins,
        counts: hist.counts,
        single_jump_counts: hist.single,
        n_atom: hist.atom,
        n_outside: hist.outside,
        n_overflow: hist.overflow,
        n_paths: cfg.n_paths,
        meta,
    })
}

/// Per-bin z-score summary of simulation against the series density.
#[derive(Debug, Clone)]
pub struct SeriesComparison<F: Real> {
    pub verdict: Verdict,
    /// Bins with expected count at least [`MIN_EXPECTED_COUNT`].
    pub n_tested: usize,
    /// Tested bins with `|z| <= 3`.
    pub n_within: usize,
    pub fraction_within: F,
    pub worst_z: F,
    /// Atom z-score against `e^{-t b(source)}`.
    pub atom_z: F,
    pub atom_expected: F,
}

/// Bins below this expected count are excluded from the z-score test.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;
/// Fewer testable bins than this cannot support a verdict.
pub const MIN_TESTED_BINS: usize = 10;
const Z_GATE: f64 = 3.0;
const PASS_FRACTION: f64 = 0.99;

/// Compares binned terminal masses against the series density, bin by bin.
///
/// The density is piecewise constant over lattice cells, so in one
/// dimension each cell's mass is split exactly across the bins it
/// overlaps. Radial shells assign whole cells by center radius, which is
/// adequate when the shell width is large against the spacing. Both
/// artifacts must carry the same run metadata; mixing configurations is
/// rejected.
pub fn compare_to_series<F: Real>(
    emp: &EmpiricalDensity<F>,
    series: &DensityResult<F>,
) -> Result<SeriesComparison<F>> {
    emp.meta.ensure_matches(&series.meta)?;
    let grid = &series.grid;
    let cell = grid.cell_volume();
    let source_point = grid.point(series.source);

    let mut expected = vec![F::zero(); emp.bins.count()];
    if emp.bins.dim == 1 {
        let half_h = grid.spacing * F::of(0.5);
        let lo0 = emp.bins.lo();
        let w = emp.bins.width;
        for (i, &q) in series.q.iter().enumerate() {
            let c = grid.point(i)[0];
            let (cl, ch) = (c - half_h, c + half_h);
            let b_lo = ((cl - lo0) / w).floor().as_f64() as isize;
            let b_hi = ((ch - lo0) / w).floor().as_f64() as isize;
            for b in b_lo..=b_hi {
                if b < 0 || b as usize >= emp.bins.count() {
                    continue;
                }
                let bin_lo = lo0 + w * F::of(b as f64);
                let overlap = (ch.min(bin_lo + w) - cl.max(bin_lo)).max(F::zero());
                expected[b as usize] = expected[b as usize] + q * overlap;
            }
        }
    } else {
        for (i, &q) in series.q.iter().enumerate() {
            if let Some(b) = emp.bins.index_of(&grid.point(i), &source_point) {
                expected[b] = expected[b] + q * cell;
            }
        }
    }

    let n = F::of(emp.n_paths as f64);
    let mut n_tested = 0usize;
    let mut n_within = 0usize;
    let mut worst_z = F::zero();
    for (b, &p_exp) in expected.iter().enumerate() {
        let exp_count = p_exp * n;
        if exp_count < F::of(MIN_EXPECTED_COUNT) {
            continue;
        }
        n_tested += 1;
        let sigma = (exp_count * (F::one() - p_exp)).sqrt();
        let z = (F::of(emp.counts[b] as f64) - exp_count) / sigma;
        if z.abs() <= F::of(Z_GATE) {
            n_within += 1;
        }
        worst_z = if z.abs() > worst_z.abs() { z } else { worst_z };
    }

    let atom_sigma = (n * series.atom * (F::one() - series.atom)).sqrt();
    let atom_z = (F::of(emp.n_atom as f64) - n * series.atom) / atom_sigma;

    let fraction_within = if n_tested == 0 {
        F::zero()
    } else {
        F::of(n_within as f64) / F::of(n_tested as f64)
    };
    let verdict = if n_tested < MIN_TESTED_BINS {
        Verdict::Inconclusive
    } else if fraction_within >= F::of(PASS_FRACTION) && atom_z.abs() <= F::of(Z_GATE) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SeriesComparison {
        verdict,
        n_tested,
        n_within,
        fraction_within,
        worst_z,
        atom_z,
        atom_expected: series.atom,
    })
}
