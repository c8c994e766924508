//! Closed-form intersection volumes of two balls in dimensions 1 to 3, and
//! the volume bound used when splitting a convolution region into shell
//! cells.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Volume of `B(x, r1) intersect B(y, r2)` where `dist = |y - x|`.
pub fn ball_intersection_volume<F: Real>(dim: usize, dist: F, r1: F, r2: F) -> Result<F> {
    if !(dist >= F::zero()) || !(r1 > F::zero()) || !(r2 > F::zero()) {
        return Err(Error::InvalidParam(format!(
            "ball intersection needs dist >= 0 and positive radii, got ({dist}, {r1}, {r2})"
        )));
    }
    let zero = F::zero();
    let two = F::of(2.0);
    if dist >= r1 + r2 {
        return Ok(zero);
    }
    let rmin = r1.min(r2);
    match dim {
        1 => Ok((r1 + r2 - dist).min(two * rmin)),
        2 => {
            if dist <= (r1 - r2).abs() {
                return Ok(F::of(std::f64::consts::PI) * rmin * rmin);
            }
            // Sum of the two circular segments cut off by the radical line.
            // d1 may be negative when the lens covers past a center.
            let d1 = (dist * dist + r1 * r1 - r2 * r2) / (two * dist);
            let d2 = dist - d1;
            let seg = |r: F, d: F| {
                let c = (d / r).max(-F::one()).min(F::one());
                r * r * c.acos() - d * (r * r - d * d).max(zero).sqrt()
            };
            Ok(seg(r1, d1) + seg(r2, d2))
        }
        3 => {
            let pi = F::of(std::f64::consts::PI);
            if dist <= (r1 - r2).abs() {
                return Ok(F::of(4.0 / 3.0) * pi * rmin * rmin * rmin);
            }
            let s = r1 + r2 - dist;
            let num = dist * dist + two * dist * (r1 + r2) - F::of(3.0) * (r1 - r2) * (r1 - r2);
            Ok(pi * s * s * num / (F::of(12.0) * dist))
        }
        _ => Err(Error::Unsupported(format!("dimension {dim} not in 1..=3"))),
    }
}

/// One row of the shell-cell volume check: the cell `(p, k)` at separation
/// `n`, its intersection volume, and the comparison value
/// `k^{(d+1)/2} min(p+k, n-p)^{(d-1)/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeRow<F: Real> {
    pub p: usize,
    pub k: usize,
    pub volume: F,
    pub reference: F,
    pub ratio: F,
}

/// Result of sweeping the volume bound over all shell cells at separation `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeBoundReport<F: Real> {
    pub dim: usize,
    pub n: usize,
    /// Smallest constant making the bound hold over every cell.
    pub c: F,
    pub worst_p: usize,
    pub worst_k: usize,
    pub rows: Vec<VolumeRow<F>>,
}

/// Checks that `vol(B(0, p+k) intersect B(n e_1, n-p))` is controlled by
/// `c k^{(d+1)/2} min(p+k, n-p)^{(d-1)/2}` over `1 <= p < n`, `1 <= k <= n-p`,
/// and extracts the smallest such `c`.
pub fn verify_volumeest<F: Real>(dim: usize, n: usize) -> Result<VolumeBoundReport<F>> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("separation n = {n} must be >= 2")));
    }
    let nf = F::of_usize(n);
    let half = F::of(0.5);
    let mut rows = Vec::new();
    let mut c = F::zero();
    let (mut worst_p, mut worst_k) = (0usize, 0usize);
    for p in 1..n {
        for k in 1..=(n - p) {
            let r1 = F::of_usize(p + k);
            let r2 = F::of_usize(n - p);
            let volume = ball_intersection_volume(dim, nf, r1, r2)?;
            let kf = F::of_usize(k);
            let reference = kf.powf(F::of_usize(dim + 1) * half)
                * r1.min(r2).powf(F::of_usize(dim - 1) * half);
            let ratio = volume / reference;
            if ratio > c {
                c = ratio;
                worst_p = p;
                worst_k = k;
            }
            rows.push(VolumeRow {
                p,
                k,
                volume,
                reference,
                ratio,
            });
        }
    }
    Ok(VolumeBoundReport {
        dim,
        n,
        c,
        worst_p,
        worst_k,
        rows,
    })
}
