//! Jump kernels dominated by a tempered power-law envelope.
//!
//! A kernel is an intensity `f(x, y) >= 0` bounded by
//! `M phi(|y - x|) |y - x|^{-alpha - dim}` for a tempering profile `phi`.
//! The saturated kernel equals its envelope; custom intensities are wrapped
//! with flags describing their symmetries and are spot-checked against the
//! envelope at construction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::profile::PhiProfile;
use crate::quad::{integrate_piecewise, integrate_radial, QuadratureSpec, RadialUpper};
use crate::scalar::Real;

/// Model parameters shared by every kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<F: Real> {
    /// Stability index in (0, 2).
    pub alpha: F,
    /// Ambient dimension, 1 to 3.
    pub dim: usize,
    /// Envelope constant M.
    pub m_upper: F,
    /// Truncation radius in (0, 1].
    pub eps: F,
    /// Radius below which small-truncation constants are certified.
    pub eps0: F,
}

impl<F: Real> ModelParams<F> {
    pub fn new(alpha: F, dim: usize, m_upper: F, eps: F) -> Result<Self> {
        let p = ModelParams {
            alpha,
            dim,
            m_upper,
            eps,
            eps0: F::one(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > F::zero()) || !(self.alpha < F::of(2.0)) {
            return Err(Error::InvalidParam(format!(
                "alpha {} must lie in (0, 2)",
                self.alpha
            )));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Unsupported(format!(
                "dimension {} not in 1..=3",
                self.dim
            )));
        }
        if !(self.m_upper > F::zero()) || !self.m_upper.is_finite() {
            return Err(Error::InvalidParam(format!(
                "envelope constant {} must be positive and finite",
                self.m_upper
            )));
        }
        if !(self.eps > F::zero()) || self.eps > F::one() {
            return Err(Error::InvalidParam(format!(
                "truncation radius {} must lie in (0, 1]",
                self.eps
            )));
        }
        if !(self.eps0 > F::zero()) {
            return Err(Error::InvalidParam(format!(
                "eps0 {} must be positive",
                self.eps0
            )));
        }
        Ok(())
    }
}

/// Structural properties a custom intensity declares about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelFlags {
    /// `f(x, y)` depends only on `y - x`.
    pub translation_invariant: bool,
    /// `f(x, x + h) = f(x, x - h)`.
    pub symmetric_increments: bool,
    /// `f(x, y) = f(y, x)`.
    pub symmetric_arguments: bool,
}

impl KernelFlags {
    pub fn all() -> Self {
        KernelFlags {
            translation_invariant: true,
            symmetric_increments: true,
            symmetric_arguments: true,
        }
    }
}

/// The intensity function itself.
#[derive(Clone)]
pub enum Intensity<F: Real> {
    /// Exactly the dominating envelope.
    Saturated,
    /// Arbitrary nonnegative intensity below the envelope.
    Custom(Arc<dyn Fn(&[F; 3], &[F; 3]) -> F + Send + Sync>),
}

impl<F: Real> std::fmt::Debug for Intensity<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Intensity::Saturated => write!(f, "Saturated"),
            Intensity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Euclidean distance between two points (coordinates past `dim` are zero).
pub fn dist<F: Real>(x: &[F; 3], y: &[F; 3]) -> F {
    let dx = y[0] - x[0];
    let dy = y[1] - x[1];
    let dz = y[2] - x[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A jump intensity together with its envelope data.
#[derive(Debug, Clone)]
pub struct JumpKernel<F: Real> {
    pub params: ModelParams<F>,
    pub phi: PhiProfile<F>,
    intensity: Intensity<F>,
    pub flags: KernelFlags,
}

impl<F: Real> JumpKernel<F> {
    /// Kernel equal to its dominating envelope.
    pub fn saturated(params: ModelParams<F>, phi: PhiProfile<F>) -> Result<Self> {
        params.validate()?;
        Ok(JumpKernel {
            params,
            phi,
            intensity: Intensity::Saturated,
            flags: KernelFlags::all(),
        })
    }

    /// Custom intensity. Spot-checks domination on a deterministic sample of
    /// displacements around a few base points and rejects violations.
    pub fn with_intensity(
        params: ModelParams<F>,
        phi: PhiProfile<F>,
        f: Arc<dyn Fn(&[F; 3], &[F; 3]) -> F + Send + Sync>,
        flags: KernelFlags,
    ) -> Result<Self> {
        params.validate()?;
        let k = JumpKernel {
            params,
            phi,
            intensity: Intensity::Custom(f),
            flags,
        };
        k.spot_check_domination()?;
        Ok(k)
    }

    fn spot_check_domination(&self) -> Result<()> {
        let dim = self.params.dim;
        let eps = self.params.eps;
        let bases: [[F; 3]; 3] = [
            [F::zero(); 3],
            [F::of(0.37), F::of(-1.21), F::of(0.64)],
            [F::of(-2.5), F::of(0.11), F::of(1.9)],
        ];
        let dirs: [[f64; 3]; 4] = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.577_350_269, 0.577_350_269, 0.577_350_269],
            [-0.707_106_781, 0.707_106_781, 0.0],
        ];
        for base in &bases {
            let mut x = [F::zero(); 3];
            x[..dim].copy_from_slice(&base[..dim]);
            for d in &dirs {
                for k in 0..40 {
                    let rho = eps * F::of(0.5) * F::of(1.3f64.powi(k));
                    let mut y = x;
                    for (c, dc) in y.iter_mut().zip(d.iter()).take(dim) {
                        *c += rho * F::of(*dc);
                    }
                    let r = dist(&x, &y);
                    if r == F::zero() {
                        continue;
                    }
                    let val = self.eval(&x, &y);
                    let env = self.envelope(r);
                    if val > env * F::of(1.0 + 1e-9) {
                        return Err(Error::DominationViolated {
                            displacement: r.as_f64(),
                            ratio: (val / env).as_f64(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self.intensity, Intensity::Saturated)
    }

    /// Dominating envelope `M phi(r) r^{-alpha-dim}` at displacement `r`.
    pub fn envelope(&self, r: F) -> F {
        self.log_envelope(r).exp()
    }

    /// `ln` of the envelope; finite even where the value underflows.
    pub fn log_envelope(&self, r: F) -> F {
        self.params.m_upper.ln() + self.phi.log_eval(r)
            - (self.params.alpha + F::of_usize(self.params.dim)) * r.ln()
    }

    /// Untruncated intensity `f(x, y)`; zero on the diagonal.
    pub fn eval(&self, x: &[F; 3], y: &[F; 3]) -> F {
        let r = dist(x, y);
        if r == F::zero() {
            return F::zero();
        }
        match &self.intensity {
            Intensity::Saturated => self.envelope(r),
            Intensity::Custom(f) => f(x, y),
        }
    }

    /// Truncated intensity: zero for displacements at or below `eps`.
    pub fn eval_trunc(&self, x: &[F; 3], y: &[F; 3]) -> F {
        if dist(x, y) <= self.params.eps {
            F::zero()
        } else {
            self.eval(x, y)
        }
    }

    /// Same kernel with a different truncation radius. The intensity and
    /// its domination certificate are unchanged, so no re-check is needed.
    pub fn with_eps(&self, eps: F) -> Result<Self> {
        let mut params = self.params;
        params.eps = eps;
        params.validate()?;
        Ok(JumpKernel {
            params,
            phi: self.phi.clone(),
            intensity: self.intensity.clone(),
            flags: self.flags,
        })
    }

    /// Stable fingerprint of the model structure, used to guard against
    /// comparing artifacts from different configurations. FNV-1a over a
    /// canonical description; not cryptographic.
    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "alpha={};dim={};M={};eps={};phi={};intensity={:?};flags={:?}",
            self.params.alpha.as_f64(),
            self.params.dim,
            self.params.m_upper.as_f64(),
            self.params.eps.as_f64(),
            self.phi,
            matches!(self.intensity, Intensity::Saturated),
            self.flags,
        );
        fnv1a(desc.as_bytes())
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

/// Mean of `f(x, x + rho u)` over unit directions `u`.
pub(crate) fn sphere_mean<F: Real>(
    kernel: &JumpKernel<F>,
    x: &[F; 3],
    rho: F,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    let at = |u: [F; 3]| {
        let y = [x[0] + rho * u[0], x[1] + rho * u[1], x[2] + rho * u[2]];
        kernel.eval(x, &y)
    };
    match kernel.params.dim {
        1 => Ok((at([F::one(), F::zero(), F::zero()]) + at([-F::one(), F::zero(), F::zero()]))
            * F::of(0.5)),
        2 => {
            let two_pi = F::of(2.0 * std::f64::consts::PI);
            let q = integrate_piecewise(
                |th: F| at([th.cos(), th.sin(), F::zero()]),
                F::zero(),
                two_pi,
                &[],
                spec,
            )?;
            Ok(q.value / two_pi)
        }
        3 => {
            let pi = F::of(std::f64::consts::PI);
            let two_pi = pi + pi;
            let q = integrate_piecewise(
                |th: F| {
                    let (s, c) = (th.sin(), th.cos());
                    let az = integrate_piecewise(
                        |ph: F| at([s * ph.cos(), s * ph.sin(), c]),
                        F::zero(),
                        two_pi,
                        &[],
                        spec,
                    )
                    .map(|r| r.value)
                    .unwrap_or_else(|_| F::nan());
                    az * s
                },
                F::zero(),
                pi,
                &[],
                spec,
            )?;
            Ok(q.value / (F::of(4.0) * pi))
        }
        d => Err(Error::Unsupported(format!("dimension {d} not in 1..=3"))),
    }
}

/// Total intensity mass outside radius `radius` around `x`:
/// `integral over |y - x| > radius of f(x, y) dy`.
///
/// Errors when `radius <= 0` (the envelope pole makes the mass divergent).
pub fn tail_mass<F: Real>(
    kernel: &JumpKernel<F>,
    x: &[F; 3],
    radius: F,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    if !(radius > F::zero()) {
        return Err(Error::Domain(format!(
            "tail mass needs radius > 0, got {radius} (mass diverges at 0)"
        )));
    }
    let p = &kernel.params;
    let sigma: F = crate::quad::sphere_surface(p.dim)?;
    // Full radial integrand is bounded by M sigma phi(rho) rho^{-alpha-1}.
    let tail = kernel
        .phi
        .decay_tail(p.alpha + F::one())?
        .scale_ln((p.m_upper * sigma).ln());
    let breaks = kernel.phi.kink_radii();
    let q = match &kernel.intensity {
        Intensity::Saturated => integrate_radial(
            |rho: F| kernel.envelope(rho),
            radius,
            RadialUpper::Infinite(tail),
            p.dim,
            &breaks,
            spec,
        )?,
        Intensity::Custom(_) => {
            let inner_spec = QuadratureSpec {
                rel_tol: spec.rel_tol * F::of(0.1),
                ..*spec
            };
            integrate_radial(
                |rho: F| sphere_mean(kernel, x, rho, &inner_spec).unwrap_or_else(|_| F::nan()),
                radius,
                RadialUpper::Infinite(tail),
                p.dim,
                &breaks,
                spec,
            )?
        }
    };
    Ok(q.value)
}
