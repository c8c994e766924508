//! Tempering profiles: bounded radial factors multiplying the heavy-tail
//! envelope of a jump intensity.
//!
//! A profile is a function `phi: [0, inf) -> (0, 1]` with `phi(s) = 1` for
//! `s <= 1`. Beyond radius 1 each family decays (or stays constant) in its
//! own way; constructors reject parameter choices whose sup exceeds 1.

use std::fmt;

use crate::error::{Error, Result};
use crate::quad::TailBound;
use crate::scalar::Real;

/// Radial tempering factor. All variants evaluate to exactly 1 on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiProfile<F: Real> {
    /// `phi(s) = 1` everywhere: the pure power-law envelope.
    ConstantOne,
    /// `phi(s) = exp(-m s^beta) s^gamma` for `s > 1`.
    ///
    /// `gamma` may be negative. Note the value jumps from 1 to `exp(-m)` at
    /// `s = 1`; only boundedness, not continuity, is required of profiles.
    ExpPower { m: F, beta: F, gamma: F },
    /// `phi(s) = s^{-gamma}` for `s > 1`, with `gamma > 0`.
    PolyDecay { gamma: F },
    /// `phi(s) = 1 / (1 + ln s)` for `s > 1`.
    LogDecay,
    /// `phi(s) = 1 / ln(e + ln s)` for `s > 1`; decays slower than any power
    /// of `ln s`.
    LogLogDecay,
    /// Piecewise log-linear interpolation through `(radius, value)` knots
    /// with radii `>= 1`; the last segment's slope is extended past the last
    /// knot.
    Tabulated { knots: Vec<(F, F)> },
}

impl<F: Real> PhiProfile<F> {
    /// Exponentially tempered profile. Fails if the parameters let the value
    /// exceed 1 anywhere (possible when `gamma > 0`).
    pub fn exp_power(m: F, beta: F, gamma: F) -> Result<Self> {
        if !(m > F::zero()) || !m.is_finite() {
            return Err(Error::InvalidParam(format!("exp-power m must be > 0, got {m}")));
        }
        if !(beta > F::zero()) || !beta.is_finite() {
            return Err(Error::InvalidParam(format!(
                "exp-power beta must be > 0, got {beta}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParam(format!("exp-power gamma must be finite, got {gamma}")));
        }
        let p = PhiProfile::ExpPower { m, beta, gamma };
        if gamma > F::zero() {
            // Interior maximum of ln phi at s* = (gamma / (m beta))^{1/beta}.
            let s_star = (gamma / (m * beta)).powf(beta.recip());
            if s_star > F::one() {
                let ln_max = p.log_eval(s_star);
                if ln_max > F::of(1e-9) {
                    return Err(Error::ProfileAboveOne {
                        radius: s_star.as_f64(),
                        value: ln_max.exp().as_f64(),
                    });
                }
            }
        }
        Ok(p)
    }

    /// Power-law decay `s^{-gamma}` beyond radius 1.
    pub fn poly_decay(gamma: F) -> Result<Self> {
        if !(gamma > F::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "poly-decay gamma must be > 0, got {gamma}"
            )));
        }
        Ok(PhiProfile::PolyDecay { gamma })
    }

    /// Tabulated profile through the given knots.
    ///
    /// Radii must be strictly increasing and `>= 1`; values must lie in
    /// `(0, 1]`. The tail extrapolation (last segment's log-slope) must not
    /// grow, otherwise the profile would eventually exceed 1.
    pub fn tabulated(knots: Vec<(F, F)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidParam("tabulated profile needs at least one knot".into()));
        }
        let mut prev_r = F::one() - F::of(1e-12);
        for &(r, v) in &knots {
            if !(r >= F::one()) || !r.is_finite() {
                return Err(Error::InvalidParam(format!("knot radius {r} must be >= 1")));
            }
            if r <= prev_r {
                return Err(Error::InvalidParam(format!(
                    "knot radii must be strictly increasing near {r}"
                )));
            }
            if !(v > F::zero()) || v > F::one() {
                return Err(Error::ProfileAboveOne {
                    radius: r.as_f64(),
                    value: v.as_f64(),
                });
            }
            prev_r = r;
        }
        if knots.len() >= 2 {
            let (r0, v0) = knots[knots.len() - 2];
            let (r1, v1) = knots[knots.len() - 1];
            let slope = (v1.ln() - v0.ln()) / (r1 - r0);
            if slope > F::of(1e-12) {
                return Err(Error::ProfileAboveOne {
                    radius: (r1 + (F::one() / slope) * (-v1.ln())).as_f64(),
                    value: 1.0,
                });
            }
        }
        Ok(PhiProfile::Tabulated { knots })
    }

    /// Value `phi(s)`. Errors on negative or non-finite input.
    pub fn eval(&self, s: F) -> Result<F> {
        if !(s >= F::zero()) || !s.is_finite() {
            return Err(Error::Domain(format!("profile argument {s} outside [0, inf)")));
        }
        Ok(self.log_eval(s).exp())
    }

    /// `ln phi(s)`; safe for radii where the value itself underflows.
    ///
    /// Input is clamped below at 1, which realizes the `s <= 1 => phi = 1`
    /// convention for the closed-form families.
    pub fn log_eval(&self, s: F) -> F {
        let one = F::one();
        if s <= one {
            if let PhiProfile::Tabulated { knots } = self {
                if knots[0].0 <= one {
                    return knots[0].1.ln();
                }
            }
            return F::zero();
        }
        match self {
            PhiProfile::ConstantOne => F::zero(),
            PhiProfile::ExpPower { m, beta, gamma } => -*m * s.powf(*beta) + *gamma * s.ln(),
            PhiProfile::PolyDecay { gamma } => -*gamma * s.ln(),
            PhiProfile::LogDecay => -(one + s.ln()).ln(),
            PhiProfile::LogLogDecay => -(F::of(std::f64::consts::E) + s.ln()).ln().ln(),
            PhiProfile::Tabulated { knots } => {
                // Walk segments with an implicit (1, ln 1) head knot when the
                // table starts past radius 1. Here s > 1.
                let mut a = one;
                let mut la = F::zero();
                if knots[0].0 <= one {
                    a = knots[0].0;
                    la = knots[0].1.ln();
                }
                for &(r, v) in knots {
                    if r <= a {
                        continue;
                    }
                    let lb = v.ln();
                    if s <= r {
                        return la + (lb - la) * (s - a) / (r - a);
                    }
                    a = r;
                    la = lb;
                }
                // Past the last knot: extend the final segment slope (flat
                // when there is a single knot).
                let (r1, v1) = knots[knots.len() - 1];
                let slope = if knots.len() >= 2 {
                    let (r0, v0) = knots[knots.len() - 2];
                    (v1.ln() - v0.ln()) / (r1 - r0)
                } else {
                    F::zero()
                };
                v1.ln() + slope * (s - r1)
            }
        }
    }

    /// Signed logarithmic derivative ratios `(phi'/phi, phi''/phi)` at
    /// `s > 1`, when the family is smooth there. `None` for tabulated
    /// profiles (callers fall back to finite differences).
    pub fn log_derivatives(&self, s: F) -> Option<(F, F)> {
        if s <= F::one() {
            return Some((F::zero(), F::zero()));
        }
        let one = F::one();
        let two = F::of(2.0);
        match self {
            PhiProfile::ConstantOne => Some((F::zero(), F::zero())),
            PhiProfile::ExpPower { m, beta, gamma } => {
                let l1 = -*m * *beta * s.powf(*beta - one) + *gamma / s;
                let extra = -*m * *beta * (*beta - one) * s.powf(*beta - two) - *gamma / (s * s);
                Some((l1, l1 * l1 + extra))
            }
            PhiProfile::PolyDecay { gamma } => {
                let l1 = -*gamma / s;
                Some((l1, *gamma * (*gamma + one) / (s * s)))
            }
            PhiProfile::LogDecay => {
                let u = one + s.ln();
                let l1 = -(s * u).recip();
                let l2 = (s * s * u).recip() + two / (s * s * u * u);
                Some((l1, l2))
            }
            PhiProfile::LogLogDecay => {
                let w = F::of(std::f64::consts::E) + s.ln();
                let u = w.ln();
                let l1 = -(s * w * u).recip();
                let l2 = (one + w.recip()) / (s * s * w * u) + two / (s * s * w * w * u * u);
                Some((l1, l2))
            }
            PhiProfile::Tabulated { .. } => None,
        }
    }

    /// Radii where the profile is non-smooth; used as quadrature breakpoints.
    pub fn kink_radii(&self) -> Vec<F> {
        let mut ks = vec![F::one()];
        if let PhiProfile::Tabulated { knots } = self {
            ks.extend(knots.iter().map(|&(r, _)| r));
        }
        ks
    }

    /// Convergent upper bound for `integral_R^inf phi(rho) rho^{-power} drho`
    /// shaped as a [`TailBound`]. `power` must make the integral finite.
    pub fn decay_tail(&self, power: F) -> Result<TailBound<F>> {
        let need_power = |p: F| -> Result<()> {
            if p > F::one() {
                Ok(())
            } else {
                Err(Error::DivergentTail(format!(
                    "phi(rho) rho^-{power} with this profile needs power > 1"
                )))
            }
        };
        match self {
            PhiProfile::ConstantOne | PhiProfile::LogDecay | PhiProfile::LogLogDecay => {
                // Logarithmic decay is bounded above by the constant 1.
                need_power(power)?;
                Ok(TailBound::power(F::zero(), power))
            }
            PhiProfile::PolyDecay { gamma } => {
                need_power(power + *gamma)?;
                Ok(TailBound::power(F::zero(), power + *gamma))
            }
            PhiProfile::ExpPower { m, beta, gamma } => {
                Ok(TailBound::power_exp(F::zero(), power - *gamma, *m, *beta))
            }
            PhiProfile::Tabulated { knots } => {
                let (r1, v1) = knots[knots.len() - 1];
                let slope = if knots.len() >= 2 {
                    let (r0, v0) = knots[knots.len() - 2];
                    (v1.ln() - v0.ln()) / (r1 - r0)
                } else {
                    F::zero()
                };
                if slope < F::of(-1e-12) {
                    // phi(rho) <= v1 e^{slope (rho - r1)} = [v1 e^{-slope r1}] e^{slope rho}.
                    Ok(TailBound::power_exp(v1.ln() - slope * r1, power, -slope, F::one()))
                } else {
                    need_power(power)?;
                    Ok(TailBound::power(F::zero(), power))
                }
            }
        }
    }

    /// Largest radius at which the profile is still exactly 1 coming from
    /// the left; 1 for every family.
    pub fn unit_radius(&self) -> F {
        F::one()
    }
}

impl<F: Real> fmt::Display for PhiProfile<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiProfile::ConstantOne => write!(f, "constant-one"),
            PhiProfile::ExpPower { m, beta, gamma } => {
                write!(f, "exp-power(m={m},beta={beta},gamma={gamma})")
            }
            PhiProfile::PolyDecay { gamma } => write!(f, "poly-decay(gamma={gamma})"),
            PhiProfile::LogDecay => write!(f, "log-decay"),
            PhiProfile::LogLogDecay => write!(f, "loglog-decay"),
            PhiProfile::Tabulated { knots } => write!(f, "tabulated({} knots)", knots.len()),
        }
    }
}
