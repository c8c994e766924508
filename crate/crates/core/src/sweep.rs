//! Parameter sweep over the exponentially tempered profile family
//! `phi(s) = e^{-m s^beta} s^gamma` for `s > 1`: classifies where the
//! self-convolution domination condition holds, fails, or sits on the
//! unresolved boundary, and checks the classification against the
//! closed-form predictions.

use std::fmt;

use rayon::prelude::*;

use crate::assumptions::{check_a1c, Verdict};
use crate::bounds::direction_mean;
use crate::error::{Error, Result};
use crate::profile::PhiProfile;
use crate::quad::convolution::convolution_ratio;
use crate::quad::{integrate, integrate_radial, QuadratureSpec, RadialUpper};
use crate::scalar::Real;

/// Predicted status of the convolution domination condition for one
/// parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Region {
    /// Inside the proven sufficient region.
    Holds,
    /// Inside the proven counterexample region.
    Fails,
    /// No claim either way.
    Boundary,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Holds => write!(f, "holds"),
            Region::Fails => write!(f, "fails"),
            Region::Boundary => write!(f, "boundary"),
        }
    }
}

/// Observed classification from the numerical trend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Observed {
    Holds,
    Fails,
    Inconclusive,
}

impl From<Verdict> for Observed {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Observed::Holds,
            Verdict::Fail => Observed::Fails,
            Verdict::Inconclusive => Observed::Inconclusive,
        }
    }
}

impl fmt::Display for Observed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observed::Holds => write!(f, "holds"),
            Observed::Fails => write!(f, "fails"),
            Observed::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// One point of the parameter grid with its predicted classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCell<F: Real> {
    pub m: F,
    pub beta: F,
    pub gamma: F,
    pub alpha: F,
    pub dim: usize,
    pub predicted: Region,
}

/// Critical exponent `dim/2 + alpha - 1/2` separating the proven region
/// from the boundary.
pub fn critical_gamma<F: Real>(alpha: F, dim: usize) -> F {
    F::of_usize(dim) * F::of(0.5) + alpha - F::of(0.5)
}

fn classify<F: Real>(beta: F, gamma: F, alpha: F, dim: usize) -> Region {
    let crit = critical_gamma(alpha, dim);
    let at_crit = (gamma - crit).abs() <= F::of(1e-12) * crit.abs().max(F::one());
    if beta > F::one() {
        Region::Fails
    } else if gamma < crit && !at_crit {
        Region::Holds
    } else if beta == F::one() && at_crit && dim == 1 {
        Region::Fails
    } else {
        Region::Boundary
    }
}

impl<F: Real> ParamCell<F> {
    /// Builds a cell and derives its predicted region. The profile must be
    /// admissible: `e^{-m s^beta} s^gamma <= 1` everywhere, which for
    /// `gamma > 0` requires `m >= gamma / (e beta)`.
    pub fn new(m: F, beta: F, gamma: F, alpha: F, dim: usize) -> Result<Self> {
        if !(alpha > F::zero()) || !(alpha < F::of(2.0)) {
            return Err(Error::InvalidParam(format!("alpha {alpha} must lie in (0, 2)")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("dimension {dim} not in 1..=3")));
        }
        PhiProfile::exp_power(m, beta, gamma)?;
        Ok(ParamCell {
            m,
            beta,
            gamma,
            alpha,
            dim,
            predicted: classify(beta, gamma, alpha, dim),
        })
    }

    pub fn profile(&self) -> Result<PhiProfile<F>> {
        PhiProfile::exp_power(self.m, self.beta, self.gamma)
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow<F: Real> {
    pub cell: ParamCell<F>,
    pub observed: Observed,
    /// Largest convolution ratio seen across the lags.
    pub max_ratio: F,
    /// Last-lag ratio divided by first-lag ratio.
    pub growth_factor: F,
    /// Whether the observation matches the prediction; `None` where the
    /// prediction makes no claim.
    pub agrees: Option<bool>,
    pub notes: String,
}

/// Default lag sequence for the sweep.
pub fn default_lags<F: Real>() -> Vec<F> {
    [4.0, 6.0, 8.0, 12.0, 16.0, 20.0].map(F::of).to_vec()
}

/// The default parameter grid: every tempering regime the classifier
/// distinguishes, bracketing the critical exponent from both sides.
///
/// Cells with `gamma` too large for `m = 1` get the smallest admissible
/// `m` (padded 5%) instead; the classification does not depend on `m`.
pub fn default_cells<F: Real>() -> Vec<ParamCell<F>> {
    let betas = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
    let alphas = [0.5, 1.0, 1.5];
    let mut cells = Vec::new();
    for &dim in &[1usize, 2] {
        for &alpha in &alphas {
            let crit = critical_gamma(F::of(alpha), dim);
            let gammas = [
                -F::one(),
                F::zero(),
                crit - F::of(0.2),
                crit,
                crit + F::of(0.2),
            ];
            for &beta in &betas {
                for &gamma in &gammas {
                    let min_m = gamma / (F::of(std::f64::consts::E) * F::of(beta));
                    let m = if gamma > F::zero() && min_m > F::one() {
                        min_m * F::of(1.05)
                    } else {
                        F::one()
                    };
                    let cell = ParamCell::new(m, F::of(beta), gamma, F::of(alpha), dim)
                        .expect("default grid cells are admissible");
                    cells.push(cell);
                }
            }
        }
    }
    cells
}

/// Runs the convolution-trend check on every cell and compares the
/// outcome with the predicted region. Cells are independent and run in
/// parallel; a quadrature failure marks its row inconclusive instead of
/// aborting the sweep.
pub fn sweep_condition_c<F: Real>(
    cells: &[ParamCell<F>],
    lags: &[F],
    spec: &QuadratureSpec<F>,
) -> Result<Vec<SweepRow<F>>> {
    if lags.len() < 4 || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam(
            "sweep needs at least 4 strictly increasing lags".into(),
        ));
    }
    if lags.iter().any(|&l| !(l > F::of(2.0))) {
        return Err(Error::InvalidParam("every sweep lag must exceed 2".into()));
    }

    let rows: Vec<SweepRow<F>> = cells
        .par_iter()
        .map(|cell| {
            let profile = match cell.profile() {
                Ok(p) => p,
                Err(e) => return inconclusive_row(cell, format!("profile rejected: {e}")),
            };
            let report = match check_a1c(&profile, cell.alpha, cell.dim, lags, spec) {
                Ok(r) => r,
                Err(e) => return inconclusive_row(cell, format!("trend check failed: {e}")),
            };
            let ends = [lags[0], lags[lags.len() - 1]].map(|lag| {
                convolution_ratio(&profile, cell.alpha, cell.dim, lag, spec)
                    .map(|r| r.value_ratio)
                    .unwrap_or_else(|_| F::nan())
            });
            let observed = Observed::from(report.verdict);
            let agrees = match cell.predicted {
                Region::Holds => Some(observed == Observed::Holds),
                Region::Fails => Some(observed == Observed::Fails),
                Region::Boundary => None,
            };
            SweepRow {
                cell: *cell,
                observed,
                max_ratio: report.worst_ratio,
                growth_factor: ends[1] / ends[0],
                agrees,
                notes: report.notes,
            }
        })
        .collect();
    Ok(rows)
}

fn inconclusive_row<F: Real>(cell: &ParamCell<F>, notes: String) -> SweepRow<F> {
    SweepRow {
        cell: *cell,
        observed: Observed::Inconclusive,
        max_ratio: F::nan(),
        growth_factor: F::nan(),
        agrees: match cell.predicted {
            Region::Boundary => None,
            _ => Some(false),
        },
        notes,
    }
}

/// Renders sweep rows as CSV.
pub fn sweep_csv<F: Real>(rows: &[SweepRow<F>]) -> String {
    let mut out = String::from("m,beta,gamma,alpha,dim,predicted,observed,max_ratio,growth_factor\n");
    for row in rows {
        let c = &row.cell;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6e},{:.6e}\n",
            c.m, c.beta, c.gamma, c.alpha, c.dim, c.predicted, row.observed,
            row.max_ratio.as_f64(),
            row.growth_factor.as_f64(),
        ));
    }
    out
}

/// Evaluates both sides of the closed-form identity
///
/// ```text
/// integral from 1 to x-1 of e^{-(x-z)} (x-z)^{-1} e^{-z} z^{-1} dz
///     = 2 ln(x-1) e^{-x} / x
/// ```
///
/// returning `(numeric, analytic)`. The two agree to 1e-6 relative for
/// any `x > 2` within quadrature reach.
pub fn remark_closed_form<F: Real>(x: F, spec: &QuadratureSpec<F>) -> Result<(F, F)> {
    if !(x > F::of(2.0)) {
        return Err(Error::Domain(format!(
            "closed-form identity needs x > 2, got {x}"
        )));
    }
    let q = integrate(
        |z: F| (-(x - z)).exp() / (x - z) * (-z).exp() / z,
        F::one(),
        x - F::one(),
        spec,
    )?;
    let analytic = F::of(2.0) * (x - F::one()).ln() * (-x).exp() / x;
    Ok((q.value, analytic))
}

/// Integral of the convolution integrand over the unit ball at the
/// midpoint between two points at distance `lag`, divided by the
/// envelope `phi(lag) lag^{-alpha-dim}`.
///
/// For `beta > 1` the midpoint contribution alone outgrows the envelope,
/// so this ratio increases without bound in `lag`; for `beta = 1` it
/// stays bounded and for `beta < 1` it decays.
pub fn midpoint_lower_bound<F: Real>(
    cell: &ParamCell<F>,
    lag: F,
    spec: &QuadratureSpec<F>,
) -> Result<F> {
    if !(lag > F::of(4.0)) {
        return Err(Error::InvalidParam(format!(
            "midpoint ball needs lag > 4, got {lag}"
        )));
    }
    let profile = cell.profile()?;
    let power = cell.alpha + F::of_usize(cell.dim);
    let ln_envelope = profile.log_eval(lag) - power * lag.ln();
    let half = lag * F::of(0.5);
    // ln of g(|z-x|) g(|z-y|) / envelope with x at 0 and y at lag e1;
    // both distances stay above 1 inside the ball, away from the kink.
    let ln_w = |rho_x: F, rho_y: F| {
        profile.log_eval(rho_x) - power * rho_x.ln() + profile.log_eval(rho_y)
            - power * rho_y.ln()
            - ln_envelope
    };
    if cell.dim == 1 {
        let q = integrate(
            |s: F| ln_w(half + s, half - s).exp(),
            -F::one(),
            F::one(),
            spec,
        )?;
        return Ok(q.value);
    }
    let mid = [half, F::zero(), F::zero()];
    let g = move |z: &[F; 3]| {
        let rho_x = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let dx0 = z[0] - lag;
        let rho_y = (dx0 * dx0 + z[1] * z[1] + z[2] * z[2]).sqrt();
        ln_w(rho_x, rho_y).exp()
    };
    let q = integrate_radial(
        |rho: F| direction_mean(&g, &mid, rho, cell.dim, spec).unwrap_or_else(|_| F::nan()),
        F::zero(),
        RadialUpper::Finite(F::one()),
        cell.dim,
        &[],
        spec,
    )?;
    if !q.value.is_finite() {
        return Err(Error::Domain("midpoint ball quadrature did not converge".into()));
    }
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    fn cell(m: f64, beta: f64, gamma: f64, alpha: f64, dim: usize) -> ParamCell<f64> {
        ParamCell::new(m, beta, gamma, alpha, dim).unwrap()
    }

    #[test]
    fn predictions_follow_the_region_map() {
        assert_eq!(cell(1.0, 0.5, 0.0, 0.5, 1).predicted, Region::Holds);
        assert_eq!(cell(1.0, 1.0, 0.0, 0.5, 1).predicted, Region::Holds);
        assert_eq!(cell(1.0, 2.0, 0.0, 0.5, 1).predicted, Region::Fails);
        assert_eq!(cell(1.0, 1.5, -1.0, 1.0, 2).predicted, Region::Fails);
        // Critical exponent: fails only for beta = 1 in dimension 1.
        assert_eq!(cell(1.0, 1.0, 0.5, 0.5, 1).predicted, Region::Fails);
        assert_eq!(cell(1.0, 1.0, 1.0, 0.5, 2).predicted, Region::Boundary);
        assert_eq!(cell(1.0, 0.5, 0.5, 0.5, 1).predicted, Region::Boundary);
        // Above the critical exponent nothing is claimed.
        assert_eq!(cell(1.0, 0.5, 0.7, 0.5, 1).predicted, Region::Boundary);
        assert!(ParamCell::<f64>::new(1.0, 0.5, 0.0, 2.0, 1).is_err());
        assert!(ParamCell::<f64>::new(-1.0, 0.5, 0.0, 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn classification_is_total_and_consistent(
            beta in 0.05f64..2.0,
            gamma in -2.0f64..0.0,
            alpha in 0.1f64..1.9,
            dim in 1usize..=3,
        ) {
            let c = cell(1.0, beta, gamma, alpha, dim);
            let crit = critical_gamma(alpha, dim);
            match c.predicted {
                Region::Holds => prop_assert!(beta <= 1.0 && gamma < crit),
                Region::Fails => prop_assert!(beta > 1.0),
                Region::Boundary => prop_assert!(beta <= 1.0 && gamma >= crit - 1e-9),
            }
        }
    }

    #[test]
    fn interior_cells_classify_as_predicted() {
        let cells = vec![
            cell(1.0, 0.5, 0.0, 0.5, 1),
            cell(1.0, 1.0, 0.0, 0.5, 1),
            cell(1.0, 2.0, 0.0, 0.5, 1),
            cell(1.0, 1.0, 0.5, 0.5, 1),
        ];
        // Sharp tempering overflows past lag ~37 while the critical cell
        // needs a wide log-lag span, so the list starts at 8 and stops at 32.
        let lags: Vec<f64> = vec![8.0, 12.0, 16.0, 20.0, 26.0, 32.0];
        let rows = sweep_condition_c(&cells, &lags, &spec()).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(
                row.agrees,
                Some(true),
                "cell {:?}: observed {} vs predicted {} ({})",
                row.cell,
                row.observed,
                row.cell.predicted,
                row.notes
            );
        }
        assert_eq!(rows[0].observed, Observed::Holds);
        assert_eq!(rows[1].observed, Observed::Holds);
        assert_eq!(rows[2].observed, Observed::Fails);
        assert!(rows[2].growth_factor > 10.0);
        assert_eq!(rows[3].observed, Observed::Fails);
        assert!(rows[3].notes.contains("ln"), "notes: {}", rows[3].notes);

        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "m,beta,gamma,alpha,dim,predicted,observed,max_ratio,growth_factor"
        );
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("fails"));
    }

    #[test]
    fn sweep_rejects_bad_lag_sequences() {
        let cells = vec![cell(1.0, 0.5, 0.0, 0.5, 1)];
        let s = spec();
        assert!(sweep_condition_c(&cells, &[4.0, 6.0, 8.0], &s).is_err());
        assert!(sweep_condition_c(&cells, &[4.0, 6.0, 6.0, 8.0], &s).is_err());
        assert!(sweep_condition_c(&cells, &[2.0, 4.0, 6.0, 8.0], &s).is_err());
    }

    #[test]
    fn default_grid_covers_every_regime() {
        let cells = default_cells::<f64>();
        assert_eq!(cells.len(), 6 * 5 * 3 * 2);
        for c in &cells {
            assert!(c.profile().is_ok(), "cell {c:?} has no admissible profile");
            if c.beta > 1.0 {
                assert_eq!(c.predicted, Region::Fails);
            }
            if c.gamma <= 0.0 {
                assert_eq!(c.m, 1.0);
            }
            assert!(c.m >= 1.0);
        }
        let holds = cells.iter().filter(|c| c.predicted == Region::Holds).count();
        let fails = cells.iter().filter(|c| c.predicted == Region::Fails).count();
        let boundary = cells.iter().filter(|c| c.predicted == Region::Boundary).count();
        assert!(holds > 0 && fails > 0 && boundary > 0);
        assert_eq!(holds + fails + boundary, cells.len());
    }

    #[test]
    fn closed_form_identity_matches_quadrature() {
        let s = spec();
        let (num, ana) = remark_closed_form(3.0, &s).unwrap();
        assert_relative_eq!(ana, 0.023006510711686753, max_relative = 1e-12);
        assert_relative_eq!(num, ana, max_relative = 1e-6);
        for x in [5.0, 8.0, 12.0] {
            let (num, ana) = remark_closed_form(x, &s).unwrap();
            assert_relative_eq!(num, ana, max_relative = 1e-6);
        }
        // Just past the degenerate endpoint both sides vanish together.
        let (num, ana) = remark_closed_form(2.0 + 1e-9, &s).unwrap();
        assert!(num < 3e-10 && ana < 3e-10);
        assert_relative_eq!(num, ana, max_relative = 1e-6);
        assert!(remark_closed_form(2.0, &s).is_err());
        assert!(remark_closed_form(1.5, &s).is_err());
    }

    #[test]
    fn midpoint_ball_ratio_separates_tempering_regimes() {
        let s = spec();
        let sharp = cell(1.0, 2.0, 0.0, 0.5, 1);
        let r6 = midpoint_lower_bound(&sharp, 6.0, &s).unwrap();
        let r10 = midpoint_lower_bound(&sharp, 10.0, &s).unwrap();
        // The midpoint mass outruns the envelope like e^{lag^2/2}.
        assert!(r10 / r6 > 1e12, "growth {}", r10 / r6);
        let mut prev = 0.0;
        for lag in [5.0, 7.0, 9.0, 11.0] {
            let r = midpoint_lower_bound(&sharp, lag, &s).unwrap();
            assert!(r > prev, "ratio not increasing at lag {lag}");
            prev = r;
        }

        let linear = cell(1.0, 1.0, 0.0, 0.5, 1);
        let vals: Vec<f64> = [6.0, 10.0, 14.0]
            .iter()
            .map(|&l| midpoint_lower_bound(&linear, l, &s).unwrap())
            .collect();
        assert!(vals.iter().all(|v| *v > 0.0));
        assert!(vals[2] <= vals[0] * 1.05, "linear tempering stays bounded");

        let soft = cell(1.0, 0.5, 0.0, 0.5, 1);
        let vals: Vec<f64> = [6.0, 10.0, 14.0]
            .iter()
            .map(|&l| midpoint_lower_bound(&soft, l, &s).unwrap())
            .collect();
        assert!(vals[1] < vals[0] && vals[2] < vals[1], "soft tempering decays");

        assert!(midpoint_lower_bound(&sharp, 4.0, &s).is_err());
    }

    #[test]
    fn midpoint_ball_ratio_in_two_dimensions() {
        let sharp = cell(1.0, 2.0, 0.0, 0.5, 2);
        let s = spec();
        let r6 = midpoint_lower_bound(&sharp, 6.0, &s).unwrap();
        let r10 = midpoint_lower_bound(&sharp, 10.0, &s).unwrap();
        assert!(r10 / r6 > 1e12, "growth {}", r10 / r6);
    }
}
