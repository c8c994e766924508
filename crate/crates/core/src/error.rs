//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enum. Numeric payloads are widened to `f64` so the
/// variants stay independent of the scalar parameter.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid parameter value.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A tempering profile exceeded 1 somewhere on (0, inf).
    #[error("profile exceeds 1 near radius {radius}: value {value}")]
    ProfileAboveOne { radius: f64, value: f64 },

    /// Adaptive quadrature ran out of subdivisions before meeting tolerance.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (estimate {estimate:e}, previous {previous:e}, error bound {error:e})"
    )]
    QuadratureStalled {
        estimate: f64,
        previous: f64,
        error: f64,
        subdivisions: usize,
    },

    /// The integrand admits no convergent tail bound on an infinite range.
    #[error("divergent tail: {0}")]
    DivergentTail(String),

    /// Grid spacing too coarse relative to the truncation radius.
    #[error("grid spacing {spacing} exceeds eps/4 = {limit}")]
    SpacingTooCoarse { spacing: f64, limit: f64 },

    /// Too much of the truncated jump mass lands outside the grid box.
    #[error(
        "box too small: {percent:.2}% of the truncated jump mass from the box \
         center lands outside the grid (limit 5%)"
    )]
    BoxTooSmall { percent: f64 },

    /// An iterated-kernel mass certificate failed its tolerance.
    #[error(
        "mass certificate violated at level {level}: relative error {rel_err:.3e} \
         (grid too coarse or kernel values inconsistent)"
    )]
    MassCertificate { level: usize, rel_err: f64 },

    /// Requested allocation exceeds the in-memory budget.
    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    /// Two artifacts built from different configurations were combined.
    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),

    /// A sampled intensity exceeded its declared dominating envelope.
    #[error(
        "domination violated at displacement {displacement}: intensity/envelope = {ratio}"
    )]
    DominationViolated { displacement: f64, ratio: f64 },

    /// Config file syntax or validation error with a line number.
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Operation not supported for the given flags or dimension.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_render_with_payload() {
        let e = Error::SpacingTooCoarse {
            spacing: 0.5,
            limit: 0.125,
        };
        assert_eq!(e.to_string(), "grid spacing 0.5 exceeds eps/4 = 0.125");

        let e = Error::Config {
            line: 12,
            msg: "unknown key `alpa`".into(),
        };
        assert!(e.to_string().contains("line 12"));
    }
}
