//! Prospectiveness of a subset, judged from order statistics of the
//! objective values sampled inside it.
//!
//! For a subset with ordered sample values `y_(1) <= … <= y_(N)` and a record
//! value `y*` the criterion is
//!
//! ```text
//! phi = (1 - ((y_(1) - y*) / (y_(k+1) - y*))^alpha)^k
//! ```
//!
//! which estimates the probability that the subset holds a point at least as
//! good as the record. `k` depends on the sample size ([`select_k`]) and the
//! tail exponent `alpha` is estimated once from a large sample
//! ([`estimate_alpha`]).

use std::fmt;

use thiserror::Error;

/// Smallest sample size for which the criterion is evaluated.
pub const MIN_SAMPLE: usize = 10;
/// Smallest sample size for the tail-exponent estimate.
pub const MIN_ALPHA_SAMPLE: usize = 100;
/// Lower clamp of the tail-exponent estimate.
pub const ALPHA_MIN: f64 = 0.1;
/// Upper clamp of the tail-exponent estimate.
pub const ALPHA_MAX: f64 = 10.0;

/// Too few sample values to evaluate a statistic; the caller has to expand
/// the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("insufficient sample: {have} values, at least {need} needed")]
pub struct InsufficientSample {
    pub have: usize,
    pub need: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriterionError {
    #[error("invalid criterion parameters: {0}")]
    InvalidParams(String),
    #[error("sample value {0} is not finite")]
    NonFinite(f64),
}

/// Non-decreasing sequence of finite objective values.
#[derive(Clone, PartialEq, Default)]
pub struct OrderedSample {
    values: Vec<f64>,
}

impl OrderedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self, CriterionError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CriterionError::NonFinite(bad));
        }
        values.sort_by(f64::total_cmp);
        Ok(OrderedSample { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1-based order statistic `y_(i)`.
    pub fn order_stat(&self, i: usize) -> Option<f64> {
        i.checked_sub(1).and_then(|j| self.values.get(j)).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl fmt::Debug for OrderedSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.values).finish()
    }
}

impl FromIterator<f64> for OrderedSample {
    /// Panics on non-finite values.
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        OrderedSample::new(iter.into_iter().collect()).expect("finite sample values")
    }
}

/// `k`, `alpha` and the removal bound `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionParams {
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
}

impl CriterionParams {
    pub fn new(k: usize, alpha: f64, delta: f64) -> Result<Self, CriterionError> {
        if k == 0 {
            return Err(CriterionError::InvalidParams("k must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CriterionError::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CriterionError::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(CriterionParams { k, alpha, delta })
    }
}

/// The number of order statistics used for a sample of size `n`: `None`
/// below 10, `n / 10` below 100, and 10 from there on.
pub fn select_k(n: usize) -> Option<usize> {
    match n {
        0..=9 => None,
        10..=99 => Some(n / 10),
        _ => Some(10),
    }
}

/// The criterion value for `sub` against the record `y_star`, in `[0, 1]`.
///
/// A zero denominator (`y_(k+1) = y*`, which forces `y_(1) = y*`) yields 1.
pub fn prospectiveness(sub: &OrderedSample, y_star: f64, k: usize, alpha: f64) -> Result<f64, InsufficientSample> {
    let (y1, yk1) = match (sub.order_stat(1), sub.order_stat(k + 1)) {
        (Some(a), Some(b)) if k >= 1 => (a, b),
        _ => return Err(InsufficientSample { have: sub.len(), need: k + 1 }),
    };
    let spread = yk1 - y_star;
    if spread <= 0.0 {
        return Ok(1.0);
    }
    let ratio = ((y1 - y_star) / spread).clamp(0.0, 1.0);
    let phi = (1.0 - ratio.powf(alpha)).powi(k as i32);
    Ok(phi.clamp(0.0, 1.0))
}

/// Tail exponent estimate `ln 5 / ln((y_(11) - y_(1)) / (y_(3) - y_(1)))`,
/// clamped to `[ALPHA_MIN, ALPHA_MAX]`.
///
/// A zero inner spread (`y_(3) = y_(1)`) clamps high; a ratio of at most one
/// (`y_(11) = y_(3)`) clamps low.
pub fn estimate_alpha(full: &OrderedSample) -> Result<f64, InsufficientSample> {
    if full.len() < MIN_ALPHA_SAMPLE {
        return Err(InsufficientSample { have: full.len(), need: MIN_ALPHA_SAMPLE });
    }
    let y1 = full.values[0];
    let inner = full.values[2] - y1;
    let outer = full.values[10] - y1;
    if inner <= 0.0 {
        return Ok(ALPHA_MAX);
    }
    let ratio = outer / inner;
    if ratio <= 1.0 {
        return Ok(ALPHA_MIN);
    }
    Ok((5f64.ln() / ratio.ln()).clamp(ALPHA_MIN, ALPHA_MAX))
}

/// Criterion for the sample values of one subset, with `k` chosen from the
/// number of values.
pub fn criterion_over<I>(values: I, y_star: f64, alpha: f64) -> Result<f64, InsufficientSample>
where
    I: IntoIterator<Item = f64>,
{
    let sub: OrderedSample = values.into_iter().collect();
    let k = select_k(sub.len()).ok_or(InsufficientSample { have: sub.len(), need: MIN_SAMPLE })?;
    prospectiveness(&sub, y_star, k, alpha)
}
