use super::TokenId;
use crate::{Error, Result};

/// Log of zero probability. Never produced by overflow; only assigned.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == LOG_ZERO {
        return LOG_ZERO;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(v)` with max subtraction. All `-inf` gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let mut max = LOG_ZERO;
    for &v in values {
        if v.is_nan() {
            return Err(Error::NanInput);
        }
        if v > max {
            max = v;
        }
    }
    if max == LOG_ZERO {
        return Ok(LOG_ZERO);
    }
    if max == f64::INFINITY {
        return Err(Error::InvalidArgument("+inf in log-domain input".into()));
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-softmax of raw scores.
pub fn log_softmax(values: &[f64]) -> Result<Vec<f64>> {
    let norm = log_sum_exp(values)?;
    if norm == LOG_ZERO {
        return Err(Error::NoFiniteValue);
    }
    Ok(values.iter().map(|&v| v - norm).collect())
}

/// `a * x` with the convention `0 * -inf = 0`.
#[inline]
pub(crate) fn weighted(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// One value per vocabulary id.
    Full,
    /// Values for the listed ids only, in list order.
    Sparse(Vec<TokenId>),
}

/// Per-token log values over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
    support: Support,
    normalized: bool,
}

impl ScoreVector {
    pub fn full(values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NanInput);
        }
        Ok(ScoreVector {
            values,
            support: Support::Full,
            normalized,
        })
    }

    pub fn sparse(ids: Vec<TokenId>, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(Error::SupportMismatch(format!(
                "{} ids for {} values",
                ids.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NanInput);
        }
        Ok(ScoreVector {
            values,
            support: Support::Sparse(ids),
            normalized,
        })
    }

    pub(crate) fn full_unchecked(values: Vec<f64>, normalized: bool) -> Self {
        debug_assert!(values.iter().all(|v| !v.is_nan()));
        ScoreVector {
            values,
            support: Support::Full,
            normalized,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn is_full(&self) -> bool {
        matches!(self.support, Support::Full)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value for `id`; ids outside a sparse support read as [`LOG_ZERO`].
    pub fn get(&self, id: TokenId) -> f64 {
        match &self.support {
            Support::Full => self.values.get(id as usize).copied().unwrap_or(LOG_ZERO),
            Support::Sparse(ids) => ids.iter().position(|&i| i == id).map_or(LOG_ZERO, |k| self.values[k]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        let ids: Box<dyn Iterator<Item = TokenId>> = match &self.support {
            Support::Full => Box::new(0..self.values.len() as TokenId),
            Support::Sparse(ids) => Box::new(ids.iter().copied()),
        };
        ids.zip(self.values.iter().copied())
    }

    /// `log Σ exp(values)`.
    pub fn log_mass(&self) -> f64 {
        log_sum_exp(&self.values).expect("ScoreVector never holds NaN")
    }

    /// Normalized copy of a full-support vector.
    pub fn softmax(&self) -> Result<ScoreVector> {
        if !self.is_full() {
            return Err(Error::SupportMismatch("softmax needs full support".into()));
        }
        Ok(ScoreVector::full_unchecked(log_softmax(&self.values)?, true))
    }

    pub(crate) fn same_full_support(&self, other: &ScoreVector) -> Result<()> {
        if !self.is_full() || !other.is_full() {
            return Err(Error::SupportMismatch("expected full support".into()));
        }
        if self.len() != other.len() {
            return Err(Error::SupportMismatch(format!(
                "lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}
