//! Multi-indices and the summation windows used by the averages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `𝐧 = (n_1, …, n_d)` with every `n_i ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct MultiIndex {
    components: Vec<u64>,
}

impl TryFrom<Vec<u64>> for MultiIndex {
    type Error = Error;

    fn try_from(components: Vec<u64>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<MultiIndex> for Vec<u64> {
    fn from(n: MultiIndex) -> Self {
        n.components
    }
}

impl MultiIndex {
    pub fn new(components: Vec<u64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Shape("multi-index needs at least one component".into()));
        }
        if components.contains(&0) {
            return Err(Error::Shape(format!("multi-index {components:?} has a zero component")));
        }
        Ok(Self { components })
    }

    pub fn scalar(n: u64) -> Result<Self> {
        Self::new(vec![n])
    }

    /// `𝟏 = (1, …, 1)`.
    pub fn ones(d: usize) -> Self {
        Self { components: vec![1; d.max(1)] }
    }

    pub fn uniform(d: usize, n: u64) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    /// `|𝐧| = n_1 ⋯ n_d`.
    pub fn volume(&self) -> u128 {
        self.components.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
    }

    /// `m(𝐧) = min n_i`.
    pub fn min_component(&self) -> u64 {
        *self.components.iter().min().expect("nonempty")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// Which exponents an average of horizon `n` sums over; the sum is always
/// divided by `n` (or `|𝐧|`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `k = 0, …, n − 1` (plain Cesàro means).
    ZeroBased,
    /// `k = 1, …, n − 1` (one-parameter weighted averages).
    SkipZero,
    /// `k = 1, …, n` (multiparameter averages).
    Inclusive,
}

impl Window {
    /// Half-open exponent range `[start, end)` for horizon `n`.
    pub fn bounds(self, n: u64) -> (u64, u64) {
        match self {
            Self::ZeroBased => (0, n),
            Self::SkipZero => (1, n),
            Self::Inclusive => (1, n + 1),
        }
    }

    /// Convention used for Besicovich deviations in `d` variables.
    pub fn deviation_default(d: usize) -> Self {
        if d == 1 {
            Self::SkipZero
        } else {
            Self::Inclusive
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_and_min() {
        let n = MultiIndex::new(vec![3, 4, 2]).unwrap();
        assert_eq!(n.volume(), 24);
        assert_eq!(n.min_component(), 2);
        assert_eq!(n.to_string(), "3,4,2");
        assert_eq!(MultiIndex::ones(3).volume(), 1);
    }

    #[test]
    fn rejects_zero_and_empty() {
        assert!(MultiIndex::new(vec![]).is_err());
        assert!(MultiIndex::new(vec![1, 0]).is_err());
        assert!(serde_json::from_str::<MultiIndex>("[2, 0]").is_err());
        assert_eq!(serde_json::from_str::<MultiIndex>("[2, 5]").unwrap().volume(), 10);
    }

    #[test]
    fn window_bounds() {
        assert_eq!(Window::ZeroBased.bounds(5), (0, 5));
        assert_eq!(Window::SkipZero.bounds(5), (1, 5));
        assert_eq!(Window::Inclusive.bounds(5), (1, 6));
    }
}
