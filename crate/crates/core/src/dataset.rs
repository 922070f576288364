use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{hstack, select_rows};

/// Row-aligned regression blocks for one causal direction.
///
/// Row `n` holds the conditioning block `x` (effect past), the first target
/// `y1` (effect present) and the second target `y2` (cause past).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    x: DMatrix<f64>,
    y1: DMatrix<f64>,
    y2: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl RegressionDataset {
    pub fn new(x: DMatrix<f64>, y1: DMatrix<f64>, y2: DMatrix<f64>) -> Result<Self> {
        let n = y1.nrows();
        if n == 0 {
            return Err(Error::invalid("regression dataset needs at least one row"));
        }
        for other in [x.nrows(), y2.nrows()] {
            if other != n {
                return Err(Error::LengthMismatch { left: n, right: other });
            }
        }
        if [&x, &y1, &y2].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("regression dataset contains non-finite entries"));
        }
        let y = hstack(&[&y1, &y2]);
        Ok(Self { x, y1, y2, y })
    }

    /// Minimal one-lag construction from a scalar cause/effect pair:
    /// `y1 = effect[t]`, `y2 = cause[t-1]`, `x = effect[t-1]` for `t = 1..T`.
    pub fn lagged(cause: &[f64], effect: &[f64]) -> Result<Self> {
        if cause.len() != effect.len() {
            return Err(Error::LengthMismatch {
                left: cause.len(),
                right: effect.len(),
            });
        }
        if effect.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: effect.len(),
            });
        }
        let n = effect.len() - 1;
        let y1 = DMatrix::from_column_slice(n, 1, &effect[1..]);
        let y2 = DMatrix::from_column_slice(n, 1, &cause[..n]);
        let x = DMatrix::from_column_slice(n, 1, &effect[..n]);
        Self::new(x, y1, y2)
    }

    pub fn len(&self) -> usize {
        self.y1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y1(&self) -> &DMatrix<f64> {
        &self.y1
    }

    pub fn y2(&self) -> &DMatrix<f64> {
        &self.y2
    }

    /// `[y1, y2]` stacked per row.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn dx(&self) -> usize {
        self.x.ncols()
    }

    pub fn d1(&self) -> usize {
        self.y1.ncols()
    }

    pub fn d2(&self) -> usize {
        self.y2.ncols()
    }

    /// All three blocks side by side: `[x, y1, y2]`.
    pub fn joint(&self) -> DMatrix<f64> {
        hstack(&[&self.x, &self.y1, &self.y2])
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            select_rows(&self.x, rows),
            select_rows(&self.y1, rows),
            select_rows(&self.y2, rows),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagged_blocks_align() {
        let cause = [1.0, 2.0, 3.0, 4.0];
        let effect = [10.0, 20.0, 30.0, 40.0];
        let ds = RegressionDataset::lagged(&cause, &effect).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.y1().as_slice(), &[20.0, 30.0, 40.0]);
        assert_eq!(ds.y2().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.x().as_slice(), &[10.0, 20.0, 30.0]);
        assert_eq!(ds.y().row(1).iter().copied().collect::<Vec<_>>(), vec![30.0, 2.0]);
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        let a = DMatrix::zeros(3, 1);
        let b = DMatrix::zeros(2, 1);
        assert!(matches!(
            RegressionDataset::new(a.clone(), a.clone(), b),
            Err(Error::LengthMismatch { .. })
        ));
        let mut bad = a.clone();
        bad[(1, 0)] = f64::NAN;
        assert!(RegressionDataset::new(a.clone(), bad, a).is_err());
    }
}
