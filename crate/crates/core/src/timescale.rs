//! Finite representations of bounded time scales and the delta calculus on them.
//!
//! A [`TimeScale`] is a strictly increasing list of points. Every operator works on
//! point *indices*, never on floating-point equality of times. Points that sample a
//! dense interval are flagged in a mask; the mask only affects classification and
//! reporting, all arithmetic treats every point as right-scattered.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative distance below which two points are considered identical.
const DEDUP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeScale {
    points: Vec<f64>,
    dense_mask: Vec<bool>,
}

/// Classification of a point with respect to its right neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    /// Genuinely isolated on the right (or the maximum).
    RightScattered,
    /// Sample of a dense interval that continues to the right.
    RightDenseSample,
}

impl TimeScale {
    /// Builds a scale from arbitrary points. Points are sorted and near-duplicates merged.
    pub fn explicit(points: &[f64]) -> Result<Self> {
        Self::from_parts(points, &vec![false; points.len()])
    }

    /// Builds a scale from points together with a per-point dense-sample flag.
    pub fn from_parts(points: &[f64], dense_mask: &[bool]) -> Result<Self> {
        if points.len() != dense_mask.len() {
            return Err(Error::InvalidScale(format!(
                "{} points but {} dense flags",
                points.len(),
                dense_mask.len()
            )));
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidScale(format!("non-finite point {bad}")));
        }
        let mut pairs: Vec<(f64, bool)> = points.iter().copied().zip(dense_mask.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged: Vec<(f64, bool)> = Vec::with_capacity(pairs.len());
        for (p, dense) in pairs {
            match merged.last_mut() {
                Some(last) if (p - last.0).abs() <= DEDUP_TOLERANCE * p.abs().max(last.0.abs()).max(1.0) => {
                    last.1 |= dense;
                }
                _ => merged.push((p, dense)),
            }
        }
        if merged.len() < 2 {
            return Err(Error::InvalidScale(format!(
                "need at least 2 distinct points, got {}",
                merged.len()
            )));
        }
        let (points, dense_mask) = merged.into_iter().unzip();
        Ok(Self { points, dense_mask })
    }

    /// The integer grid {a, a+1, ..., b}.
    pub fn integers(a: i64, b: i64) -> Result<Self> {
        if b <= a {
            return Err(Error::InvalidScale(format!("integer grid needs a < b, got {a}..{b}")));
        }
        let points: Vec<f64> = (a..=b).map(|k| k as f64).collect();
        Self::explicit(&points)
    }

    /// Uniform sampling of the dense interval [a, b] with `n` subintervals (n + 1 points).
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a < b) || n == 0 {
            return Err(Error::InvalidScale(format!(
                "uniform grid needs a < b and n >= 1, got [{a}, {b}] with n = {n}"
            )));
        }
        let h = (b - a) / n as f64;
        let points: Vec<f64> = (0..=n)
            .map(|i| if i == n { b } else { a + i as f64 * h })
            .collect();
        Self::from_parts(&points, &vec![true; n + 1])
    }

    /// The q-grid {q^k_min, ..., q^k_max}, optionally with 0 prepended.
    pub fn qgrid(q: f64, k_min: i32, k_max: i32, include_zero: bool) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::InvalidScale(format!("q-grid needs q > 1, got {q}")));
        }
        if k_max < k_min {
            return Err(Error::InvalidScale(format!(
                "q-grid exponent range {k_min}..{k_max} is empty"
            )));
        }
        let mut points: Vec<f64> = Vec::new();
        if include_zero {
            points.push(0.0);
        }
        points.extend((k_min..=k_max).map(|k| q.powi(k)));
        Self::explicit(&points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dense_mask(&self) -> &[bool] {
        &self.dense_mask
    }

    pub fn has_dense_samples(&self) -> bool {
        self.dense_mask.iter().any(|&d| d)
    }

    pub fn point(&self, i: usize) -> Result<f64> {
        self.check(i)?;
        Ok(self.points[i])
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.points.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.points.len(),
            })
        }
    }

    /// Forward jump: index of the next point, or `i` itself at the maximum.
    pub fn sigma(&self, i: usize) -> Result<usize> {
        self.check(i)?;
        Ok((i + 1).min(self.last_index()))
    }

    /// Backward jump: index of the previous point, or `i` itself at the minimum.
    pub fn rho(&self, i: usize) -> Result<usize> {
        self.check(i)?;
        Ok(i.saturating_sub(1))
    }

    /// Graininess sigma(t) - t; zero at the maximum.
    pub fn mu(&self, i: usize) -> Result<f64> {
        self.check(i)?;
        Ok(self.mu_unchecked(i))
    }

    #[inline]
    pub(crate) fn mu_unchecked(&self, i: usize) -> f64 {
        if i + 1 < self.points.len() {
            self.points[i + 1] - self.points[i]
        } else {
            0.0
        }
    }

    /// Index of rho(b), the last point of T^kappa.
    pub fn kappa_last(&self) -> usize {
        self.points.len() - 2
    }

    /// Largest graininess over all points.
    pub fn max_mu(&self) -> f64 {
        (0..self.len()).map(|i| self.mu_unchecked(i)).fold(0.0, f64::max)
    }

    pub fn kind(&self, i: usize) -> Result<PointKind> {
        self.check(i)?;
        Ok(if self.is_right_dense(i) {
            PointKind::RightDenseSample
        } else {
            PointKind::RightScattered
        })
    }

    fn is_right_dense(&self, i: usize) -> bool {
        i + 1 < self.len() && self.dense_mask[i] && self.dense_mask[i + 1]
    }

    fn is_left_dense(&self, i: usize) -> bool {
        i > 0 && self.dense_mask[i] && self.dense_mask[i - 1]
    }

    /// Regularity: sigma(rho(t)) = t and rho(sigma(t)) = t.
    ///
    /// The jumps used here are those of the represented scale, i.e. dense samples that
    /// continue a dense interval have sigma(t) = t (resp. rho(t) = t). The first condition is
    /// not required at the minimum and the second not at the maximum: a bounded scale
    /// always violates them there through the boundary conventions alone.
    pub fn is_regular(&self) -> bool {
        let n = self.len();
        let true_sigma = |i: usize| if self.is_right_dense(i) { i } else { (i + 1).min(n - 1) };
        let true_rho = |i: usize| if self.is_left_dense(i) { i } else { i.saturating_sub(1) };
        (1..n).all(|i| true_sigma(true_rho(i)) == i) && (0..n - 1).all(|i| true_rho(true_sigma(i)) == i)
    }

    /// True when all graininesses below the maximum agree to a relative 1e-9.
    pub fn is_uniform(&self) -> bool {
        let h0 = self.mu_unchecked(0);
        (0..self.last_index()).all(|i| (self.mu_unchecked(i) - h0).abs() <= 1e-9 * h0.abs())
    }

    /// True when every point is an integer and consecutive points differ by one.
    pub fn is_integer_grid(&self) -> bool {
        self.points.iter().all(|p| p.fract() == 0.0)
            && (0..self.last_index()).all(|i| self.mu_unchecked(i) == 1.0)
    }
}

/// Real values attached to every point of a time scale.
#[derive(Clone, Debug)]
pub struct GridFunction {
    scale: Arc<TimeScale>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(scale: Arc<TimeScale>, values: Vec<f64>) -> Result<Self> {
        if values.len() != scale.len() {
            return Err(Error::LengthMismatch {
                expected: scale.len(),
                got: values.len(),
            });
        }
        Ok(Self { scale, values })
    }

    pub fn from_fn(scale: Arc<TimeScale>, f: impl Fn(f64) -> f64) -> Self {
        let values = scale.points().iter().map(|&t| f(t)).collect();
        Self { scale, values }
    }

    pub fn constant(scale: Arc<TimeScale>, c: f64) -> Self {
        let values = vec![c; scale.len()];
        Self { scale, values }
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: usize) -> Result<f64> {
        self.scale.check(i)?;
        Ok(self.values[i])
    }

    /// Value at the final point, x(T).
    pub fn end_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// f(sigma(t)) at index `i`.
    pub fn sigma_value(&self, i: usize) -> Result<f64> {
        Ok(self.values[self.scale.sigma(i)?])
    }

    /// (f(sigma(t)) - f(t)) / mu(t); defined on T^kappa only.
    pub fn delta_derivative(&self, i: usize) -> Result<f64> {
        let kappa_last = self.scale.kappa_last();
        if i > kappa_last {
            self.scale.check(i)?;
            return Err(Error::OutsideKappa { index: i, kappa_last });
        }
        Ok(self.delta_derivative_unchecked(i))
    }

    #[inline]
    pub(crate) fn delta_derivative_unchecked(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / self.scale.mu_unchecked(i)
    }

    /// Delta integral over [from, to): the mu-weighted sum of the values.
    pub fn delta_integral(&self, from: usize, to: usize) -> Result<f64> {
        delta_integral_of(&self.scale, &self.values, from, to)
    }

    pub fn same_scale(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.scale, &other.scale) || *self.scale == *other.scale
    }

    fn ensure_same_scale(&self, other: &GridFunction) -> Result<()> {
        if self.same_scale(other) {
            Ok(())
        } else {
            Err(Error::ScaleMismatch)
        }
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.ensure_same_scale(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction {
            scale: self.scale.clone(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            scale: self.scale.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Delta integral of sampled values over [from, to), summed left to right.
pub fn delta_integral_of(scale: &TimeScale, values: &[f64], from: usize, to: usize) -> Result<f64> {
    scale.check(from)?;
    scale.check(to)?;
    if from > to {
        return Err(Error::ReversedBounds { from, to });
    }
    if values.len() != scale.len() {
        return Err(Error::LengthMismatch {
            expected: scale.len(),
            got: values.len(),
        });
    }
    Ok((from..to).map(|i| scale.mu_unchecked(i) * values[i]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z4() -> Arc<TimeScale> {
        Arc::new(TimeScale::integers(0, 3).unwrap())
    }

    #[test]
    fn jumps_on_integers() {
        let ts = z4();
        assert_eq!(ts.sigma(1).unwrap(), 2);
        assert_eq!(ts.sigma(3).unwrap(), 3);
        assert_eq!(ts.rho(2).unwrap(), 1);
        assert_eq!(ts.rho(0).unwrap(), 0);
        assert_eq!(ts.mu(1).unwrap(), 1.0);
        assert_eq!(ts.mu(3).unwrap(), 0.0);
        assert_eq!(ts.kappa_last(), 2);
        assert!(matches!(ts.sigma(4), Err(Error::IndexOutOfRange { index: 4, len: 4 })));
    }

    #[test]
    fn jumps_on_q_grid() {
        let ts = TimeScale::qgrid(2.0, 0, 2, false).unwrap();
        assert_eq!(ts.points(), &[1.0, 2.0, 4.0]);
        // sigma(2) = 4, rho(4) = 2, mu(2) = (q-1)*2
        assert_eq!(ts.points()[ts.sigma(1).unwrap()], 4.0);
        assert_eq!(ts.points()[ts.rho(2).unwrap()], 2.0);
        assert_eq!(ts.mu(1).unwrap(), 2.0);
        assert_eq!(ts.kappa_last(), 1);
    }

    #[test]
    fn q_grid_with_zero_uses_smallest_positive_point() {
        let ts = TimeScale::qgrid(2.0, 0, 2, true).unwrap();
        assert_eq!(ts.points(), &[0.0, 1.0, 2.0, 4.0]);
        assert_eq!(ts.mu(0).unwrap(), 1.0);
    }

    #[test]
    fn regularity() {
        assert!(z4().is_regular());
        assert!(TimeScale::uniform(0.0, 1.0, 10).unwrap().is_regular());
        assert!(TimeScale::qgrid(2.0, 0, 2, true).unwrap().is_regular());
        // [0,1] sampled, then the isolated point 2: t = 1 is left-dense and right-scattered.
        let mixed = TimeScale::from_parts(&[0.0, 0.5, 1.0, 2.0], &[true, true, true, false]).unwrap();
        assert!(!mixed.is_regular());
        // {-1} followed by a sampled [0,1]: t = 0 is left-scattered and right-dense.
        let mixed = TimeScale::from_parts(&[-1.0, 0.0, 0.5, 1.0], &[false, true, true, true]).unwrap();
        assert!(!mixed.is_regular());
    }

    #[test]
    fn kappa_on_uniform() {
        let ts = TimeScale::uniform(0.0, 1.0, 8).unwrap();
        assert_eq!(ts.len(), 9);
        assert_eq!(ts.kappa_last(), 7);
        assert_eq!(ts.last(), 1.0);
    }

    #[test]
    fn constructor_sorts_and_dedups() {
        let ts = TimeScale::explicit(&[2.0, 0.0, 0.5, 2.0 + 1e-14]).unwrap();
        assert_eq!(ts.points(), &[0.0, 0.5, 2.0]);
        assert!(TimeScale::explicit(&[1.0, 1.0]).is_err());
        assert!(TimeScale::explicit(&[0.0, f64::NAN]).is_err());
        assert!(TimeScale::qgrid(1.0, 0, 3, false).is_err());
        assert!(TimeScale::integers(3, 3).is_err());
    }

    #[test]
    fn delta_derivative_examples() {
        let ts = z4();
        let sq = GridFunction::from_fn(ts.clone(), |t| t * t);
        assert_eq!(sq.delta_derivative(1).unwrap(), 3.0);
        let id = GridFunction::from_fn(ts.clone(), |t| t);
        for i in 0..=ts.kappa_last() {
            assert_eq!(id.delta_derivative(i).unwrap(), 1.0);
        }
        assert!(matches!(
            sq.delta_derivative(3),
            Err(Error::OutsideKappa { index: 3, kappa_last: 2 })
        ));

        let q = Arc::new(TimeScale::qgrid(2.0, 0, 2, false).unwrap());
        let sq = GridFunction::from_fn(q, |t| t * t);
        assert_eq!(sq.delta_derivative(1).unwrap(), 6.0);
    }

    #[test]
    fn delta_integral_examples() {
        let ts = z4();
        let k = 3.0;
        let f = GridFunction::from_fn(ts.clone(), |t| 2.0 * t * t * k);
        assert_eq!(f.delta_integral(0, 3).unwrap(), 10.0 * k);
        assert_eq!(GridFunction::constant(ts.clone(), 0.0).delta_integral(0, 3).unwrap(), 0.0);
        assert!(matches!(f.delta_integral(2, 1), Err(Error::ReversedBounds { .. })));

        let q = Arc::new(TimeScale::qgrid(2.0, 0, 2, true).unwrap());
        let f = GridFunction::from_fn(q, |t| 2.0 * t * t);
        assert_eq!(f.delta_integral(0, 3).unwrap(), 18.0);
    }

    #[test]
    fn uniform_last_point_is_exact() {
        let ts = TimeScale::uniform(-1.0, 1.0, 7).unwrap();
        assert_eq!(ts.last(), 1.0);
        assert!(ts.is_uniform());
        assert!(ts.has_dense_samples());
        assert!(!TimeScale::qgrid(2.0, 0, 3, false).unwrap().is_uniform());
        assert!(z4().is_integer_grid());
        assert!(!TimeScale::uniform(0.0, 3.0, 6).unwrap().is_integer_grid());
    }

    #[test]
    fn grid_function_length_checked() {
        let ts = z4();
        assert!(matches!(
            GridFunction::new(ts, vec![1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 4, got: 2 })
        ));
    }
}
