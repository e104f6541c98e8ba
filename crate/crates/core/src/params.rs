use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Mu1,
    Mu2,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Mu1 => Axis::Mu2,
            Axis::Mu2 => Axis::Mu1,
        }
    }

    /// Order a (free, fixed) value pair as (mu1, mu2).
    pub fn pair(self, on_axis: f64, other: f64) -> (f64, f64) {
        match self {
            Axis::Mu1 => (on_axis, other),
            Axis::Mu2 => (other, on_axis),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership with a relative rounding slack.
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.width().abs().max(1.0);
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// `n` equidistant points including both ends (`n == 1` gives the midpoint).
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.mid()],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.hi
                    } else {
                        self.lo + self.width() * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }

    /// Half-width of the symmetric interval `[-c, c]` containing this one.
    pub fn symmetric_half_width(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval { lo, hi }
        } else {
            let c = self.mid().clamp(other.lo, other.hi);
            Interval { lo: c, hi: c }
        }
    }
}

/// The rectangular parameter domain `[a1,b1] x [a2,b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub mu1: Interval,
    pub mu2: Interval,
}

impl ParamBox {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self> {
        Ok(Self {
            mu1: Interval::new(a1, b1)?,
            mu2: Interval::new(a2, b2)?,
        })
    }

    pub fn axis(&self, axis: Axis) -> Interval {
        match axis {
            Axis::Mu1 => self.mu1,
            Axis::Mu2 => self.mu2,
        }
    }

    pub fn contains(&self, mu1: f64, mu2: f64) -> bool {
        self.mu1.contains(mu1) && self.mu2.contains(mu2)
    }

    pub fn diagonal(&self) -> f64 {
        self.mu1.width().hypot(self.mu2.width())
    }

    pub fn is_subset_of(&self, other: &ParamBox) -> bool {
        other.mu1.contains(self.mu1.lo)
            && other.mu1.contains(self.mu1.hi)
            && other.mu2.contains(self.mu2.lo)
            && other.mu2.contains(self.mu2.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_ends() {
        let iv = Interval::new(1.0, 2.0).unwrap();
        let pts = iv.linspace(7);
        assert_eq!(pts[0], 1.0);
        assert_eq!(pts[6], 2.0);
        assert_eq!(pts[3], 1.5);
        assert_eq!(iv.linspace(1), vec![1.5]);
    }

    #[test]
    fn symmetric_half_width_covers_interval() {
        assert_eq!(Interval::new(1.0, 2.0).unwrap().symmetric_half_width(), 2.0);
        assert_eq!(Interval::new(-3.0, 0.5).unwrap().symmetric_half_width(), 3.0);
    }

    #[test]
    fn rejects_reversed_interval() {
        assert!(Interval::new(2.0, 1.0).is_err());
    }

    #[test]
    fn intersect_clips() {
        let a = Interval::new(0.0, 1.0).unwrap();
        let b = Interval::new(0.8, 1.4).unwrap();
        assert_eq!(b.intersect(&a), Interval { lo: 0.8, hi: 1.0 });
    }
}
