//! Globally adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated with a 15-point rule on the whole panel and on
//! its two halves; the difference is the panel error estimate. The panel
//! with the largest estimate is bisected until the total estimate meets the
//! tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use once_cell::sync::Lazy;

use crate::error::{Error, Result};

static RULE: Lazy<GaussLegendre> =
    Lazy::new(|| GaussLegendre::new(NonZeroUsize::new(15).expect("nonzero degree")));

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_panels: 20_000,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

impl Quadrature {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            ..Default::default()
        }
    }

    fn panel(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Panel {
        let mid = 0.5 * (a + b);
        let whole = RULE.integrate(a, b, &mut *f);
        let halves = RULE.integrate(a, mid, &mut *f) + RULE.integrate(mid, b, &mut *f);
        Panel {
            a,
            b,
            value: halves,
            error: (whole - halves).abs(),
        }
    }

    pub fn integrate(&self, f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<Estimate> {
        self.integrate_panels(f, &[a, b])
    }

    /// Integrates over `[breaks[0], breaks[last]]` starting from the given
    /// panel boundaries.
    pub fn integrate_panels(&self, mut f: impl FnMut(f64) -> f64, breaks: &[f64]) -> Result<Estimate> {
        if breaks.len() < 2 {
            return Err(Error::Domain("quadrature needs at least one panel".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Domain("quadrature breakpoints must be increasing".into()));
        }
        let mut heap = BinaryHeap::new();
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                heap.push(self.panel(&mut f, w[0], w[1]));
            }
        }
        let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
        loop {
            let value: f64 = heap.iter().map(|p| p.value).sum();
            let error: f64 = heap.iter().map(|p| p.error).sum();
            if !value.is_finite() || !error.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite integrand on [{a}, {b}]"
                )));
            }
            let tol = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= tol || heap.is_empty() {
                return Ok(Estimate { value, error });
            }
            if heap.len() >= self.max_panels {
                return Err(Error::NonConvergence {
                    a,
                    b,
                    estimate: value,
                    error,
                });
            }
            let worst = heap.pop().expect("heap is non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // panel cannot be split further in floating point
                return Err(Error::NonConvergence {
                    a,
                    b,
                    estimate: value,
                    error,
                });
            }
            heap.push(self.panel(&mut f, worst.a, mid));
            heap.push(self.panel(&mut f, mid, worst.b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = Quadrature::default();
        let r = q.integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0).unwrap();
        assert!((r.value - (9.0 - 1.5 + 6.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        // int_0^1 1/(1e-4 + x^2) dx = atan(100) * 100
        let q = Quadrature::with_rel_tol(1e-12);
        let r = q.integrate(|x| 1.0 / (1e-4 + x * x), 0.0, 1.0).unwrap();
        let exact = 100.0 * (100.0f64).atan();
        assert!((r.value - exact).abs() / exact < 1e-11);
    }

    #[test]
    fn empty_interval_is_zero() {
        let r = Quadrature::default().integrate(|x| x, 1.0, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn reports_non_convergence() {
        let q = Quadrature {
            rel_tol: 1e-14,
            abs_tol: 0.0,
            max_panels: 4,
        };
        let r = q.integrate(|x: f64| x.abs().sqrt().recip(), -1.0, 1.0);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn rejects_bad_breakpoints() {
        let q = Quadrature::default();
        assert!(q.integrate_panels(|x| x, &[0.0, 2.0, 1.0]).is_err());
        assert!(q.integrate_panels(|x| x, &[0.0]).is_err());
    }
}
