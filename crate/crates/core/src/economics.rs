//! Supplier and retailer profit functions and the sequential decision search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Grid points per axis in the coarse pass.
pub const COARSE_POINTS: usize = 41;
/// Refinement spacing relative to the coarse spacing.
pub const REFINE_FACTOR: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconomicsError {
    #[error("empty search interval for {axis}: [{lo}, {hi}]")]
    EmptyBox {
        axis: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("quantity lower bound must be positive, got {0}")]
    NonPositiveQuantity(f64),
}

/// Cost, revenue and demand coefficients of the two-player model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicParams<T> {
    /// Supplier unit revenue.
    pub e: T,
    /// Supplier unit production cost.
    pub c_s: T,
    /// Online-service cost coefficient.
    pub c_a: T,
    /// Transaction/logistics unit cost.
    pub c_t: T,
    pub lambda_s: T,
    pub lambda: T,
    pub lambda_r: T,
    /// Market size coefficient.
    pub a: T,
    /// Price sensitivity.
    pub beta: T,
    /// Demand lift from online effort.
    pub theta: T,
    /// Effort dilution.
    pub phi: T,
    /// Wholesale price.
    pub w: T,
    /// Retailer unit cost.
    pub c_r: T,
    /// Retailer fixed-cost coefficient.
    pub c: T,
}

impl<T: Scalar> Default for EconomicParams<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            e: l(5.0),
            c_s: l(3.0),
            c_a: l(0.8),
            c_t: l(0.1),
            lambda_s: l(0.5),
            lambda: l(0.2),
            lambda_r: l(0.5),
            a: l(2.0),
            beta: l(1.5),
            theta: l(0.6),
            phi: l(0.3),
            w: l(6.0),
            c_r: l(4.0),
            c: l(50.0),
        }
    }
}

/// `Q0 (e − c_s) − c_A A0² / 2 − (λ_s Q0 + A0) c_T`.
pub fn profit_supplier<T: Scalar>(params: &EconomicParams<T>, quantity: T, effort: T) -> T {
    quantity * (params.e - params.c_s)
        - params.c_a * effort * effort / T::lit(2.0)
        - (params.lambda_s * quantity + effort) * params.c_t
}

/// `[a Q0 (1 − λ) − β p0 + θ A0 (1 − φ)] (p0 − c_R) − Q0 (w + λ_R c_T) − c / Q0²`.
pub fn profit_retailer<T: Scalar>(
    params: &EconomicParams<T>,
    price: T,
    quantity: T,
    effort: T,
) -> T {
    let demand = params.a * quantity * (T::one() - params.lambda) - params.beta * price
        + params.theta * effort * (T::one() - params.phi);
    demand * (price - params.c_r)
        - quantity * (params.w + params.lambda_r * params.c_t)
        - params.c / (quantity * quantity)
}

/// Closed interval searched for one decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    fn check(&self, axis: &'static str) -> Result<(), EconomicsError> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(EconomicsError::EmptyBox {
                axis,
                lo: self.lo.as_f64(),
                hi: self.hi.as_f64(),
            });
        }
        Ok(())
    }

    /// `points` evenly spaced values from `lo` to `hi` (one value if degenerate).
    pub fn grid(&self, points: usize) -> Vec<T> {
        if self.lo == self.hi || points < 2 {
            return vec![self.lo];
        }
        let span = self.hi - self.lo;
        let steps = T::from_usize_lossy(points - 1);
        (0..points)
            .map(|i| {
                if i == points - 1 {
                    self.hi
                } else {
                    self.lo + span * T::from_usize_lossy(i) / steps
                }
            })
            .collect()
    }

    fn spacing(&self, points: usize) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(points.max(2) - 1)
    }

    /// Neighbourhood of `center` one `radius` wide on each side, clipped to `self`.
    fn around(&self, center: T, radius: T) -> Self {
        Self {
            lo: (center - radius).max(self.lo),
            hi: (center + radius).min(self.hi),
        }
    }
}

/// Search box for price, quantity and online effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionBounds<T> {
    pub price: Interval<T>,
    pub quantity: Interval<T>,
    pub effort: Interval<T>,
}

impl<T: Scalar> DecisionBounds<T> {
    pub fn validate(&self) -> Result<(), EconomicsError> {
        self.price.check("price")?;
        self.quantity.check("quantity")?;
        self.effort.check("effort")?;
        if !(self.quantity.lo > T::zero()) {
            return Err(EconomicsError::NonPositiveQuantity(
                self.quantity.lo.as_f64(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decisions<T> {
    pub price: T,
    pub quantity: T,
    pub effort: T,
    pub supplier_profit: T,
    pub retailer_profit: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionSearch<T> {
    pub coarse: Decisions<T>,
    pub refined: Decisions<T>,
}

/// Supplier best response: the effort on `grid` maximizing supplier profit
/// at `quantity`. Earliest grid point wins ties.
fn best_effort<T: Scalar>(params: &EconomicParams<T>, quantity: T, grid: &[T]) -> T {
    let mut best = (grid[0], profit_supplier(params, quantity, grid[0]));
    for &a in &grid[1..] {
        let p = profit_supplier(params, quantity, a);
        if p > best.1 {
            best = (a, p);
        }
    }
    best.0
}

fn best_retailer<T: Scalar>(
    params: &EconomicParams<T>,
    prices: &[T],
    quantities: &[T],
    efforts: &[T],
) -> Decisions<T> {
    let mut best: Option<Decisions<T>> = None;
    for &q in quantities {
        let effort = best_effort(params, q, efforts);
        for &p in prices {
            let r = profit_retailer(params, p, q, effort);
            if best.is_none_or(|b| r > b.retailer_profit) {
                best = Some(Decisions {
                    price: p,
                    quantity: q,
                    effort,
                    supplier_profit: profit_supplier(params, q, effort),
                    retailer_profit: r,
                });
            }
        }
    }
    best.expect("grids are non-empty")
}

/// Sequential decision search. The supplier's effort is its best response on
/// the effort grid given the quantity; the retailer picks price and quantity
/// maximizing its profit under that response. A coarse grid
/// ([`COARSE_POINTS`] per axis) is followed by one refinement pass at
/// [`REFINE_FACTOR`]× finer spacing within one coarse cell of the incumbent.
pub fn optimize_decisions<T: Scalar>(
    params: &EconomicParams<T>,
    bounds: &DecisionBounds<T>,
) -> Result<DecisionSearch<T>, EconomicsError> {
    bounds.validate()?;
    let coarse = best_retailer(
        params,
        &bounds.price.grid(COARSE_POINTS),
        &bounds.quantity.grid(COARSE_POINTS),
        &bounds.effort.grid(COARSE_POINTS),
    );
    let fine_points = 2 * REFINE_FACTOR + 1;
    let local = |axis: &Interval<T>, center: T| {
        let h = axis.spacing(COARSE_POINTS);
        let sub = axis.around(center, h);
        let points = if sub.hi - sub.lo < h * T::lit(1.5) {
            REFINE_FACTOR + 1
        } else {
            fine_points
        };
        sub.grid(points)
    };
    let refined = best_retailer(
        params,
        &local(&bounds.price, coarse.price),
        &local(&bounds.quantity, coarse.quantity),
        &local(&bounds.effort, coarse.effort),
    );
    // The refined grids contain the coarse incumbent, so this only guards
    // against rounding in the grid construction.
    let refined = if refined.retailer_profit >= coarse.retailer_profit {
        refined
    } else {
        coarse
    };
    Ok(DecisionSearch { coarse, refined })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed() -> EconomicParams<f64> {
        EconomicParams {
            e: 0.0,
            c_s: 0.0,
            c_a: 1.0,
            c_t: 0.0,
            lambda_s: 0.0,
            lambda: 0.0,
            lambda_r: 0.0,
            a: 0.0,
            beta: 1.0,
            theta: 0.0,
            phi: 0.0,
            w: 0.0,
            c_r: 0.0,
            c: 0.0,
        }
    }

    #[test]
    fn supplier_substitution() {
        let p = EconomicParams {
            e: 5.0,
            c_s: 3.0,
            ..zeroed()
        };
        assert_eq!(profit_supplier(&p, 10.0, 0.0), 20.0);
        let p = EconomicParams {
            lambda_s: 0.0,
            c_t: 0.7,
            ..p
        };
        assert_eq!(profit_supplier(&p, 10.0, 0.0), 10.0 * (5.0 - 3.0));
    }

    #[test]
    fn retailer_substitution() {
        let p = EconomicParams {
            a: 1.0,
            beta: 1.0,
            c_r: 1.0,
            ..zeroed()
        };
        assert_eq!(profit_retailer(&p, 2.0, 10.0, 0.0), 8.0);
    }

    #[test]
    fn retailer_zero_margin() {
        let p = EconomicParams::<f64>::default();
        let q = 7.0;
        let expected = -q * (p.w + p.lambda_r * p.c_t) - p.c / (q * q);
        assert_eq!(profit_retailer(&p, p.c_r, q, 1.3), expected);
    }

    #[test]
    fn price_sensitive_market_prices_at_floor() {
        let p = EconomicParams {
            beta: 50.0,
            a: 1.0,
            c_r: 1.0,
            ..zeroed()
        };
        let bounds = DecisionBounds {
            price: Interval::new(2.0, 10.0),
            quantity: Interval::new(1.0, 5.0),
            effort: Interval::new(0.0, 1.0),
        };
        let s = optimize_decisions(&p, &bounds).unwrap();
        assert_eq!(s.refined.price, 2.0);
    }

    #[test]
    fn refinement_never_worse() {
        let p = EconomicParams::<f64>::default();
        let bounds = DecisionBounds {
            price: Interval::new(4.0, 12.0),
            quantity: Interval::new(1.0, 30.0),
            effort: Interval::new(0.0, 5.0),
        };
        let s = optimize_decisions(&p, &bounds).unwrap();
        assert!(s.refined.retailer_profit >= s.coarse.retailer_profit);
    }

    #[test]
    fn rejects_bad_boxes() {
        let p = EconomicParams::<f64>::default();
        let mut bounds = DecisionBounds {
            price: Interval::new(4.0, 1.0),
            quantity: Interval::new(1.0, 30.0),
            effort: Interval::new(0.0, 5.0),
        };
        assert!(matches!(
            optimize_decisions(&p, &bounds),
            Err(EconomicsError::EmptyBox { axis: "price", .. })
        ));
        bounds.price = Interval::new(1.0, 4.0);
        bounds.quantity.lo = 0.0;
        assert!(matches!(
            optimize_decisions(&p, &bounds),
            Err(EconomicsError::NonPositiveQuantity(_))
        ));
    }

    #[test]
    fn positive_transaction_cost_pins_effort_at_zero() {
        let p = EconomicParams::<f64>::default();
        let bounds = DecisionBounds {
            price: Interval::new(4.0, 12.0),
            quantity: Interval::new(1.0, 30.0),
            effort: Interval::new(0.0, 5.0),
        };
        assert_eq!(optimize_decisions(&p, &bounds).unwrap().refined.effort, 0.0);
    }
}
