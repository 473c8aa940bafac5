//! Discounted cash flows, levelized ratios and central-difference marginals.

use thiserror::Error;

use crate::units::{Quantity, Unit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinanceError {
    #[error("discount rate {0} must exceed -1")]
    Rate(f64),
    #[error("cash flows mix units '{first}' and '{other}' of different dimension")]
    MixedDimensions { first: Unit, other: Unit },
    #[error("discounted output sums to zero")]
    SingularOutput,
    #[error("finite-difference step {0} must be positive")]
    Step(f64),
    #[error("non-finite value in cash flow at period {0}")]
    NonFinite(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cashflow {
    pub t: u32,
    pub amount: Quantity,
}

/// A list of per-period amounts and one discount rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CashflowSpec {
    pub flows: Vec<Cashflow>,
    pub rate: f64,
}

impl CashflowSpec {
    pub fn new(rate: f64) -> Self {
        CashflowSpec {
            flows: Vec::new(),
            rate,
        }
    }

    /// `amount` at every period in `start..=end`.
    pub fn constant(amount: Quantity, start: u32, end: u32, rate: f64) -> Self {
        let mut spec = CashflowSpec::new(rate);
        for t in start..=end {
            spec.push(t, amount.clone());
        }
        spec
    }

    pub fn push(&mut self, t: u32, amount: Quantity) -> &mut Self {
        self.flows.push(Cashflow { t, amount });
        self
    }

    pub fn with(mut self, t: u32, amount: Quantity) -> Self {
        self.push(t, amount);
        self
    }

    /// Every amount multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        CashflowSpec {
            flows: self
                .flows
                .iter()
                .map(|f| Cashflow {
                    t: f.t,
                    amount: Quantity::new(f.amount.value * factor, f.amount.unit.clone()),
                })
                .collect(),
            rate: self.rate,
        }
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<(), FinanceError> {
    if rate.is_finite() && rate > -1.0 {
        Ok(())
    } else {
        Err(FinanceError::Rate(rate))
    }
}

/// `Σ amount / (1+r)^t` over plain numbers.
pub(crate) fn discount(flows: impl IntoIterator<Item = (u32, f64)>, rate: f64) -> f64 {
    let base = 1.0 + rate;
    flows
        .into_iter()
        .map(|(t, a)| if t == 0 { a } else { a / base.powi(t as i32) })
        .sum()
}

/// Σ_t amount_t / (1+r)^t, in the unit of the first flow. Period 0 is
/// undiscounted. An empty spec sums to dimensionless zero.
pub fn discounted_sum(spec: &CashflowSpec) -> Result<Quantity, FinanceError> {
    check_rate(spec.rate)?;
    let Some(first) = spec.flows.first() else {
        return Ok(Quantity::dimensionless(0.0));
    };
    let unit = first.amount.unit.clone();
    let mut converted = Vec::with_capacity(spec.flows.len());
    for f in &spec.flows {
        if f.amount.unit.dimension != unit.dimension {
            return Err(FinanceError::MixedDimensions {
                first: unit,
                other: f.amount.unit.clone(),
            });
        }
        if !f.amount.value.is_finite() {
            return Err(FinanceError::NonFinite(f.t));
        }
        let value = if f.amount.unit.scale == unit.scale {
            f.amount.value
        } else {
            unit.from_canonical(f.amount.canonical())
        };
        converted.push((f.t, value));
    }
    Ok(Quantity::new(discount(converted, spec.rate), unit))
}

/// discounted_sum(costs) / discounted_sum(outputs), in cost unit per output unit.
pub fn levelized_cost(costs: &CashflowSpec, outputs: &CashflowSpec) -> Result<Quantity, FinanceError> {
    let c = discounted_sum(costs)?;
    let o = discounted_sum(outputs)?;
    if o.value == 0.0 {
        return Err(FinanceError::SingularOutput);
    }
    Ok(Quantity::new(c.value / o.value, c.unit.per(&o.unit)))
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn marginal<E, F>(mut f: F, x: f64, h: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<FinanceError>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(FinanceError::Step(h).into());
    }
    let hi = f(x + h)?;
    let lo = f(x - h)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Default step for marginals taken at `x`.
pub fn default_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usd(v: f64) -> Quantity {
        Quantity::new(v, Unit::parse("USD").unwrap())
    }

    #[test]
    fn zero_rate_is_plain_sum() {
        let spec = CashflowSpec::constant(usd(10.0), 1, 3, 0.0);
        assert_eq!(discounted_sum(&spec).unwrap().value, 30.0);
    }

    #[test]
    fn one_period_discount() {
        let spec = CashflowSpec::new(0.1).with(1, usd(110.0));
        assert!((discounted_sum(&spec).unwrap().value - 100.0).abs() < 1e-12);
    }

    #[test]
    fn period_zero_undiscounted() {
        let spec = CashflowSpec::new(0.5).with(0, usd(7.0));
        assert_eq!(discounted_sum(&spec).unwrap().value, 7.0);
    }

    #[test]
    fn annuity_closed_form() {
        let (c, r, t) = (250.0, 0.07, 20);
        let spec = CashflowSpec::constant(usd(c), 1, t, r);
        let expected = c * (1.0 - (1.0 + r).powi(-(t as i32))) / r;
        let got = discounted_sum(&spec).unwrap().value;
        assert!((got - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn mixed_units_convert_and_mixed_dimensions_fail() {
        let mwh = Quantity::parse("1MWh").unwrap();
        let kwh = Quantity::parse("500kWh").unwrap();
        let spec = CashflowSpec::new(0.0).with(1, mwh).with(2, kwh);
        let q = discounted_sum(&spec).unwrap();
        assert_eq!(q.unit.symbol(), "MWh");
        assert!((q.value - 1.5).abs() < 1e-12);
        let bad = CashflowSpec::new(0.0).with(1, usd(1.0)).with(2, Quantity::parse("1kWh").unwrap());
        assert!(matches!(discounted_sum(&bad), Err(FinanceError::MixedDimensions { .. })));
    }

    #[test]
    fn rate_must_exceed_minus_one() {
        let spec = CashflowSpec::new(-1.0).with(1, usd(1.0));
        assert_eq!(discounted_sum(&spec), Err(FinanceError::Rate(-1.0)));
    }

    #[test]
    fn levelized_hand_division() {
        let costs = CashflowSpec::new(0.0).with(1, usd(100.0));
        let outputs = CashflowSpec::new(0.0).with(1, Quantity::parse("50MWh").unwrap());
        let q = levelized_cost(&costs, &outputs).unwrap();
        assert_eq!(q.value, 2.0);
        assert_eq!(q.unit.dimension, Unit::parse("USD/MWh").unwrap().dimension);
        let half = levelized_cost(&costs, &outputs.scaled(2.0)).unwrap();
        assert_eq!(half.value, 1.0);
    }

    #[test]
    fn levelized_zero_output() {
        let costs = CashflowSpec::new(0.0).with(1, usd(100.0));
        let outputs = CashflowSpec::new(0.0).with(1, Quantity::parse("0MWh").unwrap());
        assert_eq!(levelized_cost(&costs, &outputs), Err(FinanceError::SingularOutput));
    }

    #[test]
    fn marginal_of_quadratic_and_affine() {
        let d = marginal::<FinanceError, _>(|x| Ok(x * x), 3.0, 0.1).unwrap();
        assert!((d - 6.0).abs() < 1e-12);
        let d = marginal::<FinanceError, _>(|x| Ok(4.0 + 2.5 * x), 10.0, 0.5).unwrap();
        assert_eq!(d, 2.5);
        let err = marginal::<FinanceError, _>(Ok, 1.0, 0.0).unwrap_err();
        assert_eq!(err, FinanceError::Step(0.0));
    }
}
