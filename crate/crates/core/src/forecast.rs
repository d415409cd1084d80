//! Exponential smoothing and intermittent-demand (Croston-style) forecasting.

use thiserror::Error;

use crate::scalar::Scalar;

/// Smoothing constant used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("smoothing constant {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("demand must be non-negative and finite, got {0}")]
    NegativeDemand(f64),
    #[error("period {current} does not advance past last observation {last}")]
    NonAdvancingPeriod { current: u64, last: u64 },
    #[error("no non-zero demand observed yet")]
    Uninitialized,
    #[error("forecast denominator {0} is not positive")]
    Domain(f64),
    #[error("observation sequence is empty")]
    EmptySeries,
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<(), ForecastError> {
    if alpha >= T::zero() && alpha <= T::one() {
        Ok(())
    } else {
        Err(ForecastError::InvalidAlpha(alpha.as_f64()))
    }
}

/// Single exponential smoothing state: the current one-step-ahead forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingState<T> {
    pub alpha: T,
    pub forecast: T,
}

impl<T: Scalar> SmoothingState<T> {
    /// `alpha = 0` is accepted and yields the identity update.
    pub fn new(alpha: T, forecast: T) -> Result<Self, ForecastError> {
        check_alpha(alpha)?;
        Ok(Self { alpha, forecast })
    }

    /// `F_{t+1} = F_t + α (x_t − F_t)`.
    #[must_use]
    pub fn update(self, observation: T) -> Self {
        Self {
            alpha: self.alpha,
            forecast: self.forecast + self.alpha * (observation - self.forecast),
        }
    }
}

/// Recursive exponential smoothing step.
pub fn ses_update<T: Scalar>(state: SmoothingState<T>, observation: T) -> SmoothingState<T> {
    state.update(observation)
}

/// Unrolled exponential smoothing:
/// `Σ_j α(1−α)^j x_{T−1−j} + (1−α)^T F_0`, newest observation weighted most.
pub fn ses_expand<T: Scalar>(alpha: T, observations: &[T], initial: T) -> Result<T, ForecastError> {
    check_alpha(alpha)?;
    if observations.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let decay = T::one() - alpha;
    let mut weight = alpha;
    let mut total = T::zero();
    for &x in observations.iter().rev() {
        total += weight * x;
        weight *= decay;
    }
    Ok(total + decay.powi(observations.len() as i32) * initial)
}

/// Which bias-corrected rate formula [`DemandForecastState::sba_forecast_with`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SbaVariant {
    /// `(1 − α/2) ẑ / (p̂ − α/2)`.
    #[default]
    Shifted,
    /// Syntetos–Boylan: `(1 − α/2) ẑ / p̂`.
    Standard,
}

/// Running Croston estimates of transaction size and inter-transaction interval.
///
/// Periods are 1-based. The first non-zero demand initializes the size
/// estimate to that demand and the interval estimate to its period index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandForecastState<T> {
    pub alpha: T,
    pub size_estimate: T,
    pub interval_estimate: T,
    pub last_observation_period: u64,
    pub initialized: bool,
}

impl<T: Scalar> DemandForecastState<T> {
    pub fn new(alpha: T) -> Result<Self, ForecastError> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            size_estimate: T::zero(),
            interval_estimate: T::one(),
            last_observation_period: 0,
            initialized: false,
        })
    }

    /// An already-initialized state with the given estimates.
    pub fn with_estimates(
        alpha: T,
        size_estimate: T,
        interval_estimate: T,
        last_observation_period: u64,
    ) -> Result<Self, ForecastError> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            size_estimate,
            interval_estimate,
            last_observation_period,
            initialized: true,
        })
    }

    /// Applies one period's demand. Zero demand leaves the state untouched.
    pub fn update(&self, demand: T, current_period: u64) -> Result<Self, ForecastError> {
        if !(demand >= T::zero()) || !demand.is_finite() {
            return Err(ForecastError::NegativeDemand(demand.as_f64()));
        }
        if current_period <= self.last_observation_period {
            return Err(ForecastError::NonAdvancingPeriod {
                current: current_period,
                last: self.last_observation_period,
            });
        }
        if demand == T::zero() {
            return Ok(*self);
        }
        let gap = T::lit((current_period - self.last_observation_period) as f64);
        let mut next = *self;
        if self.initialized {
            let a = self.alpha;
            next.size_estimate = a * demand + (T::one() - a) * self.size_estimate;
            next.interval_estimate = a * gap + (T::one() - a) * self.interval_estimate;
        } else {
            next.size_estimate = demand;
            next.interval_estimate = gap;
            next.initialized = true;
        }
        next.last_observation_period = current_period;
        Ok(next)
    }

    /// Per-period demand rate `ẑ / p̂`.
    pub fn rate(&self) -> Result<T, ForecastError> {
        if !self.initialized {
            return Err(ForecastError::Uninitialized);
        }
        Ok(self.size_estimate / self.interval_estimate)
    }

    pub fn sba_forecast(&self) -> Result<T, ForecastError> {
        self.sba_forecast_with(SbaVariant::Shifted)
    }

    pub fn sba_forecast_with(&self, variant: SbaVariant) -> Result<T, ForecastError> {
        if !self.initialized {
            return Err(ForecastError::Uninitialized);
        }
        let half = self.alpha / T::lit(2.0);
        let denom = match variant {
            SbaVariant::Shifted => self.interval_estimate - half,
            SbaVariant::Standard => self.interval_estimate,
        };
        if !(denom > T::zero()) {
            return Err(ForecastError::Domain(denom.as_f64()));
        }
        Ok((T::one() - half) * self.size_estimate / denom)
    }
}

pub fn croston_update<T: Scalar>(
    state: &DemandForecastState<T>,
    demand: T,
    current_period: u64,
) -> Result<DemandForecastState<T>, ForecastError> {
    state.update(demand, current_period)
}

pub fn croston_rate<T: Scalar>(state: &DemandForecastState<T>) -> Result<T, ForecastError> {
    state.rate()
}

pub fn sba_forecast<T: Scalar>(state: &DemandForecastState<T>) -> Result<T, ForecastError> {
    state.sba_forecast()
}

/// Per-period output of [`forecast_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow<T> {
    pub period: u64,
    pub demand: T,
    pub smoothed: T,
    pub size_estimate: Option<T>,
    pub interval_estimate: Option<T>,
    pub croston_rate: Option<T>,
    pub sba_forecast: Option<T>,
}

/// Runs exponential smoothing and Croston/SBA over a demand series
/// (period `t` is the `t`-th entry, 1-based). Smoothing starts from the first
/// observation.
pub fn forecast_series<T: Scalar>(
    demands: &[T],
    alpha: T,
    variant: SbaVariant,
) -> Result<Vec<ForecastRow<T>>, ForecastError> {
    let first = *demands.first().ok_or(ForecastError::EmptySeries)?;
    let mut ses = SmoothingState::new(alpha, first)?;
    let mut croston = DemandForecastState::new(alpha)?;
    let mut rows = Vec::with_capacity(demands.len());
    for (i, &demand) in demands.iter().enumerate() {
        let period = i as u64 + 1;
        ses = ses.update(demand);
        croston = croston.update(demand, period)?;
        let init = croston.initialized;
        rows.push(ForecastRow {
            period,
            demand,
            smoothed: ses.forecast,
            size_estimate: init.then_some(croston.size_estimate),
            interval_estimate: init.then_some(croston.interval_estimate),
            croston_rate: croston.rate().ok(),
            sba_forecast: croston.sba_forecast_with(variant).ok(),
        });
    }
    Ok(rows)
}
