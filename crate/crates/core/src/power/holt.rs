use nalgebra::DVector;

use crate::error::{Error, Result};

/// Level / trend pair of Holt's linear exponential smoothing, applied
/// component-wise with shared smoothing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltState {
    pub alpha: f64,
    pub beta: f64,
    pub level: DVector<f64>,
    pub trend: DVector<f64>,
}

impl HoltState {
    /// Level `x2`, trend `x2 - x1`.
    pub fn initialize(alpha: f64, beta: f64, x1: &DVector<f64>, x2: &DVector<f64>) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if x1.len() != x2.len() {
            return Err(Error::Dimension {
                context: "Holt initialization",
                expected: x1.len(),
                actual: x2.len(),
            });
        }
        Ok(HoltState {
            alpha,
            beta,
            level: x2.clone(),
            trend: x2 - x1,
        })
    }

    pub fn len(&self) -> usize {
        self.level.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level.is_empty()
    }

    /// `L + T`: the forecast implied by the current level and trend.
    pub fn forecast(&self) -> DVector<f64> {
        &self.level + &self.trend
    }

    /// Forecast straight after initialization, written in the affine form
    /// `x̂ = α x_t + u` so it can share the filter's transition.
    pub fn initial_forecast(&self, x_t: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let pred = self.forecast();
        let u = &pred - self.alpha * x_t;
        (pred, u)
    }
}

/// Absorbs `x_t`, returning `(L_t + T_t, u_{t+1}, updated state)` where
/// `u_{t+1} = (1 − α)(L_{t−1} + T_{t−1}) + T_t`.
pub fn holt_predict(holt: &HoltState, x_t: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, HoltState)> {
    if holt.is_empty() && !x_t.is_empty() {
        return Err(Error::HoltNotInitialized);
    }
    if x_t.len() != holt.len() {
        return Err(Error::Dimension {
            context: "Holt input",
            expected: holt.len(),
            actual: x_t.len(),
        });
    }
    let (a, b) = (holt.alpha, holt.beta);
    let prior = holt.forecast();
    let level = a * x_t + (1.0 - a) * &prior;
    let trend = b * (&level - &holt.level) + (1.0 - b) * &holt.trend;
    let pred = &level + &trend;
    let u = (1.0 - a) * &prior + &trend;
    Ok((
        pred,
        u,
        HoltState {
            alpha: a,
            beta: b,
            level,
            trend,
        },
    ))
}
