//! Joint linear model and the Kalman filter running on it.

mod filter;
mod run;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasSystemMatrices;
use crate::measurement::MeasurementLayout;

pub use filter::{kf_predict, kf_update, robust_scale, FilterState};
pub use run::{run_estimation, run_estimation_with, EstimationProblem, EstimationTrace, FilterSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    /// Power and gas in one filter, GTU loads predicted from voltages.
    Integrated,
    /// Gas block alone, GTU loads smoothed like any other load.
    SeparatedGas,
    /// Power block alone.
    SeparatedPower,
}

impl EstimationMode {
    pub fn has_power(self) -> bool {
        self != EstimationMode::SeparatedGas
    }

    pub fn has_gas(self) -> bool {
        self != EstimationMode::SeparatedPower
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EstimationMode::Integrated => "integrated",
            EstimationMode::SeparatedGas => "separated-gas",
            EstimationMode::SeparatedPower => "separated-power",
        }
    }
}

impl fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integrated" => Ok(EstimationMode::Integrated),
            "separated-gas" => Ok(EstimationMode::SeparatedGas),
            "separated-power" => Ok(EstimationMode::SeparatedPower),
            other => Err(Error::InvalidArgument(format!("unknown estimation mode '{other}'"))),
        }
    }
}

/// Diagonal of Q by state class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub power: f64,
    pub density: f64,
    pub flow: f64,
}

impl ProcessNoise {
    pub fn uniform(q: f64) -> Self {
        ProcessNoise {
            power: q,
            density: q,
            flow: q,
        }
    }
}

/// `x_{t+1} = F x_t + u + w`, `z = H x + v`, with diagonal Q and R.
#[derive(Debug, Clone, PartialEq)]
pub struct IgesSystemModel {
    pub mode: EstimationMode,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    /// Columns of the joint state kept by this model.
    pub state_cols: std::ops::Range<usize>,
    /// Rows of the joint measurement vector kept by this model.
    pub channel_rows: Vec<usize>,
    /// Power states at the front of this model's state (0 or 2·n_B).
    pub n_power: usize,
}

impl IgesSystemModel {
    pub fn n_states(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_gas(&self) -> usize {
        self.n_states() - self.n_power
    }

    /// Picks this model's rows out of a joint measurement vector.
    pub fn select(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.channel_rows.len(), self.channel_rows.iter().map(|&r| z[r]))
    }

    /// Same model reduced to one of the separated blocks.
    pub fn restrict(&self, mode: EstimationMode) -> Result<IgesSystemModel> {
        if self.mode != EstimationMode::Integrated {
            return Err(Error::InvalidArgument("only the integrated model can be restricted".into()));
        }
        if mode == EstimationMode::Integrated {
            return Ok(self.clone());
        }
        let n = self.n_states();
        let cols = if mode.has_power() { 0..self.n_power } else { self.n_power..n };
        let rows: Vec<usize> = (0..self.n_channels())
            .filter(|&r| {
                let in_power = (0..self.n_power).any(|c| self.h[(r, c)] != 0.0);
                in_power == mode.has_power()
            })
            .collect();
        let k = cols.len();
        let f = self.f.view((cols.start, cols.start), (k, k)).into_owned();
        let h = DMatrix::from_fn(rows.len(), k, |i, j| self.h[(rows[i], cols.start + j)]);
        let q = self.q.rows(cols.start, k).into_owned();
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.r[i]));
        Ok(IgesSystemModel {
            mode,
            f,
            h,
            q,
            r,
            state_cols: cols,
            channel_rows: rows,
            n_power: if mode.has_power() { self.n_power } else { 0 },
        })
    }
}

/// Assembles F_I = diag(α I, F_G), H_I from the joint layout, Q by state
/// class and R from the channel standard deviations.
pub fn build_integrated_model(
    gas: &GasSystemMatrices,
    layout: &MeasurementLayout,
    alpha: f64,
    q: ProcessNoise,
    sigma: &DVector<f64>,
) -> Result<IgesSystemModel> {
    let np = layout.n_power_states;
    let ng = gas.dim();
    let n = np + ng;
    if layout.h.ncols() != n {
        return Err(Error::Dimension {
            context: "measurement matrix columns",
            expected: n,
            actual: layout.h.ncols(),
        });
    }
    if sigma.len() != layout.len() {
        return Err(Error::Dimension {
            context: "channel standard deviations",
            expected: layout.len(),
            actual: sigma.len(),
        });
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "measurement standard deviations must be positive, got {s}"
        )));
    }
    for v in [q.power, q.density, q.flow] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("process noise must be nonnegative, got {v}")));
        }
    }
    let mut f = DMatrix::zeros(n, n);
    f.view_mut((0, 0), (np, np)).fill_diagonal(alpha);
    f.view_mut((np, np), (ng, ng)).copy_from(&gas.transition);

    let n_nodes = gas.layout.n_nodes();
    let q_diag = DVector::from_fn(n, |i, _| {
        if i < np {
            q.power
        } else if i < np + n_nodes {
            q.density
        } else {
            q.flow
        }
    });
    Ok(IgesSystemModel {
        mode: EstimationMode::Integrated,
        f,
        h: layout.h.clone(),
        q: q_diag,
        r: sigma.map(|s| s * s),
        state_cols: 0..n,
        channel_rows: (0..layout.len()).collect(),
        n_power: np,
    })
}
