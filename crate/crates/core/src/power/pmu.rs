use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{e_index, f_index};
use crate::error::{Error, Result};
use crate::net::{Admittance, IgesModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmuChannel {
    VoltageReal(usize),
    VoltageImag(usize),
    /// Current leaving bus `from` towards `to`.
    BranchReal { from: usize, to: usize },
    BranchImag { from: usize, to: usize },
    InjectionReal(usize),
    InjectionImag(usize),
}

impl PmuChannel {
    pub fn name(&self) -> String {
        match *self {
            PmuChannel::VoltageReal(b) => format!("e_{b}"),
            PmuChannel::VoltageImag(b) => format!("f_{b}"),
            PmuChannel::BranchReal { from, to } => format!("ibr_{from}_{to}"),
            PmuChannel::BranchImag { from, to } => format!("ibi_{from}_{to}"),
            PmuChannel::InjectionReal(b) => format!("inr_{b}"),
            PmuChannel::InjectionImag(b) => format!("ini_{b}"),
        }
    }

    pub fn is_voltage(&self) -> bool {
        matches!(self, PmuChannel::VoltageReal(_) | PmuChannel::VoltageImag(_))
    }
}

/// Linear PMU model `z = H x` over the power state, rows ordered voltages,
/// branch currents, injected currents (real before imaginary in each pair).
#[derive(Debug, Clone, PartialEq)]
pub struct PmuMeasurementModel {
    pub h: DMatrix<f64>,
    pub channels: Vec<PmuChannel>,
}

impl PmuMeasurementModel {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
}

/// Writes the real and imaginary rows of `Σ c_k V_k` into `h`.
fn put_complex(h: &mut DMatrix<f64>, row: usize, terms: &[(usize, Complex64)]) {
    for &(k, c) in terms {
        h[(row, e_index(k))] += c.re;
        h[(row, f_index(k))] -= c.im;
        h[(row + 1, e_index(k))] += c.im;
        h[(row + 1, f_index(k))] += c.re;
    }
}

pub fn build_measurement_model(
    model: &IgesModel,
    y: &Admittance,
    pmu_buses: &[usize],
    measured_branches: &[(usize, usize)],
) -> Result<PmuMeasurementModel> {
    let bus_pos = |id: usize, element: String| {
        model.bus_index(id).ok_or(Error::DanglingReference {
            element,
            kind: "bus",
            id,
        })
    };
    let n_rows = 4 * pmu_buses.len() + 2 * measured_branches.len();
    let mut h = DMatrix::zeros(n_rows, 2 * model.n_buses());
    let mut channels = Vec::with_capacity(n_rows);
    let mut row = 0;

    for &b in pmu_buses {
        let k = bus_pos(b, "PMU".into())?;
        h[(row, e_index(k))] = 1.0;
        h[(row + 1, f_index(k))] = 1.0;
        channels.push(PmuChannel::VoltageReal(b));
        channels.push(PmuChannel::VoltageImag(b));
        row += 2;
    }

    for &(a, b) in measured_branches {
        let element = format!("measured branch {a}-{b}");
        let pa = bus_pos(a, element.clone())?;
        let pb = bus_pos(b, element.clone())?;
        let mut terms = Vec::new();
        for br in &model.branches {
            let (ff, ft, tf, tt) = br.two_port();
            if br.from == a && br.to == b {
                terms.push((pa, ff));
                terms.push((pb, ft));
            } else if br.from == b && br.to == a {
                terms.push((pa, tt));
                terms.push((pb, tf));
            }
        }
        if terms.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{element}: no branch joins buses {a} and {b}"
            )));
        }
        put_complex(&mut h, row, &terms);
        channels.push(PmuChannel::BranchReal { from: a, to: b });
        channels.push(PmuChannel::BranchImag { from: a, to: b });
        row += 2;
    }

    for &b in pmu_buses {
        let i = bus_pos(b, "PMU".into())?;
        let terms: Vec<_> = (0..model.n_buses())
            .map(|j| (j, y.entry(i, j)))
            .filter(|(_, c)| c.norm() != 0.0)
            .collect();
        put_complex(&mut h, row, &terms);
        channels.push(PmuChannel::InjectionReal(b));
        channels.push(PmuChannel::InjectionImag(b));
        row += 2;
    }
    debug_assert_eq!(row, n_rows);
    Ok(PmuMeasurementModel { h, channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_ybus;
    use crate::power::flow::tests::two_bus_model;
    use nalgebra::DVector;

    #[test]
    fn branch_current_hand_value() {
        let m = two_bus_model(0.0);
        let y = build_ybus(&m);
        let pmu = build_measurement_model(&m, &y, &[], &[(1, 2)]).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 1.0, -0.01]);
        let z = &pmu.h * &x;
        assert!((z[0] - 0.1).abs() < 1e-15);
        assert!(z[1].abs() < 1e-15);
        assert_eq!(pmu.channels[0].name(), "ibr_1_2");
    }

    #[test]
    fn reversed_branch_measures_other_end() {
        let m = two_bus_model(0.0);
        let y = build_ybus(&m);
        let pmu = build_measurement_model(&m, &y, &[], &[(2, 1)]).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 1.0, -0.01]);
        assert!(((&pmu.h * &x)[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn voltage_rows_select() {
        let m = two_bus_model(0.0);
        let y = build_ybus(&m);
        let pmu = build_measurement_model(&m, &y, &[2], &[]).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7, 1.1, 0.2]);
        let z = &pmu.h * &x;
        assert_eq!((z[0], z[1]), (1.1, 0.2));
        assert_eq!(pmu.n_channels(), 4);
    }

    #[test]
    fn unknown_branch_rejected() {
        let m = two_bus_model(0.0);
        let y = build_ybus(&m);
        assert!(build_measurement_model(&m, &y, &[], &[(1, 1)]).is_err());
        assert!(build_measurement_model(&m, &y, &[7], &[]).is_err());
    }
}
