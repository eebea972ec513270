use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::IgesSystemModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    /// Most recent innovations, newest last.
    pub window: VecDeque<DVector<f64>>,
    pub window_len: usize,
}

impl FilterState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>, window_len: usize) -> Self {
        FilterState {
            x,
            p,
            window: VecDeque::with_capacity(window_len),
            window_len: window_len.max(1),
        }
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `x ← F x + u`, `P ← F P Fᵀ + Q`.
pub fn kf_predict(sys: &IgesSystemModel, fs: &FilterState, u: &DVector<f64>) -> FilterState {
    let x = &sys.f * &fs.x + u;
    let mut p = &sys.f * &fs.p * sys.f.transpose();
    for i in 0..p.nrows() {
        p[(i, i)] += sys.q[i];
    }
    symmetrize(&mut p);
    FilterState {
        x,
        p,
        window: fs.window.clone(),
        window_len: fs.window_len,
    }
}

/// Pushes `innovation` into the window and returns the diagonal
/// `μ′_i = max(1, ([mean e eᵀ − H P Hᵀ] R⁻¹)_ii)`.
pub fn robust_scale(sys: &IgesSystemModel, fs: &mut FilterState, innovation: &DVector<f64>) -> DVector<f64> {
    if fs.window.len() == fs.window_len {
        fs.window.pop_front();
    }
    fs.window.push_back(innovation.clone());
    let count = fs.window.len() as f64;
    let ph = &fs.p * sys.h.transpose();
    DVector::from_fn(sys.n_channels(), |i, _| {
        let sample = fs.window.iter().map(|e| e[i] * e[i]).sum::<f64>() / count;
        let hph = sys.h.row(i).dot(&ph.column(i).transpose());
        let mu = (sample - hph) / sys.r[i];
        mu.max(1.0)
    })
}

/// Measurement update with gain `K = P Hᵀ (H P Hᵀ + μ′R)⁻¹`.
/// `μ′ = 1` reproduces the ordinary Kalman update exactly.
pub fn kf_update(
    sys: &IgesSystemModel,
    fs: &FilterState,
    z: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<FilterState> {
    let m = sys.n_channels();
    for (context, len) in [("measurement vector", z.len()), ("robust scaling", mu.len())] {
        if len != m {
            return Err(Error::Dimension {
                context,
                expected: m,
                actual: len,
            });
        }
    }
    let hp = &sys.h * &fs.p;
    let mut s = &hp * sys.h.transpose();
    for i in 0..m {
        s[(i, i)] += mu[i] * sys.r[i];
    }
    symmetrize(&mut s);
    let innovation = z - &sys.h * &fs.x;
    let chol = s.clone().cholesky().ok_or_else(|| {
        let d = s.diagonal();
        let max = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = d.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        Error::Singular {
            what: "innovation covariance",
            rcond: if max > 0.0 { min / max } else { 0.0 },
        }
    })?;
    // Kᵀ = S⁻¹ H P
    let kt = chol.solve(&hp);
    let x = &fs.x + kt.transpose() * innovation;
    let mut p = &fs.p - kt.transpose() * hp;
    symmetrize(&mut p);
    Ok(FilterState {
        x,
        p,
        window: fs.window.clone(),
        window_len: fs.window_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimationMode;

    pub(crate) fn scalar_system(f: f64, q: f64, h: f64, r: f64) -> IgesSystemModel {
        IgesSystemModel {
            mode: EstimationMode::SeparatedGas,
            f: DMatrix::from_element(1, 1, f),
            h: DMatrix::from_element(1, 1, h),
            q: DVector::from_element(1, q),
            r: DVector::from_element(1, r),
            state_cols: 0..1,
            channel_rows: vec![0],
            n_power: 0,
        }
    }

    fn one(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn predict_identity_no_noise() {
        let sys = IgesSystemModel {
            f: DMatrix::identity(2, 2),
            q: DVector::zeros(2),
            ..scalar_system(1.0, 0.0, 1.0, 1.0)
        };
        let fs = FilterState::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2) * 3.0, 10);
        let next = kf_predict(&sys, &fs, &DVector::zeros(2));
        assert_eq!(next.x, fs.x);
        assert_eq!(next.p, fs.p);
    }

    #[test]
    fn predict_scalar() {
        let sys = scalar_system(1.0, 0.5, 1.0, 1.0);
        let fs = FilterState::new(one(0.0), DMatrix::from_element(1, 1, 1.0), 10);
        assert_eq!(kf_predict(&sys, &fs, &one(0.0)).p[(0, 0)], 1.5);
    }

    #[test]
    fn update_scalar() {
        let sys = scalar_system(1.0, 0.0, 1.0, 1.0);
        let fs = FilterState::new(one(0.0), DMatrix::from_element(1, 1, 1.0), 10);
        let up = kf_update(&sys, &fs, &one(2.0), &one(1.0)).unwrap();
        assert!((up.x[0] - 1.0).abs() < 1e-15);
        assert!((up.p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_state() {
        let sys = scalar_system(1.0, 0.0, 2.0, 1.0);
        let fs = FilterState::new(one(1.5), DMatrix::from_element(1, 1, 1.0), 10);
        let up = kf_update(&sys, &fs, &one(3.0), &one(1.0)).unwrap();
        assert_eq!(up.x[0], 1.5);
    }

    #[test]
    fn robust_scalar_hand_value() {
        // H P Hᵀ = 0.5, e = 3, R = 1, window 1
        let sys = scalar_system(1.0, 0.0, 1.0, 1.0);
        let mut fs = FilterState::new(one(0.0), DMatrix::from_element(1, 1, 0.5), 1);
        let mu = robust_scale(&sys, &mut fs, &one(3.0));
        assert!((mu[0] - 8.5).abs() < 1e-15);
        let mu = robust_scale(&sys, &mut fs, &one(0.0));
        assert_eq!(mu[0], 1.0);
        assert_eq!(fs.window.len(), 1);
    }

    #[test]
    fn huge_scale_ignores_channel() {
        let sys = scalar_system(1.0, 0.0, 1.0, 1.0);
        let fs = FilterState::new(one(0.0), DMatrix::from_element(1, 1, 1.0), 10);
        let up = kf_update(&sys, &fs, &one(100.0), &one(1e12)).unwrap();
        assert!(up.x[0].abs() < 1e-9);
    }

    #[test]
    fn indefinite_innovation_covariance_errors() {
        let sys = scalar_system(1.0, 0.0, 1.0, -2.0);
        let fs = FilterState::new(one(0.0), DMatrix::from_element(1, 1, 1.0), 10);
        assert!(matches!(
            kf_update(&sys, &fs, &one(1.0), &one(1.0)),
            Err(Error::Singular { .. })
        ));
    }
}
