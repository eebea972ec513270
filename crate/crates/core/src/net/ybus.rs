use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Branch, IgesModel};

/// Nodal admittance matrix split into real (`g`) and imaginary (`b`) parts,
/// indexed by bus position in `IgesModel::buses`.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Admittance {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.g[(i, j)], self.b[(i, j)])
    }
}

impl Branch {
    pub fn series(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }

    /// `(y_ff, y_ft, y_tf, y_tt)` of the π-model with the tap on the from side.
    pub fn two_port(&self) -> (Complex64, Complex64, Complex64, Complex64) {
        let y = self.series();
        let sh = Complex64::new(0.0, self.charging / 2.0);
        let t = self.tap;
        (y / (t * t) + sh, -y / t, -y / t, y + sh)
    }
}

pub fn build_ybus(model: &IgesModel) -> Admittance {
    let n = model.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut add = |i: usize, j: usize, y: Complex64| {
        g[(i, j)] += y.re;
        b[(i, j)] += y.im;
    };
    for br in &model.branches {
        let i = model.bus_index(br.from).expect("validated branch");
        let j = model.bus_index(br.to).expect("validated branch");
        let (ff, ft, tf, tt) = br.two_port();
        add(i, i, ff);
        add(i, j, ft);
        add(j, i, tf);
        add(j, j, tt);
    }
    let base = model.constants.base_mva;
    for (i, bus) in model.buses.iter().enumerate() {
        add(i, i, Complex64::new(bus.gs / base, bus.bs / base));
    }
    Admittance { g, b }
}
