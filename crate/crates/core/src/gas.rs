//! Discretized pipeline network model.
//!
//! Each segment contributes a mass-balance row and a momentum row obtained
//! from the Euler box scheme on the linearized isothermal gas equations.
//! Each node contributes one boundary row: fixed density at sources, flow
//! balance at sinks and virtual nodes. Together they form
//!
//! ```text
//! A x_{t+1} = B x_t + U_{t+1}      =>      x_{t+1} = F x_t + A⁻¹ U_{t+1}
//! ```
//!
//! State layout: densities (node id order), then for every segment the pair
//! `(ṁ at from end, ṁ at to end)`, both measured in the from → to direction.
//! At steady state the two entries of a pair coincide.

use nalgebra::{DMatrix, DVector};

use crate::coupling::BoundaryInput;
use crate::error::{Error, Result};
use crate::net::{IgesModel, NodeKind, PipeSegment, PA_PER_BAR};

/// Gas block of the joint state: `[ρ per node | (ṁ_ij, ṁ_ji) per segment]`.
pub type GasState = DVector<f64>;

/// Lower bound on |v̄| when it is derived from a steady flow.
pub const MIN_AVG_VELOCITY: f64 = 1.0;

/// Index bookkeeping for the gas state and the boundary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GasLayout {
    pub node_ids: Vec<usize>,
    /// `(from position, to position)` per segment.
    pub segments: Vec<(usize, usize)>,
    /// Node positions, ascending id.
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
    pub virtuals: Vec<usize>,
}

impl GasLayout {
    pub fn from_model(model: &IgesModel) -> Self {
        let node_ids: Vec<usize> = model.gas_nodes.iter().map(|n| n.id).collect();
        let pos = |id: usize| model.node_index(id).expect("validated pipe endpoint");
        let segments = model.pipes.iter().map(|p| (pos(p.from), pos(p.to))).collect();
        let of_kind = |k: NodeKind| {
            model
                .gas_nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.kind == k)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        GasLayout {
            node_ids,
            segments,
            sources: of_kind(NodeKind::Source),
            sinks: of_kind(NodeKind::Sink),
            virtuals: of_kind(NodeKind::Virtual),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn dim(&self) -> usize {
        self.n_nodes() + 2 * self.n_segments()
    }

    pub fn density(&self, node_pos: usize) -> usize {
        node_pos
    }

    pub fn flow_from(&self, seg: usize) -> usize {
        self.n_nodes() + 2 * seg
    }

    pub fn flow_to(&self, seg: usize) -> usize {
        self.n_nodes() + 2 * seg + 1
    }

    pub fn node_position(&self, id: usize) -> Option<usize> {
        self.node_ids.iter().position(|&n| n == id)
    }

    /// Slot of node `id` in the sink part of the boundary input.
    pub fn sink_slot(&self, id: usize) -> Option<usize> {
        let pos = self.node_position(id)?;
        self.sinks.iter().position(|&p| p == pos)
    }

    /// Flow balance at a node: Σ arriving − Σ departing, as sparse coefficients.
    pub fn balance_row(&self, node_pos: usize) -> Vec<(usize, f64)> {
        let mut row = Vec::new();
        for (s, &(from, to)) in self.segments.iter().enumerate() {
            if to == node_pos {
                row.push((self.flow_to(s), 1.0));
            }
            if from == node_pos {
                row.push((self.flow_from(s), -1.0));
            }
        }
        row
    }

    /// Offtake at every sink, reconstructed from a state via the balance rows.
    pub fn sink_loads(&self, x: &GasState) -> DVector<f64> {
        DVector::from_iterator(
            self.sinks.len(),
            self.sinks
                .iter()
                .map(|&p| self.balance_row(p).iter().map(|&(k, c)| c * x[k]).sum()),
        )
    }

    /// Column names: `rho_<node>`, then `mflow_<i>_<j>` / `mflow_<j>_<i>`.
    pub fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.node_ids.iter().map(|id| format!("rho_{id}")).collect();
        let mut seen = std::collections::HashMap::<(usize, usize), usize>::new();
        for &(f, t) in &self.segments {
            let (i, j) = (self.node_ids[f], self.node_ids[t]);
            let dup = seen.entry((i, j)).or_default();
            *dup += 1;
            let suffix = if *dup > 1 { format!("_{dup}") } else { String::new() };
            names.push(format!("mflow_{i}_{j}{suffix}"));
            names.push(format!("mflow_{j}_{i}{suffix}"));
        }
        names
    }
}

/// Assembled system of one network, immutable after construction.
#[derive(Debug, Clone)]
pub struct GasSystemMatrices {
    pub layout: GasLayout,
    /// 𝒜
    pub a: DMatrix<f64>,
    /// ℬ
    pub b: DMatrix<f64>,
    /// F_G = 𝒜⁻¹ℬ
    pub transition: DMatrix<f64>,
    /// Columns of 𝒜⁻¹ belonging to the source and sink boundary rows.
    input_map: DMatrix<f64>,
    /// Fixed source densities, kg/m³, in source order.
    pub source_densities: DVector<f64>,
    pub c_s: f64,
}

fn segment_velocity(p: &PipeSegment, override_v: Option<f64>) -> f64 {
    override_v.or(p.avg_velocity).unwrap_or(MIN_AVG_VELOCITY)
}

/// Reciprocal pivot-ratio estimate of an LU factorization.
fn lu_rcond(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

const RCOND_FLOOR: f64 = 1e-14;

pub fn assemble_gas_system(model: &IgesModel) -> Result<GasSystemMatrices> {
    let layout = GasLayout::from_model(model);
    let n = layout.dim();
    let n_seg = layout.n_segments();
    let dt = model.constants.dt;
    let c2 = model.constants.c_s * model.constants.c_s;

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);

    for (s, pipe) in model.pipes.iter().enumerate() {
        let (i, j) = layout.segments[s];
        let (m_ij, m_ji) = (layout.flow_from(s), layout.flow_to(s));
        let (c_ij, c_ji) = (pipe.ratio_from, pipe.ratio_to);

        // mass balance: A11 appears on both sides, the flow block flips sign
        let r = s;
        let k = dt / pipe.length;
        a[(r, j)] += c_ji;
        a[(r, i)] += c_ij;
        a[(r, m_ji)] += k;
        a[(r, m_ij)] -= k;
        b[(r, j)] += c_ji;
        b[(r, i)] += c_ij;
        b[(r, m_ji)] -= k;
        b[(r, m_ij)] += k;

        // momentum: every term is averaged over t and t+1, so ℬ = −𝒜 on this row
        let r = n_seg + s;
        let kp = pipe.area * dt * c2 / pipe.length;
        let kf = pipe.friction * segment_velocity(pipe, model.constants.avg_velocity) * dt
            / (4.0 * pipe.diameter * pipe.area);
        let coeffs = [
            (m_ji, 1.0 + kf),
            (m_ij, -1.0 + kf),
            (j, kp * c_ji),
            (i, -kp * c_ij),
        ];
        for (col, v) in coeffs {
            a[(r, col)] += v;
            b[(r, col)] -= v;
        }
    }

    let mut row = 2 * n_seg;
    for &p in &layout.sources {
        a[(row, layout.density(p))] = 1.0;
        row += 1;
    }
    for &p in layout.sinks.iter().chain(&layout.virtuals) {
        for (col, c) in layout.balance_row(p) {
            a[(row, col)] += c;
        }
        row += 1;
    }
    debug_assert_eq!(row, n);

    let lu = a.clone().lu();
    let rcond = lu_rcond(&lu);
    if rcond < RCOND_FLOOR {
        return Err(Error::Singular {
            what: "gas system matrix",
            rcond,
        });
    }
    let transition = lu.solve(&b).ok_or(Error::Singular {
        what: "gas system matrix",
        rcond,
    })?;
    let n_bc = layout.sources.len() + layout.sinks.len();
    let mut selector = DMatrix::zeros(n, n_bc);
    for c in 0..n_bc {
        selector[(2 * n_seg + c, c)] = 1.0;
    }
    let input_map = lu.solve(&selector).ok_or(Error::Singular {
        what: "gas system matrix",
        rcond,
    })?;

    let source_densities = DVector::from_iterator(
        layout.sources.len(),
        layout
            .sources
            .iter()
            .map(|&p| model.gas_nodes[p].const_density.expect("source density")),
    );

    Ok(GasSystemMatrices {
        layout,
        a,
        b,
        transition,
        input_map,
        source_densities,
        c_s: model.constants.c_s,
    })
}

impl GasSystemMatrices {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Full right-hand side 𝒰 in row order.
    pub fn assembled_input(&self, input: &BoundaryInput) -> DVector<f64> {
        let n_seg = self.layout.n_segments();
        let mut u = DVector::zeros(self.dim());
        let ns = input.source_densities.len();
        u.rows_mut(2 * n_seg, ns).copy_from(&input.source_densities);
        u.rows_mut(2 * n_seg + ns, input.sink_loads.len())
            .copy_from(&input.sink_loads);
        u
    }

    /// u^G = 𝒜⁻¹ 𝒰.
    pub fn forcing(&self, input: &BoundaryInput) -> DVector<f64> {
        let bc = DVector::from_iterator(
            input.source_densities.len() + input.sink_loads.len(),
            input
                .source_densities
                .iter()
                .chain(input.sink_loads.iter())
                .copied(),
        );
        &self.input_map * bc
    }

    /// Boundary input with the model's source densities and the given loads.
    pub fn input_with_loads(&self, sink_loads: DVector<f64>) -> BoundaryInput {
        BoundaryInput {
            source_densities: self.source_densities.clone(),
            sink_loads,
        }
    }
}

/// One step of `x_{t+1} = F_G x_t + u_{t+1}`.
pub fn step_gas(m: &GasSystemMatrices, x: &GasState, input: &BoundaryInput) -> Result<GasState> {
    if x.len() != m.dim() {
        return Err(Error::Dimension {
            context: "gas state",
            expected: m.dim(),
            actual: x.len(),
        });
    }
    check_input(m, input)?;
    Ok(&m.transition * x + m.forcing(input))
}

fn check_input(m: &GasSystemMatrices, input: &BoundaryInput) -> Result<()> {
    if input.source_densities.len() != m.layout.sources.len() {
        return Err(Error::Dimension {
            context: "source densities",
            expected: m.layout.sources.len(),
            actual: input.source_densities.len(),
        });
    }
    if input.sink_loads.len() != m.layout.sinks.len() {
        return Err(Error::Dimension {
            context: "sink loads",
            expected: m.layout.sinks.len(),
            actual: input.sink_loads.len(),
        });
    }
    Ok(())
}

/// Fixed point of [`step_gas`] under constant boundary input: (𝒜 − ℬ) x = 𝒰.
pub fn solve_steady_state(m: &GasSystemMatrices, input: &BoundaryInput) -> Result<GasState> {
    check_input(m, input)?;
    if input
        .source_densities
        .iter()
        .chain(input.sink_loads.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument(
            "steady state needs finite loads and densities".into(),
        ));
    }
    let lu = (&m.a - &m.b).lu();
    let rcond = lu_rcond(&lu);
    if rcond < RCOND_FLOOR {
        return Err(Error::Singular {
            what: "steady-state system",
            rcond,
        });
    }
    lu.solve(&m.assembled_input(input)).ok_or(Error::Singular {
        what: "steady-state system",
        rcond,
    })
}

/// Scaled fixed-point residual ‖F x + u − x‖∞ / max(1, ‖x‖∞).
pub fn fixed_point_residual(m: &GasSystemMatrices, x: &GasState, input: &BoundaryInput) -> f64 {
    let next = &m.transition * x + m.forcing(input);
    (next - x).amax() / x.amax().max(1.0)
}

/// Derives |v̄| per segment from the steady flow at the given loads and
/// re-assembles until the velocities stop changing.
pub fn calibrate_velocities(model: &IgesModel, sink_loads: &DVector<f64>) -> Result<IgesModel> {
    let mut m = model.clone();
    if m.constants.avg_velocity.is_some() {
        return Ok(m);
    }
    for _ in 0..100 {
        let sys = assemble_gas_system(&m)?;
        let x = solve_steady_state(&sys, &sys.input_with_loads(sink_loads.clone()))?;
        let mut change = 0.0f64;
        for (s, pipe) in m.pipes.iter_mut().enumerate() {
            let (i, j) = sys.layout.segments[s];
            let flow = 0.5 * (x[sys.layout.flow_from(s)] + x[sys.layout.flow_to(s)]);
            let rho = 0.5 * (pipe.ratio_from * x[i] + pipe.ratio_to * x[j]);
            if rho <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "non-positive steady density on segment {}-{}",
                    pipe.from, pipe.to
                )));
            }
            let v = (flow.abs() / (rho * pipe.area)).max(MIN_AVG_VELOCITY);
            let old = pipe.avg_velocity.unwrap_or(MIN_AVG_VELOCITY);
            change = change.max((v - old).abs() / old);
            pipe.avg_velocity = Some(v);
        }
        if change < 1e-12 {
            break;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conversion {
    BarToDensity,
    DensityToBar,
    /// Velocity (m/s) to mass flow (kg/s).
    VelocityToMassFlow { density: f64, area: f64 },
    /// Mass flow (kg/s) to velocity (m/s).
    MassFlowToVelocity { density: f64, area: f64 },
}

/// `p = c_s² ρ` and `ṁ = ρ v a`, with bar at the I/O boundary.
pub fn convert_units(value: f64, conversion: Conversion, c_s: f64) -> Result<f64> {
    let c2 = c_s * c_s;
    match conversion {
        Conversion::BarToDensity => {
            if value < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative pressure {value} bar"
                )));
            }
            Ok(value * PA_PER_BAR / c2)
        }
        Conversion::DensityToBar => {
            if value < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative density {value} kg/m³"
                )));
            }
            Ok(value * c2 / PA_PER_BAR)
        }
        Conversion::VelocityToMassFlow { density, area } => Ok(density * value * area),
        Conversion::MassFlowToVelocity { density, area } => {
            if density <= 0.0 || area <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "velocity needs positive density and area, got {density}, {area}"
                )));
            }
            Ok(value / (density * area))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{load_model_str, pressure_bar_to_density};

    pub(crate) fn two_node(load: f64) -> IgesModel {
        load_model_str(&format!(
            r#"
            [constants]
            c_s = 340.0
            dt = 600.0
            [[gas_nodes]]
            id = 1
            pressure_bar = 41.48
            [[gas_nodes]]
            id = 2
            load = {load}
            [[pipes]]
            from = 1
            to = 2
            length = 10000.0
            diameter = 0.5
            "#
        ))
        .unwrap()
    }

    #[test]
    fn two_node_layout() {
        let sys = assemble_gas_system(&two_node(5.0)).unwrap();
        assert_eq!(sys.a.shape(), (4, 4));
        // source row, then the sink balance row (arrival at node 2)
        assert_eq!(sys.a.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sys.a.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(sys.layout.state_names(), vec!["rho_1", "rho_2", "mflow_1_2", "mflow_2_1"]);
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        let sys = assemble_gas_system(&two_node(0.0)).unwrap();
        let rho = sys.source_densities[0];
        let x = DVector::from_vec(vec![rho, rho, 0.0, 0.0]);
        let next = step_gas(&sys, &x, &sys.input_with_loads(DVector::zeros(1))).unwrap();
        assert!((next - &x).amax() < 1e-12);
    }

    #[test]
    fn steady_state_with_load_drops_density() {
        let sys = assemble_gas_system(&two_node(5.0)).unwrap();
        let input = sys.input_with_loads(DVector::from_element(1, 5.0));
        let x = solve_steady_state(&sys, &input).unwrap();
        assert!(x[1] < x[0]);
        assert!((x[2] - 5.0).abs() < 1e-9 && (x[3] - 5.0).abs() < 1e-9);
        assert!(fixed_point_residual(&sys, &x, &input) < 1e-10);
    }

    #[test]
    fn no_source_is_singular() {
        let mut m = two_node(1.0);
        m.gas_nodes[0].kind = NodeKind::Sink;
        m.gas_nodes[0].const_density = None;
        // the implicit step stays solvable, but no density level is pinned down
        let sys = assemble_gas_system(&m).unwrap();
        let input = BoundaryInput {
            source_densities: DVector::zeros(0),
            sink_loads: DVector::from_vec(vec![0.0, 1.0]),
        };
        assert!(matches!(solve_steady_state(&sys, &input), Err(Error::Singular { .. })));
    }

    #[test]
    fn calibrated_velocity_matches_flow() {
        let m = calibrate_velocities(&two_node(20.0), &DVector::from_element(1, 20.0)).unwrap();
        let sys = assemble_gas_system(&m).unwrap();
        let x = solve_steady_state(&sys, &sys.input_with_loads(DVector::from_element(1, 20.0))).unwrap();
        let v = 20.0 / (0.5 * (x[0] + x[1]) * m.pipes[0].area);
        assert!((m.pipes[0].avg_velocity.unwrap() - v.max(1.0)).abs() < 1e-9);
    }

    #[test]
    fn unit_conversions() {
        let rho = convert_units(41.48, Conversion::BarToDensity, 340.0).unwrap();
        assert!((rho - 35.88).abs() < 5e-3, "{rho}");
        assert_eq!(rho, pressure_bar_to_density(41.48, 340.0));
        assert_eq!(convert_units(0.0, Conversion::DensityToBar, 340.0).unwrap(), 0.0);
        let area = std::f64::consts::PI * 0.25 / 4.0;
        let m = convert_units(5.0, Conversion::VelocityToMassFlow { density: 35.88, area }, 340.0).unwrap();
        assert!((m - 35.23).abs() < 5e-3, "{m}");
        let back = convert_units(m, Conversion::MassFlowToVelocity { density: 35.88, area }, 340.0).unwrap();
        assert!((back - 5.0).abs() < 1e-12);
        assert!(convert_units(-1.0, Conversion::BarToDensity, 340.0).is_err());
        assert!(convert_units(1.0, Conversion::MassFlowToVelocity { density: 0.0, area }, 340.0).is_err());
    }
}
