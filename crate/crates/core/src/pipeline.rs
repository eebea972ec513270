//! Config-driven runs: model preparation, simulation, estimation, reports
//! and the on-disk run directory.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, RunConfig};
use crate::coupling::CouplingPlan;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::estimator::{run_estimation, EstimationMode, EstimationProblem, EstimationTrace, FilterSettings};
use crate::gas::{assemble_gas_system, calibrate_velocities, solve_steady_state};
use crate::measurement::{build_measurement_layout, joint_state_names};
use crate::metrics::{compute_metrics, extract_quantities, summary_text, write_report_csv, RunReport};
use crate::net::{build_ybus, load_model, preprocess, validate_model, IgesModel, ValidationReport};
use crate::power::{solve_power_flow, BusSchedule, PowerFlowOptions};
use crate::scenario::{
    channel_sigmas, generate_truth_with, inject_bad_data, nominal_magnitudes, nominal_sink_loads, synthesize_measurements, Truth,
};

/// Relative floor on the filter's σ so noiseless channels keep R > 0.
const SIGMA_FLOOR: f64 = 1e-6;

/// A prepared model plus the noise model of a run config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub problem: EstimationProblem,
    pub validation: ValidationReport,
    /// Joint state at the start hour with nominal (unwobbled) loads.
    pub nominal_state: DVector<f64>,
    /// Scale parameter of the synthesized errors, per channel.
    pub noise_sigma: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub seed: u64,
    pub truth: Truth,
    /// `H x` without errors.
    pub clean: Vec<DVector<f64>>,
    /// Noisy, biased and corrupted measurements fed to the filter.
    pub measurements: Vec<DVector<f64>>,
}

impl Experiment {
    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::prepare(load_config(path)?)
    }

    pub fn prepare(config: RunConfig) -> Result<Self> {
        let raw = load_model(&config.model)?;
        Self::with_model(config, &raw)
    }

    /// Preprocesses and validates `raw`, calibrates segment velocities at the
    /// nominal loads and assembles everything the filter needs.
    pub fn with_model(config: RunConfig, raw: &IgesModel) -> Result<Self> {
        let model = preprocess(raw, config.max_segment_length)?;
        let validation = validate_model(&model)?;
        let ybus = build_ybus(&model);
        let gas0 = assemble_gas_system(&model)?;
        let nominal_loads = nominal_sink_loads(&model, &gas0, &config.scenario);
        let model = calibrate_velocities(&model, &nominal_loads)?;
        let gas = assemble_gas_system(&model)?;
        let plan = CouplingPlan::new(&model, &gas.layout);
        let layout = build_measurement_layout(&model, &ybus, &gas.layout, &config.measurements)?;

        let mut schedule = BusSchedule::nominal(&model);
        let hour = config.scenario.hour(&model, 0);
        let shape = |name: &Option<String>| {
            name.as_deref()
                .and_then(|n| model.profile(n))
                .map_or(1.0, |p| p.at_hour(hour))
        };
        let (power_shape, gtu_shape) = (shape(&config.scenario.power_profile), shape(&config.scenario.gtu_profile));
        for (i, bus) in model.buses.iter().enumerate() {
            schedule.pd[i] *= power_shape;
            schedule.qd[i] *= power_shape;
            schedule.pg[i] *= if model.gtus.iter().any(|g| g.bus == bus.id) { gtu_shape } else { power_shape };
        }
        let power = solve_power_flow(&model, &ybus, &schedule, PowerFlowOptions::default())?;
        let xg = solve_steady_state(&gas, &gas.input_with_loads(nominal_loads.clone()))?;
        let mut nominal_state = DVector::zeros(power.len() + xg.len());
        nominal_state.rows_mut(0, power.len()).copy_from(&power);
        nominal_state.rows_mut(power.len(), xg.len()).copy_from(&xg);

        let z_nominal = &layout.h * &nominal_state;
        let noise_sigma = channel_sigmas(&layout, &config.noise, &z_nominal);
        let floor = nominal_magnitudes(&layout, &z_nominal) * SIGMA_FLOOR;
        let sigma = noise_sigma.zip_map(&floor, f64::max);

        Ok(Experiment {
            problem: EstimationProblem {
                model,
                ybus,
                gas,
                plan,
                layout,
                sigma,
                nominal_sink_loads: nominal_loads,
            },
            config,
            validation,
            nominal_state,
            noise_sigma,
        })
    }

    pub fn state_names(&self) -> Vec<String> {
        joint_state_names(&self.problem.model, &self.problem.gas.layout)
    }

    pub fn simulate(&self, seed: u64) -> Result<Simulation> {
        self.simulate_with(seed, Execution::default())
    }

    /// [`Experiment::simulate`] with explicit control over the per-step power flows.
    pub fn simulate_with(&self, seed: u64, exec: Execution) -> Result<Simulation> {
        let p = &self.problem;
        let truth = generate_truth_with(&p.model, &p.ybus, &p.gas, &self.config.scenario, seed, exec)?;
        let clean: Vec<DVector<f64>> = truth.states.iter().map(|x| &p.layout.h * x).collect();
        let noisy = synthesize_measurements(&p.layout, &truth.states, &self.config.noise, &self.noise_sigma, seed)?;
        let measurements = inject_bad_data(&noisy, &p.layout, &self.noise_sigma, &self.config.bad_data)?;
        Ok(Simulation {
            seed,
            truth,
            clean,
            measurements,
        })
    }

    pub fn estimate(&self, sim: &Simulation, mode: EstimationMode, settings: &FilterSettings) -> Result<EstimationTrace> {
        run_estimation(&self.problem, &sim.measurements, mode, settings)
    }

    pub fn report(&self, sim: &Simulation, trace: &EstimationTrace) -> Result<RunReport> {
        self.report_from(&sim.truth.states, &sim.measurements, trace)
    }

    pub fn report_from(
        &self,
        truth: &[DVector<f64>],
        measurements: &[DVector<f64>],
        trace: &EstimationTrace,
    ) -> Result<RunReport> {
        compute_metrics(&extract_quantities(&self.problem, trace, truth, measurements)?)
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub steps: usize,
    pub c_s: f64,
    pub mode: Option<EstimationMode>,
    pub robust: Option<bool>,
    pub settings: Option<FilterSettings>,
    pub config: RunConfig,
}

pub const TRUTH_FILE: &str = "truth.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const INFO_FILE: &str = "run.json";
pub const CHANNELS_FILE: &str = "channels.csv";

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One row per step: `step, <columns...>`.
pub fn write_table(path: &Path, columns: &[String], rows: &[DVector<f64>]) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header = vec!["step".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(&err)?;
    for (t, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::Dimension {
                context: "table row",
                expected: columns.len(),
                actual: row.len(),
            });
        }
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<DVector<f64>>)> {
    let err = csv_error(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let header: Vec<String> = r.headers().map_err(&err)?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(&err)?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", rows.len()),
        })?;
        if vals.len() != header.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!("row {} has {} values, header has {}", rows.len(), vals.len(), header.len()),
            });
        }
        rows.push(DVector::from_vec(vals));
    }
    Ok((header, rows))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_simulation(dir: &Path, exp: &Experiment, sim: &Simulation, info: &RunInfo) -> Result<()> {
    create_dir(dir)?;
    write_table(&dir.join(TRUTH_FILE), &exp.state_names(), &sim.truth.states)?;
    let z_names: Vec<String> = exp.problem.layout.names().into_iter().map(|n| format!("z_{n}")).collect();
    write_table(&dir.join(MEASUREMENTS_FILE), &z_names, &sim.measurements)?;

    let path = dir.join(CHANNELS_FILE);
    let err = csv_error(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    w.write_record(["channel", "sigma", "filter_sigma"]).map_err(&err)?;
    for (i, name) in exp.problem.layout.names().iter().enumerate() {
        w.write_record([name.clone(), exp.noise_sigma[i].to_string(), exp.problem.sigma[i].to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join(INFO_FILE), info)
}

pub fn write_estimation(dir: &Path, trace: &EstimationTrace, report: &RunReport, info: &RunInfo) -> Result<()> {
    create_dir(dir)?;
    write_table(&dir.join(ESTIMATES_FILE), &trace.state_names, &trace.estimates)?;
    write_report(dir, report)?;
    write_json(&dir.join(INFO_FILE), info)
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    write_report_csv(report, &dir.join(METRICS_FILE))?;
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, summary_text(report)).map_err(|e| Error::io(&path, e))
}

pub fn read_info(dir: &Path) -> Result<RunInfo> {
    let path = dir.join(INFO_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        message: e.to_string(),
    })
}

/// Recomputes the report of an estimation run directory from its CSV files.
pub fn recompute_report(dir: &Path) -> Result<(RunInfo, RunReport)> {
    let info = read_info(dir)?;
    let mode = info.mode.ok_or_else(|| {
        Error::InvalidArgument(format!("{} holds no estimation run", dir.display()))
    })?;
    let exp = Experiment::prepare(info.config.clone())?;
    let (truth_cols, truth) = read_table(&dir.join(TRUTH_FILE))?;
    let (_, measurements) = read_table(&dir.join(MEASUREMENTS_FILE))?;
    let (est_cols, estimates) = read_table(&dir.join(ESTIMATES_FILE))?;
    if truth_cols != exp.state_names() {
        return Err(Error::InvalidArgument(format!(
            "{} does not match the state layout of the configured model",
            dir.join(TRUTH_FILE).display()
        )));
    }
    let start = truth_cols
        .iter()
        .position(|c| Some(c) == est_cols.first())
        .ok_or_else(|| Error::InvalidArgument("estimate columns not found in truth".into()))?;
    let trace = EstimationTrace {
        mode,
        robust: info.robust.unwrap_or(false),
        state_names: est_cols.clone(),
        state_cols: start..start + est_cols.len(),
        channel_rows: Vec::new(),
        estimates,
        mu: Vec::new(),
        step_seconds: Vec::new(),
    };
    let report = exp.report_from(&truth, &measurements, &trace)?;
    Ok((info, report))
}

/// Default output directory when neither the config nor the caller names one.
pub fn default_output_dir(mode: Option<EstimationMode>, seed: u64) -> PathBuf {
    match mode {
        Some(m) => PathBuf::from(format!("run-{m}-seed{seed}")),
        None => PathBuf::from(format!("sim-seed{seed}")),
    }
}
