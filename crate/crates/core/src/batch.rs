//! Many seeds and estimation modes over one prepared experiment.

use crate::error::Result;
use crate::estimator::{EstimationMode, EstimationTrace, FilterSettings};
use crate::exec::Execution;
use crate::metrics::RunReport;
use crate::pipeline::{Experiment, Simulation};

#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: EstimationMode,
    pub trace: EstimationTrace,
    pub report: RunReport,
}

/// One measurement realization and every requested estimate of it.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub simulation: Simulation,
    /// In the order of the requested modes.
    pub runs: Vec<ModeRun>,
}

impl SeedRun {
    pub fn seed(&self) -> u64 {
        self.simulation.seed
    }

    pub fn run(&self, mode: EstimationMode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Simulates every seed and runs each mode on the same measurements.
/// Seeds are distributed over the thread pool for [`Execution::Parallel`];
/// results come back in seed order either way and are identical.
pub fn run_batch(
    exp: &Experiment,
    seeds: &[u64],
    modes: &[EstimationMode],
    settings: &FilterSettings,
    exec: Execution,
) -> Result<Vec<SeedRun>> {
    exec.map(seeds, |&seed| {
        // the outer loop already owns the pool; keep the inner power flows serial
        let simulation = exp.simulate_with(seed, Execution::Sequential)?;
        let runs = modes
            .iter()
            .map(|&mode| {
                let trace = exp.estimate(&simulation, mode, settings)?;
                let report = exp.report(&simulation, &trace)?;
                Ok(ModeRun { mode, trace, report })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SeedRun { simulation, runs })
    })
    .into_iter()
    .collect()
}
