//! Greedy training drivers: the steady weak-greedy loop in its standard,
//! incremental, and multi-fidelity variants, the unsteady POD-greedy loop,
//! and the report metrics.

pub mod metrics;
mod steady;
mod unsteady;

pub use steady::{
    multi_fidelity_greedy, solve_seed_set, weak_greedy_steady, MfGreedyResult, SeedInit,
    SolvedSnapshot, SteadyGreedyResult,
};
pub use unsteady::{
    pod_greedy_unsteady, UnsteadyGreedyConfig, UnsteadyGreedyResult, UnsteadyRecord, UnsteadyTrace,
};

use crate::error::CoreError;
use crate::params::{GridSpec, ParamVec};
use crate::rom::GnSettings;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyVariant {
    /// Full test-space rebuild + cold NNLS each iteration.
    Vanilla,
    /// HAPOD test-space update + warm-started NNLS.
    Incremental,
    /// Incremental pipeline seeded from a coarse-mesh surrogate.
    MultiFidelity,
}

impl GreedyVariant {
    pub fn label(&self) -> &'static str {
        match self {
            GreedyVariant::Vanilla => "vanilla",
            GreedyVariant::Incremental => "incr",
            GreedyVariant::MultiFidelity => "incr-mf",
        }
    }
}

impl std::str::FromStr for GreedyVariant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(GreedyVariant::Vanilla),
            "incr" => Ok(GreedyVariant::Incremental),
            "incr-mf" => Ok(GreedyVariant::MultiFidelity),
            _ => Err(CoreError::Config(format!(
                "unknown variant '{s}' (expected vanilla|incr|incr-mf)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub grid: GridSpec,
    /// Relative-error stopping tolerance.
    pub tol: f64,
    /// Maximum basis size (equivalently, maximum number of snapshots).
    pub n_max: usize,
    /// Test-space size policy `m = m_factor · n`.
    pub m_factor: usize,
    /// EQ tolerance δ.
    pub delta: f64,
    pub variant: GreedyVariant,
    /// Warm-start NNLS from the previous iteration's support.
    pub warm_start_nnls: bool,
    pub seed: u64,
    /// Keep a ROM per iteration (for error-vs-n studies).
    pub keep_intermediate: bool,
    /// Record 0.0 for all phase timings (byte-reproducible traces).
    pub deterministic_times: bool,
    pub gn: GnSettings,
}

impl GreedyConfig {
    pub fn new(grid: GridSpec, variant: GreedyVariant) -> Self {
        Self {
            grid,
            tol: 1e-3,
            n_max: 25,
            m_factor: 2,
            delta: 1e-4,
            variant,
            warm_start_nnls: !matches!(variant, GreedyVariant::Vanilla),
            seed: 0,
            keep_intermediate: false,
            deterministic_times: false,
            gn: GnSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(CoreError::Config("tol must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.n_max < 1 || self.m_factor < 1 {
            return Err(CoreError::Config("n_max and m_factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// One steady greedy iteration: selection, accuracy, and the cost breakdown
/// of the build phases (basis, empirical test space, quadrature, sweep, HF).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub mu: ParamVec,
    pub indicator_max: f64,
    pub true_rel_err: f64,
    pub n: usize,
    pub m: usize,
    pub nnls_solves: usize,
    pub nnz_elem: usize,
    pub nnz_facet: usize,
    pub t_rob_s: f64,
    pub t_es_s: f64,
    pub t_eqp_s: f64,
    pub t_search_s: f64,
    pub t_hf_s: f64,
    /// Diagnostics kept in memory only (not part of the CSV schema).
    pub hf_newton_iters: usize,
    pub eq_constraint_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub variant: GreedyVariant,
    pub records: Vec<IterationRecord>,
    /// Coarse-phase cost of the multi-fidelity pipeline (zero otherwise).
    pub overhead_s: f64,
    pub warnings: Vec<String>,
}

impl GreedyTrace {
    pub fn total_hf_time(&self) -> f64 {
        self.records.iter().map(|r| r.t_hf_s).sum()
    }

    pub fn cumulative_nnls_solves(&self) -> usize {
        self.records.iter().map(|r| r.nnls_solves).sum()
    }
}

/// Wall-clock phase timer that collapses to zero in deterministic mode.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PhaseClock {
    deterministic: bool,
}

impl PhaseClock {
    pub(crate) fn new(deterministic: bool) -> Self {
        Self { deterministic }
    }

    pub(crate) fn measure<T>(&self, f: impl FnOnce() -> T) -> (T, f64) {
        let start = std::time::Instant::now();
        let out = f();
        let elapsed = if self.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        (out, elapsed)
    }
}
