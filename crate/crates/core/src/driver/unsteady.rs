//! Unsteady POD-greedy training: parameters are selected by POD-strong-greedy
//! on coarse-mesh trajectories, the reduced space grows by nested updates on
//! the fine trajectories, and the quadrature rule is built progressively
//! (incremental rows, warm-started NNLS) with a cold-start shadow solve for
//! the cost comparison.

use super::PhaseClock;
use crate::compress::{nested_space_update, pod_strong_greedy, Rob};
use crate::error::CoreError;
use crate::hyper::{
    assemble_eq_rows_unsteady, compute_quadrature, extend_eq_rows_unsteady, EqSystem, QuadRule,
};
use crate::linalg::MatrixIp;
use crate::model::{hf_solve_unsteady, uniform_time_grid, NormKind, Trajectory, UnsteadyModel};
use crate::params::{tensor_grid, GridSpec, ParamVec};
use crate::rom::UnsteadyRom;
use crate::Result;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct UnsteadyGreedyConfig {
    pub grid: GridSpec,
    pub maxit: usize,
    /// Data-compression tolerance of the nested space updates.
    pub nested_tol: f64,
    /// EQ tolerance δ.
    pub delta: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub deterministic_times: bool,
}

impl UnsteadyGreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maxit < 1 || self.n_steps < 1 {
            return Err(CoreError::Config("maxit and n_steps must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.nested_tol > 0.0) || !(self.t_final > 0.0) {
            return Err(CoreError::Config("nested_tol and t_final must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record with the warm/cold NNLS comparison columns.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsteadyRecord {
    pub iter: usize,
    pub mu: ParamVec,
    pub n: usize,
    pub n_new_modes: usize,
    pub rows: usize,
    pub nnls_solves_warm: usize,
    pub nnls_solves_cold: usize,
    pub t_eqp_warm_s: f64,
    pub t_eqp_cold_s: f64,
    pub pct_weights_warm: f64,
    pub pct_weights_cold: f64,
    pub nnz_elem: usize,
    pub nnz_facet: usize,
    pub constraint_ratio_warm: f64,
    pub t_hf_s: f64,
    pub t_rob_s: f64,
}

impl UnsteadyRecord {
    /// Iteration-count speedup of the warm start, `cold / warm`.
    pub fn speedup_count(&self) -> f64 {
        self.nnls_solves_cold as f64 / self.nnls_solves_warm.max(1) as f64
    }

    /// Wall-clock speedup of the warm start (zero in deterministic mode).
    pub fn speedup_time(&self) -> f64 {
        if self.t_eqp_warm_s > 0.0 {
            self.t_eqp_cold_s / self.t_eqp_warm_s
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnsteadyTrace {
    pub records: Vec<UnsteadyRecord>,
    /// Cost of the coarse selection phase.
    pub overhead_s: f64,
    pub warnings: Vec<String>,
}

pub struct UnsteadyGreedyResult<M> {
    pub rom: UnsteadyRom<M>,
    pub trace: UnsteadyTrace,
    /// Training-grid indices in selection order.
    pub selected: Vec<usize>,
    pub p_train: Vec<ParamVec>,
    /// Fine-level trajectories at the selected parameters.
    pub trajectories: Vec<(ParamVec, Trajectory)>,
}

/// POD-greedy with coarse-mesh selection: the parameter order comes from
/// POD-strong-greedy on trajectories of the coarse model; the fine model
/// provides the snapshots that grow the reduced space and the quadrature.
pub fn pod_greedy_unsteady<MC: UnsteadyModel, MF: UnsteadyModel>(
    config: &UnsteadyGreedyConfig,
    coarse_model: Arc<MC>,
    fine_model: Arc<MF>,
) -> Result<UnsteadyGreedyResult<MF>> {
    config.validate()?;
    let clock = PhaseClock::new(config.deterministic_times);
    let p_train = tensor_grid(fine_model.param_box(), &config.grid)?;
    let times = uniform_time_grid(config.t_final, config.n_steps);
    let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();

    // Selection on the coarse mesh (the overhead phase).
    let (selection_result, overhead_s) = clock.measure(|| -> Result<Vec<usize>> {
        let coarse_trajs: Vec<Vec<nalgebra::DVector<f64>>> = p_train
            .par_iter()
            .map(|mu| {
                hf_solve_unsteady(coarse_model.as_ref(), mu, &times)
                    .map(|t| t.states[1..].to_vec())
            })
            .collect::<Result<_>>()?;
        let coarse_ip = MatrixIp::new(coarse_model.inner_product(NormKind::Trial));
        pod_strong_greedy(&coarse_trajs, &dts, config.maxit, config.nested_tol, &coarse_ip)
    });
    let selected = selection_result?;

    let fine_ip = MatrixIp::new(fine_model.inner_product(NormKind::Trial));
    let mut rob = Rob::new(fine_model.level());
    let mut trajectories: Vec<(ParamVec, Trajectory)> = Vec::new();
    let mut system: Option<EqSystem> = None;
    let mut warm_rule: Option<QuadRule> = None;
    let mut records: Vec<UnsteadyRecord> = Vec::new();

    for (it0, &sel) in selected.iter().enumerate() {
        let iter = it0 + 1;
        let mu = p_train[sel].clone();
        let (traj_result, t_hf) =
            clock.measure(|| hf_solve_unsteady(fine_model.as_ref(), &mu, &times));
        let traj = traj_result?;
        let (n_new, t_rob) = clock.measure(|| {
            nested_space_update(&mut rob, &traj.states[1..], &dts, config.nested_tol, &fine_ip)
        });
        let n_new = n_new?;
        trajectories.push((mu.clone(), traj));

        let (warm_result, t_eqp_warm) = clock.measure(|| -> Result<_> {
            match system.as_mut() {
                None => {
                    system = Some(assemble_eq_rows_unsteady(
                        fine_model.as_ref(),
                        &rob.modes,
                        &trajectories,
                        config.delta,
                    )?);
                }
                Some(sys) => {
                    extend_eq_rows_unsteady(sys, fine_model.as_ref(), &rob.modes, &trajectories)?;
                }
            }
            let sys = system.as_ref().expect("assembled above");
            let (rule, stats) = compute_quadrature(sys, warm_rule.as_ref())?;
            let ratio = stats.residual_norm / sys.b.norm();
            Ok((rule, stats.ls_solve_count, ratio))
        });
        let (rule_warm, solves_warm, ratio_warm) = warm_result?;
        let (cold_result, t_eqp_cold) = clock.measure(|| -> Result<_> {
            let sys = system.as_ref().expect("assembled above");
            let (rule, stats) = compute_quadrature(sys, None)?;
            Ok((rule, stats.ls_solve_count))
        });
        let (rule_cold, solves_cold) = cold_result?;

        records.push(UnsteadyRecord {
            iter,
            mu,
            n: rob.n_modes(),
            n_new_modes: n_new,
            rows: system.as_ref().expect("assembled").n_rows(),
            nnls_solves_warm: solves_warm,
            nnls_solves_cold: solves_cold,
            t_eqp_warm_s: t_eqp_warm,
            t_eqp_cold_s: t_eqp_cold,
            pct_weights_warm: rule_warm.pct_sampled(),
            pct_weights_cold: rule_cold.pct_sampled(),
            nnz_elem: rule_warm.nnz_elem(),
            nnz_facet: rule_warm.nnz_facet(),
            constraint_ratio_warm: ratio_warm,
            t_hf_s: t_hf,
            t_rob_s: t_rob,
        });
        warm_rule = Some(rule_warm);
    }

    let rule = warm_rule.ok_or_else(|| CoreError::invalid("no greedy iterations were run"))?;
    let rom = UnsteadyRom::new(fine_model, rob, rule, times)?;
    Ok(UnsteadyGreedyResult {
        rom,
        trace: UnsteadyTrace {
            records,
            overhead_s,
            warnings: Vec::new(),
        },
        selected,
        p_train,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh_hierarchy;
    use crate::model::CreepBar;
    use crate::params::AxisSpacing;

    fn models() -> (Arc<CreepBar>, Arc<CreepBar>) {
        let meshes = build_mesh_hierarchy(16, 2).unwrap();
        (
            Arc::new(CreepBar::new(meshes[0].clone()).unwrap()),
            Arc::new(CreepBar::new(meshes[1].clone()).unwrap()),
        )
    }

    fn config(maxit: usize) -> UnsteadyGreedyConfig {
        UnsteadyGreedyConfig {
            grid: GridSpec::new(vec![3, 3], vec![AxisSpacing::Log, AxisSpacing::Log]).unwrap(),
            maxit,
            nested_tol: 1e-5,
            delta: 1e-4,
            t_final: 1.5,
            n_steps: 8,
            deterministic_times: true,
        }
    }

    #[test]
    fn single_iteration_spans_first_trajectory() {
        let (coarse, fine) = models();
        let res = pod_greedy_unsteady(&config(1), coarse, fine).unwrap();
        assert_eq!(res.selected.len(), 1);
        assert_eq!(res.trace.records.len(), 1);
        let r = &res.trace.records[0];
        assert!(r.n >= 1);
        assert!(r.constraint_ratio_warm <= res.rom.quad.pct_sampled().max(1.0)); // sanity
        assert!(r.constraint_ratio_warm <= 1e-4 + 1e-12);
    }

    #[test]
    fn warm_start_never_beats_cold_on_count_and_constraint_holds() {
        let (coarse, fine) = models();
        let res = pod_greedy_unsteady(&config(4), coarse, fine).unwrap();
        assert_eq!(res.trace.records.len(), 4);
        for r in &res.trace.records {
            assert!(
                r.nnls_solves_warm <= r.nnls_solves_cold,
                "iteration {}: warm {} > cold {}",
                r.iter,
                r.nnls_solves_warm,
                r.nnls_solves_cold
            );
            assert!(r.constraint_ratio_warm <= 1e-4 + 1e-12);
        }
        // Rows grow with every iteration.
        for w in res.trace.records.windows(2) {
            assert!(w[1].rows > w[0].rows);
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let (coarse, fine) = models();
        let a = pod_greedy_unsteady(&config(3), coarse.clone(), fine.clone()).unwrap();
        let b = pod_greedy_unsteady(&config(3), coarse, fine).unwrap();
        assert_eq!(a.selected, b.selected);
        for (ra, rb) in a.trace.records.iter().zip(&b.trace.records) {
            assert_eq!(ra, rb);
        }
    }
}
