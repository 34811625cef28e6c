//! Empirical quadrature: assembly of the constraint system `G ρ ≈ b`
//! (constant-function rows plus manifold accuracy rows), incremental row
//! growth across greedy iterations for nested test spaces, and extraction of
//! sparse non-negative quadrature rules via NNLS.

use crate::error::CoreError;
use crate::model::{HfField, SteadyModel, Trajectory, UnsteadyModel};
use crate::nnls::{nnls_solve, NnlsProblem, NnlsResult};
use crate::params::ParamVec;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Sparse non-negative element/facet weights plus the support used to warm
/// start subsequent NNLS solves.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub elem_weights: DVector<f64>,
    pub facet_weights: DVector<f64>,
    /// Indices with strictly positive weight in the combined
    /// element-then-facet numbering, sorted ascending.
    pub active_set: Vec<usize>,
}

impl QuadRule {
    pub fn full(n_e: usize, n_f: usize) -> Self {
        let mut q = Self {
            elem_weights: DVector::from_element(n_e, 1.0),
            facet_weights: DVector::from_element(n_f, 1.0),
            active_set: Vec::new(),
        };
        q.rebuild_active_set();
        q
    }

    pub fn zeros(n_e: usize, n_f: usize) -> Self {
        Self {
            elem_weights: DVector::zeros(n_e),
            facet_weights: DVector::zeros(n_f),
            active_set: Vec::new(),
        }
    }

    pub fn from_combined(rho: &DVector<f64>, n_e: usize, n_f: usize) -> Result<Self> {
        if rho.len() != n_e + n_f {
            return Err(CoreError::dims(format!(
                "combined weights length {} vs {} columns",
                rho.len(),
                n_e + n_f
            )));
        }
        let mut q = Self {
            elem_weights: rho.rows(0, n_e).into_owned(),
            facet_weights: rho.rows(n_e, n_f).into_owned(),
            active_set: Vec::new(),
        };
        q.rebuild_active_set();
        Ok(q)
    }

    pub fn combined(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.elem_weights.len() + self.facet_weights.len());
        out.rows_mut(0, self.elem_weights.len())
            .copy_from(&self.elem_weights);
        out.rows_mut(self.elem_weights.len(), self.facet_weights.len())
            .copy_from(&self.facet_weights);
        out
    }

    pub fn rebuild_active_set(&mut self) {
        self.active_set = self
            .combined()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect();
    }

    pub fn nnz_elem(&self) -> usize {
        self.elem_weights.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn nnz_facet(&self) -> usize {
        self.facet_weights.iter().filter(|&&v| v > 0.0).count()
    }

    /// Percentage of sampled weights, `nnz / (N_e + N_f) * 100`.
    pub fn pct_sampled(&self) -> f64 {
        100.0 * self.active_set.len() as f64
            / (self.elem_weights.len() + self.facet_weights.len()) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .elem_weights
            .iter()
            .chain(self.facet_weights.iter())
            .any(|&v| !(v >= 0.0))
        {
            return Err(CoreError::invalid("quadrature weights must be non-negative"));
        }
        if self.active_set.len() != self.nnz_elem() + self.nnz_facet() {
            return Err(CoreError::invalid("quadrature active set out of sync"));
        }
        Ok(())
    }
}

/// Provenance of one row of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowProvenance {
    ConstantElem,
    ConstantFacet,
    /// Accuracy row for training snapshot `train_idx` tested against test
    /// mode `mode_idx`.
    Steady { train_idx: usize, mode_idx: usize },
    /// Accuracy row for trajectory `traj_idx` at time step `step` tested
    /// against mode `mode_idx`.
    Unsteady {
        traj_idx: usize,
        step: usize,
        mode_idx: usize,
    },
}

/// Dense EQ constraint system. `b` is by definition the image of the
/// all-ones (high-fidelity) rule.
#[derive(Debug, Clone)]
pub struct EqSystem {
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rows: Vec<RowProvenance>,
    pub delta: f64,
    pub n_e: usize,
    pub n_f: usize,
    /// Trial/test modes at the time of the last (un)steady assembly; used to
    /// verify nestedness before an incremental extension.
    modes_snapshot: Vec<DVector<f64>>,
    n_trajs: usize,
}

impl EqSystem {
    pub fn n_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.n_e + self.n_f
    }

    fn refresh_b(&mut self) {
        self.b = &self.g * DVector::from_element(self.n_cols(), 1.0);
    }
}

fn constant_rows<M: crate::model::ModelCore>(model: &M) -> (Vec<DVector<f64>>, Vec<RowProvenance>) {
    let mesh = model.mesh();
    let (n_e, n_f) = (mesh.n_elements(), mesh.n_facets());
    let mut elem_row = DVector::zeros(n_e + n_f);
    for k in 0..n_e {
        elem_row[k] = mesh.elem_length(k);
    }
    // Facet measure in 1D: one unit per facet.
    let mut facet_row = DVector::zeros(n_e + n_f);
    for j in 0..n_f {
        facet_row[n_e + j] = 1.0;
    }
    (
        vec![elem_row, facet_row],
        vec![RowProvenance::ConstantElem, RowProvenance::ConstantFacet],
    )
}

/// Accuracy rows of one steady snapshot against every test mode: entry
/// `(i, ℓ)` holds `r^e_ℓ(w, ψ_i)` (elements) or `r^f_j(w, ψ_i)` (facets).
fn steady_snapshot_rows<M: SteadyModel>(
    model: &M,
    test_modes: &[DVector<f64>],
    mu: &ParamVec,
    state: &HfField,
) -> Vec<DVector<f64>> {
    let mesh = model.mesh();
    let (n_e, n_f) = (mesh.n_elements(), mesh.n_facets());
    let w_full = model.to_full(&state.values, 0.0);
    let mut rows = vec![DVector::zeros(n_e + n_f); test_modes.len()];
    for k in 0..n_e {
        let local = model.elem_residual(k, &w_full, mu);
        let (a, b) = mesh.elements[k];
        let dofs = [model.free_dof(a), model.free_dof(b)];
        for (i, psi) in test_modes.iter().enumerate() {
            let mut v = 0.0;
            for (slot, dof) in dofs.iter().enumerate() {
                if let Some(d) = dof {
                    v += psi[*d] * local[slot];
                }
            }
            rows[i][k] = v;
        }
    }
    for j in 0..n_f {
        if let Some((node, value)) = model.facet_residual(j, &w_full, mu) {
            if let Some(d) = model.free_dof(node) {
                for (i, psi) in test_modes.iter().enumerate() {
                    rows[i][n_e + j] = psi[d] * value;
                }
            }
        }
    }
    rows
}

/// Assemble the steady EQ system: the two constant-function rows first, then
/// one row per (training snapshot, test mode) pair, evaluated at the stored
/// snapshot states.
pub fn assemble_eq_rows_steady<M: SteadyModel>(
    model: &M,
    test_modes: &[DVector<f64>],
    train: &[(ParamVec, HfField)],
    delta: f64,
) -> Result<EqSystem> {
    let mesh = model.mesh();
    let (n_e, n_f) = (mesh.n_elements(), mesh.n_facets());
    for (_, state) in train {
        model.check_field(state)?;
    }
    let (mut rows, mut provenance) = constant_rows(model);
    let blocks: Vec<Vec<DVector<f64>>> = train
        .par_iter()
        .map(|(mu, state)| steady_snapshot_rows(model, test_modes, mu, state))
        .collect();
    for (ti, block) in blocks.into_iter().enumerate() {
        for (mi, row) in block.into_iter().enumerate() {
            rows.push(row);
            provenance.push(RowProvenance::Steady {
                train_idx: ti,
                mode_idx: mi,
            });
        }
    }
    let g = DMatrix::from_fn(rows.len(), n_e + n_f, |i, j| rows[i][j]);
    let mut system = EqSystem {
        g,
        b: DVector::zeros(rows.len()),
        rows: provenance,
        delta,
        n_e,
        n_f,
        modes_snapshot: test_modes.to_vec(),
        n_trajs: 0,
    };
    system.refresh_b();
    Ok(system)
}

/// Accuracy rows of one trajectory step against every mode, evaluated at the
/// stored high-fidelity state with the stored internal-variable history.
fn unsteady_step_rows<M: UnsteadyModel>(
    model: &M,
    modes: &[DVector<f64>],
    mode_range: std::ops::Range<usize>,
    mu: &ParamVec,
    traj: &Trajectory,
    step: usize,
) -> Vec<DVector<f64>> {
    let mesh = model.mesh();
    let (n_e, n_f) = (mesh.n_elements(), mesh.n_facets());
    let t = traj.times[step];
    let dt = traj.dt(step);
    let w_full = model.to_full(&traj.states[step], t);
    let gamma_prev = &traj.gammas[step - 1];
    let mut rows = vec![DVector::zeros(n_e + n_f); mode_range.len()];
    for k in 0..n_e {
        let local = model.elem_residual_step(k, &w_full, mu, t, dt, &gamma_prev[k]);
        let (a, b) = mesh.elements[k];
        let dofs = [model.free_dof(a), model.free_dof(b)];
        for (slot, mi) in mode_range.clone().enumerate() {
            let psi = &modes[mi];
            let mut v = 0.0;
            for (s, dof) in dofs.iter().enumerate() {
                if let Some(d) = dof {
                    v += psi[*d] * local[s];
                }
            }
            rows[slot][k] = v;
        }
    }
    for j in 0..n_f {
        if let Some((node, value)) = model.facet_residual_step(j, &w_full, mu, t, dt) {
            if let Some(d) = model.free_dof(node) {
                for (slot, mi) in mode_range.clone().enumerate() {
                    rows[slot][n_e + j] = modes[mi][d] * value;
                }
            }
        }
    }
    rows
}

fn push_unsteady_block<M: UnsteadyModel>(
    model: &M,
    modes: &[DVector<f64>],
    mode_range: std::ops::Range<usize>,
    traj_idx: usize,
    mu: &ParamVec,
    traj: &Trajectory,
    rows: &mut Vec<DVector<f64>>,
    provenance: &mut Vec<RowProvenance>,
) {
    if mode_range.is_empty() {
        return;
    }
    let blocks: Vec<Vec<DVector<f64>>> = (1..=traj.n_steps())
        .into_par_iter()
        .map(|step| unsteady_step_rows(model, modes, mode_range.clone(), mu, traj, step))
        .collect();
    for (step0, block) in blocks.into_iter().enumerate() {
        for (slot, row) in block.into_iter().enumerate() {
            rows.push(row);
            provenance.push(RowProvenance::Unsteady {
                traj_idx,
                step: step0 + 1,
                mode_idx: mode_range.start + slot,
            });
        }
    }
}

/// Assemble the unsteady EQ system from scratch (constant rows first, then
/// per-trajectory, per-step, per-mode accuracy rows).
pub fn assemble_eq_rows_unsteady<M: UnsteadyModel>(
    model: &M,
    modes: &[DVector<f64>],
    trajectories: &[(ParamVec, Trajectory)],
    delta: f64,
) -> Result<EqSystem> {
    let mesh = model.mesh();
    let (n_e, n_f) = (mesh.n_elements(), mesh.n_facets());
    for (_, traj) in trajectories {
        if traj.mesh_level != model.level() {
            return Err(CoreError::dims("trajectory level does not match model"));
        }
    }
    let (mut rows, mut provenance) = constant_rows(model);
    for (ti, (mu, traj)) in trajectories.iter().enumerate() {
        push_unsteady_block(
            model,
            modes,
            0..modes.len(),
            ti,
            mu,
            traj,
            &mut rows,
            &mut provenance,
        );
    }
    let g = DMatrix::from_fn(rows.len(), n_e + n_f, |i, j| rows[i][j]);
    let mut system = EqSystem {
        g,
        b: DVector::zeros(rows.len()),
        rows: provenance,
        delta,
        n_e,
        n_f,
        modes_snapshot: modes.to_vec(),
        n_trajs: trajectories.len(),
    };
    system.refresh_b();
    Ok(system)
}

/// Incremental extension for nested spaces: appends rows for the new modes
/// on the previously assembled trajectories and for all modes on the new
/// trajectories. Errors out when the retained mode prefix changed (the
/// caller must rebuild from scratch in that case).
pub fn extend_eq_rows_unsteady<M: UnsteadyModel>(
    system: &mut EqSystem,
    model: &M,
    modes: &[DVector<f64>],
    trajectories: &[(ParamVec, Trajectory)],
) -> Result<()> {
    if model.mesh().n_elements() != system.n_e || model.mesh().n_facets() != system.n_f {
        return Err(CoreError::dims("system columns do not match the model mesh"));
    }
    let old_n = system.modes_snapshot.len();
    if modes.len() < old_n || trajectories.len() < system.n_trajs {
        return Err(CoreError::invalid(
            "incremental extension cannot shrink the mode or trajectory set",
        ));
    }
    for (i, old) in system.modes_snapshot.iter().enumerate() {
        if modes[i] != *old {
            return Err(CoreError::invalid(
                "test space is not nested; rebuild the EQ system instead of extending it",
            ));
        }
    }
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut provenance: Vec<RowProvenance> = Vec::new();
    // New modes on old trajectories.
    for (ti, (mu, traj)) in trajectories.iter().take(system.n_trajs).enumerate() {
        push_unsteady_block(model, modes, old_n..modes.len(), ti, mu, traj, &mut rows, &mut provenance);
    }
    // All modes on new trajectories.
    for (ti, (mu, traj)) in trajectories.iter().enumerate().skip(system.n_trajs) {
        push_unsteady_block(model, modes, 0..modes.len(), ti, mu, traj, &mut rows, &mut provenance);
    }
    if !rows.is_empty() {
        let old_rows = system.g.nrows();
        let mut g = DMatrix::zeros(old_rows + rows.len(), system.n_cols());
        g.rows_mut(0, old_rows).copy_from(&system.g);
        for (i, row) in rows.iter().enumerate() {
            g.row_mut(old_rows + i).copy_from(&row.transpose());
        }
        system.g = g;
        system.rows.extend(provenance);
    }
    system.modes_snapshot = modes.to_vec();
    system.n_trajs = trajectories.len();
    system.refresh_b();
    Ok(())
}

/// Solve the sparse-representation problem for the assembled system; the
/// returned weights satisfy `‖G ρ − b‖₂ ≤ δ ‖b‖₂`.
pub fn compute_quadrature(
    system: &EqSystem,
    warm_start: Option<&QuadRule>,
) -> Result<(QuadRule, NnlsResult)> {
    if !(system.delta > 0.0 && system.delta < 1.0) {
        return Err(CoreError::Config(format!(
            "EQ tolerance delta must lie in (0, 1), got {}",
            system.delta
        )));
    }
    let p0 = warm_start.map(|q| q.active_set.clone()).unwrap_or_default();
    let problem = NnlsProblem::new(&system.g, &system.b, system.delta).with_warm_start(p0);
    let result = nnls_solve(&problem).map_err(|e| match e {
        CoreError::NnlsOverrun(msg) => CoreError::NnlsOverrun(format!(
            "{msg} (EQ system: {} rows, {} columns)",
            system.n_rows(),
            system.n_cols()
        )),
        other => other,
    })?;
    let rule = QuadRule::from_combined(&result.rho, system.n_e, system.n_f)?;
    Ok((rule, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::Rob;
    use crate::linalg::InnerProduct;
    use crate::linalg::MatrixIp;
    use crate::mesh::Mesh;
    use crate::model::{
        hf_residual, hf_solve_steady, hf_solve_unsteady, uniform_time_grid, CreepBar, ModelCore,
        NormKind, SteadyReactionDiffusion,
    };
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn steady_fixture() -> (SteadyReactionDiffusion, Vec<(ParamVec, HfField)>, Vec<DVector<f64>>) {
        let model = SteadyReactionDiffusion::new(Mesh::uniform(12, 0).unwrap()).unwrap();
        let mus = [
            ParamVec::new(vec![0.8, 2.0]),
            ParamVec::new(vec![1.6, 7.0]),
        ];
        let train: Vec<(ParamVec, HfField)> = mus
            .iter()
            .map(|mu| {
                let (u, _) = hf_solve_steady(&model, mu, None).unwrap();
                (mu.clone(), u)
            })
            .collect();
        // A small synthetic orthonormal test set.
        let test_ip_mat = model.inner_product(NormKind::Test).clone();
        let ip = MatrixIp::new(&test_ip_mat);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut modes: Vec<DVector<f64>> = Vec::new();
        for _ in 0..3 {
            let v = DVector::from_fn(model.n_dofs(), |_, _| rng.random::<f64>() - 0.5);
            let r = crate::linalg::orthogonalize_twice(&modes, &v, &ip);
            let n = ip.norm(&r);
            modes.push(r / n);
        }
        (model, train, modes)
    }

    #[test]
    fn ones_image_and_row_count() {
        let (model, train, modes) = steady_fixture();
        let sys = assemble_eq_rows_steady(&model, &modes, &train, 1e-4).unwrap();
        assert_eq!(sys.n_rows(), train.len() * modes.len() + 2);
        let ones = DVector::from_element(sys.n_cols(), 1.0);
        assert!((&sys.g * ones - &sys.b).norm() <= 1e-12);
        assert_eq!(sys.rows[0], RowProvenance::ConstantElem);
        assert_eq!(sys.rows[1], RowProvenance::ConstantFacet);
        // Constant rows carry element lengths / facet measures.
        for k in 0..sys.n_e {
            assert!((sys.g[(0, k)] - model.mesh().elem_length(k)).abs() < 1e-15);
        }
        for j in 0..sys.n_f {
            assert!((sys.g[(1, sys.n_e + j)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn row_dot_weights_matches_weighted_residual() {
        let (model, train, modes) = steady_fixture();
        let sys = assemble_eq_rows_steady(&model, &modes, &train, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut quad = QuadRule::full(sys.n_e, sys.n_f);
        for v in quad
            .elem_weights
            .iter_mut()
            .chain(quad.facet_weights.iter_mut())
        {
            *v = rng.random::<f64>();
        }
        quad.rebuild_active_set();
        let rho = quad.combined();
        for (row_idx, prov) in sys.rows.iter().enumerate() {
            if let RowProvenance::Steady { train_idx, mode_idx } = prov {
                let (mu, state) = &train[*train_idx];
                let weighted = hf_residual(&model, state, mu, Some(&quad)).unwrap();
                let oracle = weighted.dot(&modes[*mode_idx]);
                let fast = sys.g.row(row_idx).transpose().dot(&rho);
                assert!((oracle - fast).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_meets_constraint_and_recovers_constants() {
        let (model, train, modes) = steady_fixture();
        let sys = assemble_eq_rows_steady(&model, &modes, &train, 1e-6).unwrap();
        let (rule, stats) = compute_quadrature(&sys, None).unwrap();
        rule.validate().unwrap();
        assert!(stats.residual_norm <= sys.delta * sys.b.norm() + 1e-12);
        // Constant-function accuracy transfers from the NNLS bound.
        let vol: f64 = (0..sys.n_e)
            .map(|k| rule.elem_weights[k] * model.mesh().elem_length(k))
            .sum();
        assert!((vol - model.mesh().domain_length()).abs() <= sys.delta * sys.b.norm());
        // Sparser than the dense rule.
        assert!(rule.active_set.len() < sys.n_cols());
    }

    #[test]
    fn rejects_delta_out_of_range() {
        let (model, train, modes) = steady_fixture();
        let sys = assemble_eq_rows_steady(&model, &modes, &train, 1.0 - f64::EPSILON).unwrap();
        assert!(compute_quadrature(&sys, None).is_ok());
        let mut bad = sys.clone();
        bad.delta = 1.0;
        assert!(compute_quadrature(&bad, None).is_err());
        bad.delta = 1.5;
        assert!(compute_quadrature(&bad, None).is_err());
    }

    fn creep_fixture(
        n_trajs: usize,
    ) -> (CreepBar, Vec<(ParamVec, Trajectory)>, Vec<DVector<f64>>) {
        let model = CreepBar::new(Mesh::uniform(10, 0).unwrap()).unwrap();
        let grid = uniform_time_grid(1.0, 6);
        let taus = [0.4, 1.1, 2.9, 0.7];
        let trajs: Vec<(ParamVec, Trajectory)> = (0..n_trajs)
            .map(|i| {
                let mu = ParamVec::new(vec![1.0 + 0.2 * i as f64, taus[i % taus.len()]]);
                let t = hf_solve_unsteady(&model, &mu, &grid).unwrap();
                (mu, t)
            })
            .collect();
        let trial = model.inner_product(NormKind::Trial).clone();
        let ip = MatrixIp::new(&trial);
        let mut rob = Rob::new(0);
        for (_, t) in &trajs {
            for s in &t.states[1..] {
                rob.append(s, &ip);
            }
        }
        (model, trajs, rob.modes)
    }

    #[test]
    fn unsteady_extension_matches_full_reassembly() {
        let (model, trajs, modes) = creep_fixture(3);
        let n_old_modes = 2.min(modes.len());
        let mut sys =
            assemble_eq_rows_unsteady(&model, &modes[..n_old_modes], &trajs[..2], 1e-4).unwrap();
        let rows_before = sys.n_rows();
        extend_eq_rows_unsteady(&mut sys, &model, &modes, &trajs).unwrap();
        let k_steps = trajs[0].1.n_steps();
        let expect_new = (modes.len() - n_old_modes) * 2 * k_steps + modes.len() * k_steps;
        assert_eq!(sys.n_rows(), rows_before + expect_new);

        let full = assemble_eq_rows_unsteady(&model, &modes, &trajs, 1e-4).unwrap();
        assert_eq!(full.n_rows(), sys.n_rows());
        // Same row multiset: match by provenance.
        for (i, prov) in sys.rows.iter().enumerate() {
            let j = full
                .rows
                .iter()
                .position(|p| p == prov)
                .expect("row present in full assembly");
            let diff = (sys.g.row(i) - full.g.row(j)).norm();
            assert!(diff <= 1e-13, "row {prov:?} differs by {diff}");
        }
        let ones = DVector::from_element(sys.n_cols(), 1.0);
        assert!((&sys.g * ones - &sys.b).norm() <= 1e-12);
    }

    #[test]
    fn extension_with_no_new_pairs_is_identity() {
        let (model, trajs, modes) = creep_fixture(2);
        let mut sys = assemble_eq_rows_unsteady(&model, &modes, &trajs, 1e-4).unwrap();
        let before = sys.g.clone();
        extend_eq_rows_unsteady(&mut sys, &model, &modes, &trajs).unwrap();
        assert_eq!(sys.g, before);
    }

    #[test]
    fn extension_rejects_non_nested_modes() {
        let (model, trajs, modes) = creep_fixture(2);
        let mut sys = assemble_eq_rows_unsteady(&model, &modes, &trajs, 1e-4).unwrap();
        let mut rotated = modes.clone();
        rotated[0] = -&rotated[0];
        let err = extend_eq_rows_unsteady(&mut sys, &model, &rotated, &trajs);
        assert!(err.is_err());
    }

    #[test]
    fn warm_start_reuses_previous_support() {
        let (model, trajs, modes) = creep_fixture(3);
        let sys1 = assemble_eq_rows_unsteady(&model, &modes[..1], &trajs[..2], 1e-5).unwrap();
        let (rule1, _) = compute_quadrature(&sys1, None).unwrap();
        let sys2 = assemble_eq_rows_unsteady(&model, &modes, &trajs, 1e-5).unwrap();
        let (rule_warm, warm) = compute_quadrature(&sys2, Some(&rule1)).unwrap();
        let (rule_cold, cold) = compute_quadrature(&sys2, None).unwrap();
        assert!(warm.ls_solve_count <= cold.ls_solve_count);
        for (rule, stats) in [(&rule_warm, &warm), (&rule_cold, &cold)] {
            rule.validate().unwrap();
            assert!(stats.residual_norm <= sys2.delta * sys2.b.norm() + 1e-12);
        }
    }
}
