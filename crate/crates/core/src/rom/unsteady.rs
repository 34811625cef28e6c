//! Time-marching hyper-reduced Galerkin ROM for quasi-static problems with
//! internal variables. The test space equals the trial space; internal
//! variables are tracked only at the quadrature points of elements with
//! nonzero empirical weight, which is where the online saving comes from.

use crate::compress::Rob;
use crate::error::CoreError;
use crate::hyper::QuadRule;
use crate::model::UnsteadyModel;
use crate::params::ParamVec;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub alphas: Vec<DVector<f64>>,
    /// Quantity of interest per time node.
    pub qois: Vec<f64>,
}

struct ActiveElem {
    k: usize,
    weight: f64,
    /// Trial modes restricted to the element nodes, n × 2 (Galerkin: the
    /// test restriction is the same).
    z_loc: Vec<[f64; 2]>,
}

pub struct UnsteadyRom<M> {
    pub model: Arc<M>,
    pub rob: Rob,
    pub quad: QuadRule,
    pub times: Vec<f64>,
    active_elems: Vec<ActiveElem>,
    active_facets: Vec<(usize, f64)>,
}

impl<M: UnsteadyModel> UnsteadyRom<M> {
    pub fn new(model: Arc<M>, rob: Rob, quad: QuadRule, times: Vec<f64>) -> Result<Self> {
        let mesh = model.mesh();
        if quad.elem_weights.len() != mesh.n_elements()
            || quad.facet_weights.len() != mesh.n_facets()
        {
            return Err(CoreError::dims("quadrature does not match the model mesh"));
        }
        if times.len() < 2 {
            return Err(CoreError::invalid("time grid must have at least one step"));
        }
        let active_elems = (0..mesh.n_elements())
            .filter(|&k| quad.elem_weights[k] > 0.0)
            .map(|k| {
                let (a, b) = mesh.elements[k];
                let dofs = [model.free_dof(a), model.free_dof(b)];
                ActiveElem {
                    k,
                    weight: quad.elem_weights[k],
                    z_loc: rob
                        .modes
                        .iter()
                        .map(|m| {
                            [
                                dofs[0].map_or(0.0, |d| m[d]),
                                dofs[1].map_or(0.0, |d| m[d]),
                            ]
                        })
                        .collect(),
                }
            })
            .collect();
        let active_facets = (0..mesh.n_facets())
            .filter(|&j| quad.facet_weights[j] > 0.0)
            .map(|j| (j, quad.facet_weights[j]))
            .collect();
        Ok(Self {
            model,
            rob,
            quad,
            times,
            active_elems,
            active_facets,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.rob.n_modes()
    }

    fn reduced_residual(
        &self,
        alpha: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
        gamma_prev: &[[f64; 2]],
    ) -> DVector<f64> {
        let w_full = self.model.to_full(&self.rob.lift(alpha), t);
        let n = self.rob.n_modes();
        let mut out = DVector::zeros(n);
        for (slot, ae) in self.active_elems.iter().enumerate() {
            let local =
                self.model
                    .elem_residual_step(ae.k, &w_full, mu, t, dt, &gamma_prev[slot]);
            for j in 0..n {
                out[j] += ae.weight * (ae.z_loc[j][0] * local[0] + ae.z_loc[j][1] * local[1]);
            }
        }
        for &(fj, weight) in &self.active_facets {
            if let Some((node, value)) = self.model.facet_residual_step(fj, &w_full, mu, t, dt) {
                if let Some(d) = self.model.free_dof(node) {
                    for j in 0..n {
                        out[j] += weight * self.rob.modes[j][d] * value;
                    }
                }
            }
        }
        out
    }

    fn reduced_jacobian(
        &self,
        alpha: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
        gamma_prev: &[[f64; 2]],
    ) -> DMatrix<f64> {
        let w_full = self.model.to_full(&self.rob.lift(alpha), t);
        let n = self.rob.n_modes();
        let mut out = DMatrix::zeros(n, n);
        for (slot, ae) in self.active_elems.iter().enumerate() {
            let local =
                self.model
                    .elem_jacobian_step(ae.k, &w_full, mu, t, dt, &gamma_prev[slot]);
            for i in 0..n {
                let zi = ae.z_loc[i];
                let row = [
                    zi[0] * local[0][0] + zi[1] * local[1][0],
                    zi[0] * local[0][1] + zi[1] * local[1][1],
                ];
                for j in 0..n {
                    let zj = ae.z_loc[j];
                    out[(i, j)] += ae.weight * (row[0] * zj[0] + row[1] * zj[1]);
                }
            }
        }
        out
    }

    /// March the reduced model over the stored time grid. Internal variables
    /// live only on the active elements.
    pub fn galerkin_march(&self, mu: &ParamVec) -> Result<ReducedTrajectory> {
        if !self.model.param_box().contains(mu) {
            return Err(CoreError::invalid(format!(
                "parameter {mu} outside the admissible box"
            )));
        }
        let n = self.rob.n_modes();
        let mut alpha = DVector::zeros(n);
        let mut gamma: Vec<[f64; 2]> = self.active_elems.iter().map(|_| [0.0; 2]).collect();
        let mut alphas = vec![alpha.clone()];
        let mut qois = vec![self
            .model
            .qoi(&self.rob.lift(&alpha), self.times[0])];
        for k in 1..self.times.len() {
            let (t, dt) = (self.times[k], self.times[k] - self.times[k - 1]);
            let gamma_prev = gamma.clone();
            let residual = |a: &DVector<f64>| self.reduced_residual(a, mu, t, dt, &gamma_prev);
            let jacobian = |a: &DVector<f64>| self.reduced_jacobian(a, mu, t, dt, &gamma_prev);
            let (next, _stats) = crate::model::damped_newton(
                alpha.clone(),
                residual,
                jacobian,
                &format!("reduced unsteady solve, step {k}"),
            )
            .map_err(|e| match e {
                CoreError::SolverFailure {
                    context,
                    residual_norm,
                    iterations,
                    last_iterate,
                } => CoreError::SolverFailure {
                    context: format!("{context} (step {k})"),
                    residual_norm,
                    iterations,
                    last_iterate,
                },
                other => other,
            })?;
            alpha = next;
            let w_full = self.model.to_full(&self.rob.lift(&alpha), t);
            for (slot, ae) in self.active_elems.iter().enumerate() {
                let strain = self.model.elem_strain(ae.k, &w_full);
                gamma[slot] = [
                    self.model.gamma_update(mu, dt, strain, gamma_prev[slot][0]),
                    self.model.gamma_update(mu, dt, strain, gamma_prev[slot][1]),
                ];
            }
            qois.push(self.model.qoi(&self.rob.lift(&alpha), t));
            alphas.push(alpha.clone());
        }
        Ok(ReducedTrajectory {
            times: self.times.clone(),
            alphas,
            qois,
        })
    }

    /// Validation utility: replay the internal-variable history on every
    /// element of the mesh from a reduced trajectory.
    pub fn replay_full_gamma(&self, mu: &ParamVec, traj: &ReducedTrajectory) -> Vec<Vec<[f64; 2]>> {
        let n_e = self.model.mesh().n_elements();
        let mut history = vec![self.model.initial_gamma()];
        for k in 1..traj.times.len() {
            let dt = traj.times[k] - traj.times[k - 1];
            let w_full = self.model.to_full(&self.rob.lift(&traj.alphas[k]), traj.times[k]);
            let prev = history[k - 1].clone();
            let step: Vec<[f64; 2]> = (0..n_e)
                .map(|e| {
                    let strain = self.model.elem_strain(e, &w_full);
                    [
                        self.model.gamma_update(mu, dt, strain, prev[e][0]),
                        self.model.gamma_update(mu, dt, strain, prev[e][1]),
                    ]
                })
                .collect();
            history.push(step);
        }
        history
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelCore;
    use crate::linalg::MatrixIp;
    use crate::mesh::Mesh;
    use crate::model::{hf_solve_unsteady, uniform_time_grid, CreepBar, NormKind};

    #[test]
    fn complete_basis_with_full_quadrature_reproduces_hf() {
        let mesh = Mesh::uniform(8, 0).unwrap();
        let model = Arc::new(CreepBar::new(mesh).unwrap());
        let mu = ParamVec::new(vec![1.3, 0.9]);
        let grid = uniform_time_grid(1.5, 10);
        let hf = hf_solve_unsteady(model.as_ref(), &mu, &grid).unwrap();

        let trial = model.inner_product(NormKind::Trial).clone();
        let ip = MatrixIp::new(&trial);
        let mut rob = Rob::new(0);
        for i in 0..model.n_dofs() {
            let mut e = DVector::zeros(model.n_dofs());
            e[i] = 1.0;
            rob.append(&e, &ip);
        }
        let quad = QuadRule::full(model.mesh().n_elements(), model.mesh().n_facets());
        let rom = UnsteadyRom::new(model.clone(), rob, quad, grid).unwrap();
        let reduced = rom.galerkin_march(&mu).unwrap();
        for (k, state) in hf.states.iter().enumerate() {
            let lifted = rom.rob.lift(&reduced.alphas[k]);
            let gap = (state - &lifted).norm();
            assert!(gap <= 1e-8, "step {k} gap {gap}");
        }
    }

    #[test]
    fn single_mode_exact_for_uniform_strain() {
        let mesh = Mesh::uniform(10, 0).unwrap();
        let model = Arc::new(CreepBar::displacement_controlled(mesh, 0.4).unwrap());
        let mu = ParamVec::new(vec![1.0, 0.8]);
        let grid = uniform_time_grid(2.0, 12);
        let hf = hf_solve_unsteady(model.as_ref(), &mu, &grid).unwrap();

        // One mode: the (free-dof restriction of the) linear profile.
        let trial = model.inner_product(NormKind::Trial).clone();
        let ip = MatrixIp::new(&trial);
        let mut rob = Rob::new(0);
        let profile = DVector::from_fn(model.n_dofs(), |d, _| model.mesh().nodes[d + 1]);
        rob.append(&profile, &ip);
        let quad = QuadRule::full(model.mesh().n_elements(), model.mesh().n_facets());
        let rom = UnsteadyRom::new(model.clone(), rob, quad, grid).unwrap();
        let reduced = rom.galerkin_march(&mu).unwrap();
        for k in 1..hf.states.len() {
            let gap = (&hf.states[k] - rom.rob.lift(&reduced.alphas[k])).norm();
            assert!(gap <= 1e-9, "step {k} gap {gap}");
        }
    }

    #[test]
    fn converged_steps_satisfy_galerkin_consistency() {
        let mesh = Mesh::uniform(12, 0).unwrap();
        let model = Arc::new(CreepBar::new(mesh).unwrap());
        let mu = ParamVec::new(vec![0.8, 1.7]);
        let grid = uniform_time_grid(1.0, 6);
        let hf = hf_solve_unsteady(model.as_ref(), &mu, &grid).unwrap();
        let trial = model.inner_product(NormKind::Trial).clone();
        let ip = MatrixIp::new(&trial);
        let mut rob = Rob::new(0);
        for s in &hf.states[1..4] {
            rob.append(s, &ip);
        }
        let quad = QuadRule::full(model.mesh().n_elements(), model.mesh().n_facets());
        let rom = UnsteadyRom::new(model.clone(), rob, quad, grid).unwrap();
        let reduced = rom.galerkin_march(&mu).unwrap();
        // Replay the residual with the committed gamma history.
        let mut gamma: Vec<[f64; 2]> = rom.active_elems.iter().map(|_| [0.0; 2]).collect();
        for k in 1..reduced.times.len() {
            let (t, dt) = (reduced.times[k], reduced.times[k] - reduced.times[k - 1]);
            let r = rom.reduced_residual(&reduced.alphas[k], &mu, t, dt, &gamma);
            assert!(r.norm() <= 1e-9, "step {k} reduced residual {}", r.norm());
            let w_full = rom.model.to_full(&rom.rob.lift(&reduced.alphas[k]), t);
            for (slot, ae) in rom.active_elems.iter().enumerate() {
                let strain = rom.model.elem_strain(ae.k, &w_full);
                gamma[slot] = [
                    rom.model.gamma_update(&mu, dt, strain, gamma[slot][0]),
                    rom.model.gamma_update(&mu, dt, strain, gamma[slot][1]),
                ];
            }
        }
    }

    #[test]
    fn replay_matches_hf_gamma_for_complete_basis() {
        let mesh = Mesh::uniform(6, 0).unwrap();
        let model = Arc::new(CreepBar::new(mesh).unwrap());
        let mu = ParamVec::new(vec![1.1, 0.5]);
        let grid = uniform_time_grid(1.0, 8);
        let hf = hf_solve_unsteady(model.as_ref(), &mu, &grid).unwrap();
        let trial = model.inner_product(NormKind::Trial).clone();
        let ip = MatrixIp::new(&trial);
        let mut rob = Rob::new(0);
        for i in 0..model.n_dofs() {
            let mut e = DVector::zeros(model.n_dofs());
            e[i] = 1.0;
            rob.append(&e, &ip);
        }
        let quad = QuadRule::full(model.mesh().n_elements(), model.mesh().n_facets());
        let rom = UnsteadyRom::new(model.clone(), rob, quad, grid).unwrap();
        let reduced = rom.galerkin_march(&mu).unwrap();
        let replay = rom.replay_full_gamma(&mu, &reduced);
        for k in 0..hf.gammas.len() {
            for e in 0..hf.gammas[k].len() {
                for g in 0..2 {
                    assert!((replay[k][e][g] - hf.gammas[k][e][g]).abs() <= 1e-8);
                }
            }
        }
    }
}
