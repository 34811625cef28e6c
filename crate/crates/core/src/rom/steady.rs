//! Steady LSPG ROM: Gauss-Newton minimization of the empirical residual
//! tested against the orthonormal empirical test space, with quadrature
//! restricted to the active elements and facets.

use crate::compress::{Rob, TestSpaceState};
use crate::error::CoreError;
use crate::hyper::QuadRule;
use crate::linalg::lstsq_min_norm;
use crate::model::{HfField, SteadyModel};
use crate::params::ParamVec;
use crate::Result;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnSettings {
    pub step_tol: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for GnSettings {
    fn default() -> Self {
        Self {
            step_tol: 1e-10,
            residual_tol: 1e-10,
            max_iterations: 50,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LspgSolution {
    pub alpha: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Local restriction of a mode set to one element's two nodes (entries are
/// zero for eliminated DOFs).
fn restrict(modes: &[DVector<f64>], dofs: [Option<usize>; 2]) -> Vec<[f64; 2]> {
    modes
        .iter()
        .map(|m| {
            [
                dofs[0].map_or(0.0, |d| m[d]),
                dofs[1].map_or(0.0, |d| m[d]),
            ]
        })
        .collect()
}

struct ActiveElem {
    k: usize,
    weight: f64,
    /// Test modes restricted to the element's nodes, m × 2.
    psi_loc: Vec<[f64; 2]>,
    /// Trial modes restricted to the element's nodes, n × 2.
    z_loc: Vec<[f64; 2]>,
}

struct ActiveFacet {
    j: usize,
    weight: f64,
    /// Free DOF of the facet node, with the test/trial mode values there.
    dof: Option<usize>,
    psi_at: Vec<f64>,
}

pub struct SteadyRom<M> {
    pub model: Arc<M>,
    pub rob: Rob,
    pub test: TestSpaceState,
    pub quad: QuadRule,
    pub gn: GnSettings,
    active_elems: Vec<ActiveElem>,
    active_facets: Vec<ActiveFacet>,
}

impl<M: SteadyModel> SteadyRom<M> {
    pub fn new(
        model: Arc<M>,
        rob: Rob,
        test: TestSpaceState,
        quad: QuadRule,
        gn: GnSettings,
    ) -> Result<Self> {
        let mesh = model.mesh();
        if quad.elem_weights.len() != mesh.n_elements()
            || quad.facet_weights.len() != mesh.n_facets()
        {
            return Err(CoreError::dims("quadrature does not match the model mesh"));
        }
        if rob.mesh_level != model.level() {
            return Err(CoreError::dims("basis level does not match the model"));
        }
        let active_elems = (0..mesh.n_elements())
            .filter(|&k| quad.elem_weights[k] > 0.0)
            .map(|k| {
                let (a, b) = mesh.elements[k];
                let dofs = [model.free_dof(a), model.free_dof(b)];
                ActiveElem {
                    k,
                    weight: quad.elem_weights[k],
                    psi_loc: restrict(&test.modes, dofs),
                    z_loc: restrict(&rob.modes, dofs),
                }
            })
            .collect();
        let active_facets = (0..mesh.n_facets())
            .filter(|&j| quad.facet_weights[j] > 0.0)
            .map(|j| {
                let node = mesh.facets[j];
                let dof = model.free_dof(node);
                ActiveFacet {
                    j,
                    weight: quad.facet_weights[j],
                    dof,
                    psi_at: test
                        .modes
                        .iter()
                        .map(|m| dof.map_or(0.0, |d| m[d]))
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            model,
            rob,
            test,
            quad,
            gn,
            active_elems,
            active_facets,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.rob.n_modes()
    }

    pub fn test_size(&self) -> usize {
        self.test.size()
    }

    /// Lift reduced coordinates to a high-fidelity field.
    pub fn reconstruct(&self, alpha: &DVector<f64>) -> HfField {
        HfField::new(self.rob.lift(alpha), self.rob.mesh_level)
    }

    /// The empirical reduced residual: component i is `R^eq_μ(Z α, ψ_i)`.
    fn reduced_residual(&self, alpha: &DVector<f64>, mu: &ParamVec) -> DVector<f64> {
        let w_full = self.model.to_full(&self.rob.lift(alpha), 0.0);
        let m = self.test.size();
        let mut out = DVector::zeros(m);
        for ae in &self.active_elems {
            let local = self.model.elem_residual(ae.k, &w_full, mu);
            for i in 0..m {
                out[i] += ae.weight * (ae.psi_loc[i][0] * local[0] + ae.psi_loc[i][1] * local[1]);
            }
        }
        for af in &self.active_facets {
            if let Some((node, value)) = self.model.facet_residual(af.j, &w_full, mu) {
                if af.dof == self.model.free_dof(node) && af.dof.is_some() {
                    for i in 0..m {
                        out[i] += af.weight * af.psi_at[i] * value;
                    }
                }
            }
        }
        out
    }

    /// Jacobian of the reduced residual. The built-in facet residuals are
    /// state-independent, so only element blocks contribute.
    fn reduced_jacobian(&self, alpha: &DVector<f64>, mu: &ParamVec) -> DMatrix<f64> {
        let w_full = self.model.to_full(&self.rob.lift(alpha), 0.0);
        let (m, n) = (self.test.size(), self.rob.n_modes());
        let mut out = DMatrix::zeros(m, n);
        for ae in &self.active_elems {
            let local = self.model.elem_jacobian(ae.k, &w_full, mu);
            for i in 0..m {
                let psi = ae.psi_loc[i];
                let row = [
                    psi[0] * local[0][0] + psi[1] * local[1][0],
                    psi[0] * local[0][1] + psi[1] * local[1][1],
                ];
                for j in 0..n {
                    let z = ae.z_loc[j];
                    out[(i, j)] += ae.weight * (row[0] * z[0] + row[1] * z[1]);
                }
            }
        }
        out
    }

    /// Damped Gauss-Newton minimization of `‖R^eq_μ(Z α, ·)‖₂` over the
    /// reduced coordinates.
    pub fn lspg_solve(&self, mu: &ParamVec, alpha_init: Option<&DVector<f64>>) -> Result<LspgSolution> {
        let n = self.rob.n_modes();
        let mut alpha = alpha_init.cloned().unwrap_or_else(|| DVector::zeros(n));
        if alpha.len() != n {
            return Err(CoreError::dims("initial coordinates do not match the basis"));
        }
        let mut residual = self.reduced_residual(&alpha, mu);
        let mut rn = residual.norm();
        let mut history = vec![rn];
        for iteration in 0..self.gn.max_iterations {
            if rn <= self.gn.residual_tol {
                return Ok(LspgSolution {
                    alpha,
                    residual_norm: rn,
                    iterations: iteration,
                    residual_history: history,
                });
            }
            let jac = self.reduced_jacobian(&alpha, mu);
            let step = lstsq_min_norm(&jac, &(-&residual));
            if step.norm() <= self.gn.step_tol * (1.0 + alpha.norm()) {
                return Ok(LspgSolution {
                    alpha,
                    residual_norm: rn,
                    iterations: iteration,
                    residual_history: history,
                });
            }
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=self.gn.max_halvings {
                let candidate = &alpha + scale * &step;
                let r_new = self.reduced_residual(&candidate, mu);
                let rn_new = r_new.norm();
                if rn_new < rn {
                    alpha = candidate;
                    residual = r_new;
                    rn = rn_new;
                    history.push(rn);
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // No descent left at the backtracking floor: stationary.
                if scale * step.norm() <= self.gn.step_tol * (1.0 + alpha.norm()) * 1e4 {
                    return Ok(LspgSolution {
                        alpha,
                        residual_norm: rn,
                        iterations: iteration + 1,
                        residual_history: history,
                    });
                }
                return Err(CoreError::SolverFailure {
                    context: format!("LSPG Gauss-Newton stalled at {mu} (history {history:?})"),
                    residual_norm: rn,
                    iterations: iteration + 1,
                    last_iterate: alpha.as_slice().to_vec(),
                });
            }
        }
        Err(CoreError::SolverFailure {
            context: format!("LSPG Gauss-Newton hit the iteration cap at {mu} (history {history:?})"),
            residual_norm: rn,
            iterations: self.gn.max_iterations,
            last_iterate: alpha.as_slice().to_vec(),
        })
    }
}
