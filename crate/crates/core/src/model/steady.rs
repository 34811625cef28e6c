//! Steady nonlinear reaction-diffusion rod:
//!
//! `-(μ₁ u')' + μ₂ u³ = f` on (0, 1), `u(0) = 0` imposed by DOF
//! elimination, prescribed flux `μ₁ u'(1) = g` entering as a boundary-facet
//! residual. Piecewise-linear elements with a two-point Gauss rule per cell.

use super::{ModelCore, NormKind, SteadyModel};
use crate::mesh::Mesh;
use crate::params::{ParamBox, ParamVec};
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::sync::Arc;

type SpatialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub struct SteadyReactionDiffusion {
    mesh: Mesh,
    param_box: ParamBox,
    neumann_flux: f64,
    /// Forcing values cached at the two Gauss points of each element.
    f_gauss: Vec<[f64; 2]>,
    mass: DMatrix<f64>,
    test_op: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    test_chol: Cholesky<f64, Dyn>,
}

impl SteadyReactionDiffusion {
    /// Default configuration: `f(x) = 10 sin(πx)`, flux 0.5,
    /// `μ₁ ∈ [0.5, 2]`, `μ₂ ∈ [0, 10]`.
    pub fn new(mesh: Mesh) -> Result<Self> {
        let f: SpatialFn = Arc::new(|x| 10.0 * (std::f64::consts::PI * x).sin());
        Self::with_data(mesh, f, 0.5)
    }

    /// Custom forcing and Neumann flux (used by manufactured-solution tests).
    pub fn with_data(mesh: Mesh, forcing: SpatialFn, neumann_flux: f64) -> Result<Self> {
        let param_box = ParamBox::new(vec![0.5, 0.0], vec![2.0, 10.0])?;
        let f_gauss = (0..mesh.n_elements())
            .map(|k| {
                let g = mesh.gauss_points(k);
                [forcing(g[0].0), forcing(g[1].0)]
            })
            .collect();
        let n_dofs = mesh.n_nodes() - 1;
        let (mass, test_op) = assemble_operators(&mesh, n_dofs, |node| {
            if node == 0 {
                None
            } else {
                Some(node - 1)
            }
        });
        let mass_chol = Cholesky::new(mass.clone())
            .ok_or_else(|| crate::CoreError::Config("trial inner product not SPD".into()))?;
        let test_chol = Cholesky::new(test_op.clone())
            .ok_or_else(|| crate::CoreError::Config("test inner product not SPD".into()))?;
        Ok(Self {
            mesh,
            param_box,
            neumann_flux,
            f_gauss,
            mass,
            test_op,
            mass_chol,
            test_chol,
        })
    }
}

/// Exact P1 local operators accumulated into dense free-DOF matrices:
/// mass for the trial norm, stiffness + mass for the test norm.
pub(super) fn assemble_operators(
    mesh: &Mesh,
    n_dofs: usize,
    free_dof: impl Fn(usize) -> Option<usize>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut mass = DMatrix::zeros(n_dofs, n_dofs);
    let mut test_op = DMatrix::zeros(n_dofs, n_dofs);
    for k in 0..mesh.n_elements() {
        let h = mesh.elem_length(k);
        let m_loc = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let k_loc = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        let (na, nb) = mesh.elements[k];
        let dofs = [free_dof(na), free_dof(nb)];
        for (i, di) in dofs.iter().enumerate() {
            if let Some(di) = di {
                for (j, dj) in dofs.iter().enumerate() {
                    if let Some(dj) = dj {
                        mass[(*di, *dj)] += m_loc[i][j];
                        test_op[(*di, *dj)] += m_loc[i][j] + k_loc[i][j];
                    }
                }
            }
        }
    }
    (mass, test_op)
}

impl ModelCore for SteadyReactionDiffusion {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn n_dofs(&self) -> usize {
        self.mesh.n_nodes() - 1
    }

    fn param_box(&self) -> &ParamBox {
        &self.param_box
    }

    fn free_dof(&self, node: usize) -> Option<usize> {
        if node == 0 {
            None
        } else {
            Some(node - 1)
        }
    }

    fn dirichlet_value(&self, _node: usize, _t: f64) -> f64 {
        0.0
    }

    fn inner_product(&self, kind: NormKind) -> &DMatrix<f64> {
        match kind {
            NormKind::Trial => &self.mass,
            NormKind::Test => &self.test_op,
        }
    }

    fn riesz_factor(&self, kind: NormKind) -> &Cholesky<f64, Dyn> {
        match kind {
            NormKind::Trial => &self.mass_chol,
            NormKind::Test => &self.test_chol,
        }
    }
}

impl SteadyModel for SteadyReactionDiffusion {
    fn elem_residual(&self, k: usize, w_full: &DVector<f64>, mu: &ParamVec) -> [f64; 2] {
        let (kappa, cubic) = (mu.components[0], mu.components[1]);
        let (na, nb) = self.mesh.elements[k];
        let (xa, xb) = (self.mesh.nodes[na], self.mesh.nodes[nb]);
        let h = xb - xa;
        let (wa, wb) = (w_full[na], w_full[nb]);
        let grad = (wb - wa) / h;
        let mut r = [0.0; 2];
        for (g, (x, wt)) in self.mesh.gauss_points(k).into_iter().enumerate() {
            let sh_a = (xb - x) / h;
            let sh_b = (x - xa) / h;
            let w = wa * sh_a + wb * sh_b;
            let bulk = cubic * w * w * w - self.f_gauss[k][g];
            r[0] += wt * (kappa * grad * (-1.0 / h) + bulk * sh_a);
            r[1] += wt * (kappa * grad * (1.0 / h) + bulk * sh_b);
        }
        r
    }

    fn elem_jacobian(&self, k: usize, w_full: &DVector<f64>, mu: &ParamVec) -> [[f64; 2]; 2] {
        let (kappa, cubic) = (mu.components[0], mu.components[1]);
        let (na, nb) = self.mesh.elements[k];
        let (xa, xb) = (self.mesh.nodes[na], self.mesh.nodes[nb]);
        let h = xb - xa;
        let (wa, wb) = (w_full[na], w_full[nb]);
        let dsh = [-1.0 / h, 1.0 / h];
        let mut jac = [[0.0; 2]; 2];
        for (x, wt) in self.mesh.gauss_points(k) {
            let sh = [(xb - x) / h, (x - xa) / h];
            let w = wa * sh[0] + wb * sh[1];
            let react = 3.0 * cubic * w * w;
            for i in 0..2 {
                for j in 0..2 {
                    jac[i][j] += wt * (kappa * dsh[j] * dsh[i] + react * sh[j] * sh[i]);
                }
            }
        }
        jac
    }

    fn facet_residual(
        &self,
        j: usize,
        _w_full: &DVector<f64>,
        _mu: &ParamVec,
    ) -> Option<(usize, f64)> {
        // Only the right boundary facet carries the prescribed-flux term;
        // the left one belongs to the eliminated Dirichlet node.
        if j == self.mesh.n_facets() - 1 {
            Some((self.mesh.n_nodes() - 1, -self.neumann_flux))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        assemble_jacobian, hf_residual, hf_solve_steady, riesz_solve, HfField,
    };
    use crate::Result;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize) -> SteadyReactionDiffusion {
        SteadyReactionDiffusion::new(Mesh::uniform(n, 0).unwrap()).unwrap()
    }

    /// Manufactured solution u = sin(pi x) for the linear sub-case:
    /// kappa = 1, cubic = 0, f = pi^2 sin(pi x), flux = pi cos(pi).
    fn mms_model(n: usize) -> SteadyReactionDiffusion {
        let pi = std::f64::consts::PI;
        SteadyReactionDiffusion::with_data(
            Mesh::uniform(n, 0).unwrap(),
            Arc::new(move |x| pi * pi * (pi * x).sin()),
            pi * (pi).cos(),
        )
        .unwrap()
    }

    fn mms_l2_error(n: usize) -> f64 {
        let m = mms_model(n);
        let mu = ParamVec::new(vec![1.0, 0.0]);
        let (u, _) = hf_solve_steady(&m, &mu, None).unwrap();
        let exact = DVector::from_fn(m.n_dofs(), |d, _| {
            (std::f64::consts::PI * m.mesh().nodes[d + 1]).sin()
        });
        let diff = &u.values - &exact;
        (diff.dot(&(m.inner_product(NormKind::Trial) * &diff))).sqrt()
    }

    #[test]
    fn manufactured_solution_second_order() {
        let errors: Vec<f64> = [16, 32, 64].iter().map(|&n| mms_l2_error(n)).collect();
        // log2 regression slope over successive halvings.
        let rates: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        for r in &rates {
            assert!(*r >= 1.9, "convergence rate {r} below 1.9 (errors {errors:?})");
        }
    }

    #[test]
    fn exact_init_converges_immediately() {
        let m = model(24);
        let mu = ParamVec::new(vec![1.3, 4.0]);
        let (u, _) = hf_solve_steady(&m, &mu, None).unwrap();
        let (_, stats) = hf_solve_steady(&m, &mu, Some(&u)).unwrap();
        assert!(stats.newton_iterations <= 1);
    }

    #[test]
    fn solution_continuous_in_parameter() {
        let m = model(32);
        let base = ParamVec::new(vec![1.0, 5.0]);
        let (u0, _) = hf_solve_steady(&m, &base, None).unwrap();
        let mut prev_gap = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let mu = ParamVec::new(vec![1.0 + eps, 5.0]);
            let (u, _) = hf_solve_steady(&m, &mu, None).unwrap();
            let gap = (&u.values - &u0.values).norm();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-2);
    }

    #[test]
    fn weighted_residual_matches_brute_force() -> Result<()> {
        let m = model(8);
        let mu = ParamVec::new(vec![0.8, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = HfField::new(DVector::from_fn(m.n_dofs(), |_, _| rng.random::<f64>()), 0);
        let mut quad = crate::hyper::QuadRule::full(m.mesh().n_elements(), m.mesh().n_facets());
        for v in quad.elem_weights.iter_mut().chain(quad.facet_weights.iter_mut()) {
            *v = if rng.random::<f64>() < 0.4 {
                0.0
            } else {
                rng.random::<f64>() * 2.0
            };
        }
        quad.rebuild_active_set();
        let fast = hf_residual(&m, &state, &mu, Some(&quad))?;

        // Brute force: evaluate each local residual separately and scale.
        let w_full = m.to_full(&state.values, 0.0);
        let mut slow = DVector::zeros(m.n_dofs());
        for k in 0..m.mesh().n_elements() {
            let local = m.elem_residual(k, &w_full, &mu);
            let (a, b) = m.mesh().elements[k];
            for (node, val) in [(a, local[0]), (b, local[1])] {
                if let Some(d) = m.free_dof(node) {
                    slow[d] += quad.elem_weights[k] * val;
                }
            }
        }
        for j in 0..m.mesh().n_facets() {
            if let Some((node, val)) = m.facet_residual(j, &w_full, &mu) {
                if let Some(d) = m.free_dof(node) {
                    slow[d] += quad.facet_weights[j] * val;
                }
            }
        }
        assert!((fast - slow).norm() < 1e-13);
        Ok(())
    }

    #[test]
    fn all_ones_weights_equal_omitted_and_zeros_vanish() {
        let m = model(10);
        let mu = ParamVec::new(vec![1.0, 2.0]);
        let state = HfField::new(DVector::from_fn(m.n_dofs(), |i, _| (i as f64 * 0.7).sin()), 0);
        let full = crate::hyper::QuadRule::full(m.mesh().n_elements(), m.mesh().n_facets());
        let a = hf_residual(&m, &state, &mu, None).unwrap();
        let b = hf_residual(&m, &state, &mu, Some(&full)).unwrap();
        assert!((a - &b).norm() == 0.0);
        let zero = crate::hyper::QuadRule::zeros(m.mesh().n_elements(), m.mesh().n_facets());
        let c = hf_residual(&m, &state, &mu, Some(&zero)).unwrap();
        assert!(c.norm() == 0.0);
    }

    #[test]
    fn locality_of_element_weights() {
        // Zeroing element k's weight only changes rows whose dofs touch D_k.
        let m = model(12);
        let mu = ParamVec::new(vec![1.0, 6.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state = HfField::new(DVector::from_fn(m.n_dofs(), |_, _| rng.random::<f64>()), 0);
        let base = hf_residual(&m, &state, &mu, None).unwrap();
        let k = 5;
        let mut quad = crate::hyper::QuadRule::full(m.mesh().n_elements(), m.mesh().n_facets());
        quad.elem_weights[k] = 0.0;
        quad.rebuild_active_set();
        let pert = hf_residual(&m, &state, &mu, Some(&quad)).unwrap();
        let (a, b) = m.mesh().elements[k];
        let touched: Vec<usize> = [a, b].iter().filter_map(|&n| m.free_dof(n)).collect();
        for d in 0..m.n_dofs() {
            let delta = (base[d] - pert[d]).abs();
            if touched.contains(&d) {
                continue;
            }
            assert!(delta == 0.0, "row {d} changed by {delta}");
        }
    }

    #[test]
    fn inner_products_are_spd() {
        let m = model(9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [NormKind::Trial, NormKind::Test] {
            let op = m.inner_product(kind);
            assert_eq!(op, &op.transpose());
            for _ in 0..5 {
                let v = DVector::from_fn(m.n_dofs(), |_, _| rng.random::<f64>() - 0.5);
                assert!(v.dot(&(op * &v)) > 0.0);
            }
        }
    }

    #[test]
    fn riesz_round_trip_and_dual_norm_oracle() {
        let m = model(25); // 25 dofs <= 50: dense-inverse oracle territory
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = DVector::from_fn(m.n_dofs(), |_, _| rng.random::<f64>() - 0.5);
        let f = m.inner_product(NormKind::Test) * &v;
        let psi = riesz_solve(&m, &f, NormKind::Test).unwrap();
        assert!((&psi.values - &v).norm() < 1e-10);

        let inv = m
            .inner_product(NormKind::Test)
            .clone()
            .try_inverse()
            .unwrap();
        let dense = f.dot(&(&inv * &f)).sqrt();
        let fast = crate::model::dual_norm(&m, &f, NormKind::Test).unwrap();
        assert!((dense - fast).abs() <= 1e-8 * dense);

        let zero = riesz_solve(&m, &DVector::zeros(m.n_dofs()), NormKind::Trial).unwrap();
        assert!(zero.values.norm() == 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = model(10);
        let mu = ParamVec::new(vec![1.2, 7.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = HfField::new(DVector::from_fn(m.n_dofs(), |_, _| rng.random::<f64>()), 0);
        let jac = assemble_jacobian(&m, &u, &mu).unwrap();
        let r0 = hf_residual(&m, &u, &mu, None).unwrap();
        let eps = 1e-7;
        for j in 0..m.n_dofs() {
            let mut up = u.clone();
            up.values[j] += eps;
            let r1 = hf_residual(&m, &up, &mu, None).unwrap();
            for i in 0..m.n_dofs() {
                let fd = (r1[i] - r0[i]) / eps;
                assert!((jac[(i, j)] - fd).abs() < 1e-5);
            }
        }
    }
}
