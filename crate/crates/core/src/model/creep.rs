//! Quasi-static creep bar with an internal variable per Gauss point:
//!
//! `σ = E(μ)(u' − γ)`, `γ̇ = (u' − γ)/τ(μ)`, `-σ' = f(x, t)` on (0, 1),
//! `u(0) = 0`. Parameters are the modulus scale `μ₁` and the relaxation time
//! `μ₂ = τ`. The backward-Euler update of `γ` is solved in closed form per
//! quadrature point, so the temporal evolution is driven entirely by the
//! constitutive law. The bar is loaded either by an end traction (boundary
//! facet residual) or by a prescribed end displacement.

use super::{ModelCore, NormKind, UnsteadyModel};
use crate::mesh::Mesh;
use crate::params::{ParamBox, ParamVec};
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Deterministic scalar load history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeFn {
    Constant(f64),
    /// Linear ramp from 0 to `scale` over `[0, t_ramp]`, constant after.
    Ramp { scale: f64, t_ramp: f64 },
}

impl TimeFn {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Constant(c) => c,
            TimeFn::Ramp { scale, t_ramp } => scale * (t / t_ramp).clamp(0.0, 1.0),
        }
    }
}

/// Boundary condition at the loaded end x = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Prescribed traction entering as a boundary-facet residual.
    Traction(TimeFn),
    /// Prescribed end displacement (DOF eliminated).
    Displacement(TimeFn),
}

/// One body-force channel `shape(x) * history(t)`.
#[derive(Clone, Copy)]
pub struct BodyChannel {
    pub shape: fn(f64) -> f64,
    pub history: TimeFn,
}

pub struct CreepBar {
    mesh: Mesh,
    param_box: ParamBox,
    base_modulus: f64,
    end: EndCondition,
    channels: Vec<BodyChannel>,
    /// Per element, per Gauss point, per channel: cached shape values.
    shape_gauss: Vec<[Vec<f64>; 2]>,
    mass: DMatrix<f64>,
    test_op: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    test_chol: Cholesky<f64, Dyn>,
}

fn sine_shape(x: f64) -> f64 {
    6.0 * (std::f64::consts::PI * x).sin()
}

fn linear_shape(x: f64) -> f64 {
    4.0 * x
}

impl CreepBar {
    /// Default configuration: ramped end traction plus two body-force
    /// channels, `μ₁ ∈ [0.5, 2]` (log-spaced training grids), `τ ∈ [0.2, 5]`.
    pub fn new(mesh: Mesh) -> Result<Self> {
        let channels = vec![
            BodyChannel {
                shape: sine_shape,
                history: TimeFn::Constant(1.0),
            },
            BodyChannel {
                shape: linear_shape,
                history: TimeFn::Ramp {
                    scale: 1.0,
                    t_ramp: 0.8,
                },
            },
        ];
        let bx = ParamBox::new(vec![0.5, 0.2], vec![2.0, 5.0])?;
        Self::custom(
            mesh,
            EndCondition::Traction(TimeFn::Ramp {
                scale: 0.8,
                t_ramp: 0.5,
            }),
            channels,
            bx,
        )
    }

    /// Displacement-controlled bar with no body force: the strain is uniform
    /// and constant, so `γ(t) = ε (1 − e^{−t/τ})` holds exactly.
    pub fn displacement_controlled(mesh: Mesh, end_displacement: f64) -> Result<Self> {
        let bx = ParamBox::new(vec![0.5, 0.2], vec![2.0, 5.0])?;
        Self::custom(
            mesh,
            EndCondition::Displacement(TimeFn::Constant(end_displacement)),
            Vec::new(),
            bx,
        )
    }

    pub fn custom(
        mesh: Mesh,
        end: EndCondition,
        channels: Vec<BodyChannel>,
        param_box: ParamBox,
    ) -> Result<Self> {
        let shape_gauss = (0..mesh.n_elements())
            .map(|k| {
                let g = mesh.gauss_points(k);
                [
                    channels.iter().map(|c| (c.shape)(g[0].0)).collect(),
                    channels.iter().map(|c| (c.shape)(g[1].0)).collect(),
                ]
            })
            .collect();
        let last_fixed = matches!(end, EndCondition::Displacement(_));
        let n_nodes = mesh.n_nodes();
        let n_dofs = if last_fixed { n_nodes - 2 } else { n_nodes - 1 };
        let free = |node: usize| -> Option<usize> {
            if node == 0 || (last_fixed && node == n_nodes - 1) {
                None
            } else {
                Some(node - 1)
            }
        };
        let (mass, test_op) = super::steady::assemble_operators(&mesh, n_dofs, free);
        let mass_chol = Cholesky::new(mass.clone())
            .ok_or_else(|| crate::CoreError::Config("trial inner product not SPD".into()))?;
        let test_chol = Cholesky::new(test_op.clone())
            .ok_or_else(|| crate::CoreError::Config("test inner product not SPD".into()))?;
        Ok(Self {
            mesh,
            param_box,
            base_modulus: 10.0,
            end,
            channels,
            shape_gauss,
            mass,
            test_op,
            mass_chol,
            test_chol,
        })
    }

    fn modulus(&self, mu: &ParamVec) -> f64 {
        self.base_modulus * mu.components[0]
    }

    fn tau(&self, mu: &ParamVec) -> f64 {
        mu.components[1]
    }

    fn body_force(&self, k: usize, gauss_idx: usize, t: f64) -> f64 {
        self.channels
            .iter()
            .enumerate()
            .map(|(c, ch)| self.shape_gauss[k][gauss_idx][c] * ch.history.value(t))
            .sum()
    }
}

impl ModelCore for CreepBar {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn n_dofs(&self) -> usize {
        match self.end {
            EndCondition::Displacement(_) => self.mesh.n_nodes() - 2,
            EndCondition::Traction(_) => self.mesh.n_nodes() - 1,
        }
    }

    fn param_box(&self) -> &ParamBox {
        &self.param_box
    }

    fn free_dof(&self, node: usize) -> Option<usize> {
        if node == 0 {
            return None;
        }
        if matches!(self.end, EndCondition::Displacement(_)) && node == self.mesh.n_nodes() - 1 {
            return None;
        }
        Some(node - 1)
    }

    fn dirichlet_value(&self, node: usize, t: f64) -> f64 {
        if node == 0 {
            0.0
        } else if let EndCondition::Displacement(d) = self.end {
            d.value(t)
        } else {
            0.0
        }
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

impl UnsteadyModel for CreepBar {
    fn gamma_update(&self, mu: &ParamVec, dt: f64, strain: f64, gamma_prev: f64) -> f64 {
        let ratio = dt / self.tau(mu);
        (gamma_prev + ratio * strain) / (1.0 + ratio)
    }

    fn elem_residual_step(
        &self,
        k: usize,
        w_full: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
        gamma_prev: &[f64; 2],
    ) -> [f64; 2] {
        let modulus = self.modulus(mu);
        let (na, nb) = self.mesh.elements[k];
        let (xa, xb) = (self.mesh.nodes[na], self.mesh.nodes[nb]);
        let h = xb - xa;
        let strain = (w_full[nb] - w_full[na]) / h;
        let dsh = [-1.0 / h, 1.0 / h];
        let mut r = [0.0; 2];
        for (g, (x, wt)) in self.mesh.gauss_points(k).into_iter().enumerate() {
            let gamma = self.gamma_update(mu, dt, strain, gamma_prev[g]);
            let sigma = modulus * (strain - gamma);
            let f = self.body_force(k, g, t);
            let sh = [(xb - x) / h, (x - xa) / h];
            for i in 0..2 {
                r[i] += wt * (sigma * dsh[i] - f * sh[i]);
            }
        }
        r
    }

    fn elem_jacobian_step(
        &self,
        k: usize,
        _w_full: &DVector<f64>,
        mu: &ParamVec,
        _t: f64,
        dt: f64,
        _gamma_prev: &[f64; 2],
    ) -> [[f64; 2]; 2] {
        // d sigma / d strain = E / (1 + dt/tau): the consistent tangent of
        // the closed-form gamma update.
        let tangent = self.modulus(mu) / (1.0 + dt / self.tau(mu));
        let h = self.mesh.elem_length(k);
        let dsh = [-1.0 / h, 1.0 / h];
        let mut jac = [[0.0; 2]; 2];
        for (_, wt) in self.mesh.gauss_points(k) {
            for i in 0..2 {
                for j in 0..2 {
                    jac[i][j] += wt * tangent * dsh[j] * dsh[i];
                }
            }
        }
        jac
    }

    fn facet_residual_step(
        &self,
        j: usize,
        _w_full: &DVector<f64>,
        _mu: &ParamVec,
        t: f64,
        _dt: f64,
    ) -> Option<(usize, f64)> {
        match self.end {
            EndCondition::Traction(g) if j == self.mesh.n_facets() - 1 => {
                Some((self.mesh.n_nodes() - 1, -g.value(t)))
            }
            _ => None,
        }
    }

    fn qoi(&self, w: &DVector<f64>, t: f64) -> f64 {
        let end_node = self.mesh.n_nodes() - 1;
        match self.free_dof(end_node) {
            Some(d) => w[d],
            None => self.dirichlet_value(end_node, t),
        }
    }
}

/// Uniform grid `t_k = k T / K`, including t = 0.
pub fn uniform_time_grid(t_final: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|k| t_final * k as f64 / n_steps as f64)
        .collect()
}
