//! High-fidelity model abstraction: decomposable residuals (element-wise and
//! facet-wise), Jacobians, inner-product operators with cached factorizations,
//! and the Newton drivers for steady and quasi-static unsteady solves.
//!
//! Fields hold the free degrees of freedom only; Dirichlet nodes are
//! eliminated and never appear in residual vectors, so the reduction and the
//! empirical quadrature operate on free DOFs throughout.

mod creep;
mod steady;

pub use creep::{uniform_time_grid, BodyChannel, CreepBar, EndCondition, TimeFn};
pub use steady::SteadyReactionDiffusion;

use crate::error::CoreError;
use crate::hyper::QuadRule;
use crate::mesh::{prolongate_nodal, Mesh};
use crate::params::{ParamBox, ParamVec};
use crate::Result;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Coefficient vector over the free DOFs of a model, tagged with the mesh
/// level it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct HfField {
    pub values: DVector<f64>,
    pub mesh_level: usize,
}

impl HfField {
    pub fn new(values: DVector<f64>, mesh_level: usize) -> Self {
        Self { values, mesh_level }
    }

    pub fn zeros(n: usize, mesh_level: usize) -> Self {
        Self::new(DVector::zeros(n), mesh_level)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }
}

/// Which of the two SPD inner products to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Norm on the trial space (L2 mass operator).
    Trial,
    /// Norm on the test space (H1-type stiffness + mass operator).
    Test,
}

/// Mesh, DOF layout and inner products common to steady and unsteady models.
pub trait ModelCore: Send + Sync {
    fn mesh(&self) -> &Mesh;
    fn n_dofs(&self) -> usize;
    fn param_box(&self) -> &ParamBox;

    /// Free-DOF index of a mesh node, `None` when eliminated by a Dirichlet
    /// condition.
    fn free_dof(&self, node: usize) -> Option<usize>;

    /// Prescribed value at an eliminated node (time-dependent models use `t`).
    fn dirichlet_value(&self, node: usize, t: f64) -> f64;

    fn inner_product(&self, kind: NormKind) -> &DMatrix<f64>;
    fn riesz_factor(&self, kind: NormKind) -> &Cholesky<f64, Dyn>;

    fn level(&self) -> usize {
        self.mesh().level
    }

    /// Expand a free-DOF vector to a full nodal vector, filling eliminated
    /// nodes with their prescribed values.
    fn to_full(&self, w: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_fn(self.mesh().n_nodes(), |node, _| match self.free_dof(node) {
            Some(d) => w[d],
            None => self.dirichlet_value(node, t),
        })
    }

    /// Restrict a full nodal vector to the free DOFs.
    fn from_full(&self, full: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs());
        for node in 0..self.mesh().n_nodes() {
            if let Some(d) = self.free_dof(node) {
                out[d] = full[node];
            }
        }
        out
    }

    fn check_field(&self, field: &HfField) -> Result<()> {
        if field.mesh_level != self.level() || field.len() != self.n_dofs() {
            return Err(CoreError::dims(format!(
                "field (level {}, {} dofs) does not match model (level {}, {} dofs)",
                field.mesh_level,
                field.len(),
                self.level(),
                self.n_dofs()
            )));
        }
        Ok(())
    }
}

/// Steady model with parametric decomposable residual.
pub trait SteadyModel: ModelCore {
    /// Local element residual tested against the element's two nodal test
    /// functions; `w_full` is the full nodal state.
    fn elem_residual(&self, k: usize, w_full: &DVector<f64>, mu: &ParamVec) -> [f64; 2];

    fn elem_jacobian(&self, k: usize, w_full: &DVector<f64>, mu: &ParamVec) -> [[f64; 2]; 2];

    /// Facet residual as `(node, value)` against the nodal test function at
    /// that facet; `None` when the facet carries no residual (interior facets
    /// of a conforming discretization, or eliminated test functions).
    fn facet_residual(&self, j: usize, w_full: &DVector<f64>, mu: &ParamVec)
        -> Option<(usize, f64)>;
}

/// Quasi-static unsteady model with per-Gauss-point internal variables.
pub trait UnsteadyModel: ModelCore {
    fn n_gauss_per_elem(&self) -> usize {
        2
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.n_dofs())
    }

    fn initial_gamma(&self) -> Vec<[f64; 2]> {
        vec![[0.0; 2]; self.mesh().n_elements()]
    }

    /// Backward-Euler internal-variable update at one Gauss point, solved in
    /// closed form: new gamma from the current strain and the previous gamma.
    fn gamma_update(&self, mu: &ParamVec, dt: f64, strain: f64, gamma_prev: f64) -> f64;

    /// Local element residual of the time-step problem at time `t` with step
    /// `dt`, given the element's previous-step internal variables.
    fn elem_residual_step(
        &self,
        k: usize,
        w_full: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
        gamma_prev: &[f64; 2],
    ) -> [f64; 2];

    fn elem_jacobian_step(
        &self,
        k: usize,
        w_full: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
        gamma_prev: &[f64; 2],
    ) -> [[f64; 2]; 2];

    fn facet_residual_step(
        &self,
        j: usize,
        w_full: &DVector<f64>,
        mu: &ParamVec,
        t: f64,
        dt: f64,
    ) -> Option<(usize, f64)>;

    /// Strain of the discrete state inside element `k` (constant for P1).
    fn elem_strain(&self, k: usize, w_full: &DVector<f64>) -> f64 {
        let (a, b) = self.mesh().elements[k];
        (w_full[b] - w_full[a]) / self.mesh().elem_length(k)
    }

    /// Scalar quantity of interest of a state (end displacement of the bar).
    fn qoi(&self, w: &DVector<f64>, t: f64) -> f64;
}

/// Solution trajectory of an unsteady solve: states and internal-variable
/// history on the model's time grid (`states[0]` is the initial state).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `gammas[k][elem]` holds the internal variables after step k.
    pub gammas: Vec<Vec<[f64; 2]>>,
    pub mesh_level: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k] - self.times[k - 1]
    }
}

/// Newton diagnostics returned alongside solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub newton_iterations: usize,
    pub residual_norm: f64,
}

fn check_weights<M: ModelCore>(model: &M, weights: Option<&QuadRule>) -> Result<()> {
    if let Some(q) = weights {
        if q.elem_weights.len() != model.mesh().n_elements()
            || q.facet_weights.len() != model.mesh().n_facets()
        {
            return Err(CoreError::dims(format!(
                "quadrature sized ({}, {}), mesh has ({}, {})",
                q.elem_weights.len(),
                q.facet_weights.len(),
                model.mesh().n_elements(),
                model.mesh().n_facets()
            )));
        }
    }
    Ok(())
}

/// Assembled residual `Σ_k ρ^e_k r^e_k + Σ_j ρ^f_j r^f_j` against all free
/// test functions. Omitted weights mean the full (all-ones) rule.
pub fn hf_residual<M: SteadyModel>(
    model: &M,
    state: &HfField,
    mu: &ParamVec,
    weights: Option<&QuadRule>,
) -> Result<DVector<f64>> {
    model.check_field(state)?;
    check_weights(model, weights)?;
    let w_full = model.to_full(&state.values, 0.0);
    let mut r = DVector::zeros(model.n_dofs());
    let mesh = model.mesh();
    for k in 0..mesh.n_elements() {
        let rho = weights.map_or(1.0, |q| q.elem_weights[k]);
        if rho == 0.0 {
            continue;
        }
        let local = model.elem_residual(k, &w_full, mu);
        let (a, b) = mesh.elements[k];
        if let Some(d) = model.free_dof(a) {
            r[d] += rho * local[0];
        }
        if let Some(d) = model.free_dof(b) {
            r[d] += rho * local[1];
        }
    }
    for j in 0..mesh.n_facets() {
        let rho = weights.map_or(1.0, |q| q.facet_weights[j]);
        if rho == 0.0 {
            continue;
        }
        if let Some((node, value)) = model.facet_residual(j, &w_full, mu) {
            if let Some(d) = model.free_dof(node) {
                r[d] += rho * value;
            }
        }
    }
    Ok(r)
}

/// Dense algebraic Jacobian of the assembled residual at `state` (facet
/// residuals of the built-in models are state-independent).
pub fn assemble_jacobian<M: SteadyModel>(
    model: &M,
    state: &HfField,
    mu: &ParamVec,
) -> Result<DMatrix<f64>> {
    model.check_field(state)?;
    let w_full = model.to_full(&state.values, 0.0);
    let mut jac = DMatrix::zeros(model.n_dofs(), model.n_dofs());
    let mesh = model.mesh();
    for k in 0..mesh.n_elements() {
        let local = model.elem_jacobian(k, &w_full, mu);
        let (na, nb) = mesh.elements[k];
        let dofs = [model.free_dof(na), model.free_dof(nb)];
        for (i, di) in dofs.iter().enumerate() {
            if let Some(di) = di {
                for (jj, dj) in dofs.iter().enumerate() {
                    if let Some(dj) = dj {
                        jac[(*di, *dj)] += local[i][jj];
                    }
                }
            }
        }
    }
    Ok(jac)
}

/// Riesz representer solve `M ψ = functional` in the chosen inner product;
/// the Cholesky factorization of `M` is computed once per model and reused.
pub fn riesz_solve<M: ModelCore>(
    model: &M,
    functional: &DVector<f64>,
    kind: NormKind,
) -> Result<HfField> {
    if functional.len() != model.n_dofs() {
        return Err(CoreError::dims(format!(
            "functional length {} vs {} dofs",
            functional.len(),
            model.n_dofs()
        )));
    }
    let psi = model.riesz_factor(kind).solve(functional);
    Ok(HfField::new(psi, model.level()))
}

/// Dual norm `sqrt(fᵀ M⁻¹ f)` of a functional in the chosen inner product.
pub fn dual_norm<M: ModelCore>(model: &M, functional: &DVector<f64>, kind: NormKind) -> Result<f64> {
    let psi = riesz_solve(model, functional, kind)?;
    Ok(functional.dot(&psi.values).max(0.0).sqrt())
}

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 10;
const NEWTON_REL_TOL: f64 = 1e-10;
const NEWTON_ABS_TOL: f64 = 1e-12;

fn newton_converged(rn: f64, r0: f64) -> bool {
    rn <= (NEWTON_REL_TOL * r0).max(NEWTON_ABS_TOL)
}

pub(crate) fn damped_newton<R, J>(
    mut u: DVector<f64>,
    residual: R,
    jacobian: J,
    context: &str,
) -> Result<(DVector<f64>, SolveStats)>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut r = residual(&u);
    let r0 = r.norm();
    let mut rn = r0;
    let mut iterations = 0;
    while !newton_converged(rn, r0) {
        if iterations >= NEWTON_MAX_ITER {
            return Err(CoreError::SolverFailure {
                context: context.to_string(),
                residual_norm: rn,
                iterations,
                last_iterate: u.as_slice().to_vec(),
            });
        }
        let jac = jacobian(&u);
        let du = jac.lu().solve(&(-&r)).ok_or_else(|| CoreError::SolverFailure {
            context: format!("{context}: singular Jacobian"),
            residual_norm: rn,
            iterations,
            last_iterate: u.as_slice().to_vec(),
        })?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let candidate = &u + step * &du;
            let rc = residual(&candidate);
            let rcn = rc.norm();
            if rcn < rn {
                u = candidate;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(CoreError::SolverFailure {
                context: format!("{context}: line search stalled"),
                residual_norm: rn,
                iterations,
                last_iterate: u.as_slice().to_vec(),
            });
        }
    }
    Ok((
        u,
        SolveStats {
            newton_iterations: iterations,
            residual_norm: rn,
        },
    ))
}

/// Damped Newton solve of the steady problem. Defaults to the zero field;
/// when that fails, retries once from the linearized-problem solution.
pub fn hf_solve_steady<M: SteadyModel>(
    model: &M,
    mu: &ParamVec,
    init: Option<&HfField>,
) -> Result<(HfField, SolveStats)> {
    if !model.param_box().contains(mu) {
        return Err(CoreError::invalid(format!(
            "parameter {mu} outside the admissible box"
        )));
    }
    if let Some(f) = init {
        model.check_field(f)?;
    }
    let residual = |u: &DVector<f64>| {
        hf_residual(model, &HfField::new(u.clone(), model.level()), mu, None)
            .expect("dimensions validated")
    };
    let jacobian = |u: &DVector<f64>| {
        assemble_jacobian(model, &HfField::new(u.clone(), model.level()), mu)
            .expect("dimensions validated")
    };
    let start = init
        .map(|f| f.values.clone())
        .unwrap_or_else(|| DVector::zeros(model.n_dofs()));
    match damped_newton(start, residual, jacobian, "steady HF solve") {
        Ok((u, stats)) => Ok((HfField::new(u, model.level()), stats)),
        Err(err) if init.is_none() => {
            // Fallback: one full Newton step from zero solves the linearized
            // problem; restart the damped iteration from there.
            let zero = DVector::zeros(model.n_dofs());
            let r0 = residual(&zero);
            let lin = assemble_jacobian(model, &HfField::zeros(model.n_dofs(), model.level()), mu)?
                .lu()
                .solve(&(-r0))
                .ok_or(err)?;
            let (u, stats) = damped_newton(lin, residual, jacobian, "steady HF solve (fallback)")?;
            Ok((HfField::new(u, model.level()), stats))
        }
        Err(err) => Err(err),
    }
}

fn step_residual<M: UnsteadyModel>(
    model: &M,
    w: &DVector<f64>,
    mu: &ParamVec,
    t: f64,
    dt: f64,
    gamma_prev: &[[f64; 2]],
) -> DVector<f64> {
    let w_full = model.to_full(w, t);
    let mut r = DVector::zeros(model.n_dofs());
    let mesh = model.mesh();
    for k in 0..mesh.n_elements() {
        let local = model.elem_residual_step(k, &w_full, mu, t, dt, &gamma_prev[k]);
        let (a, b) = mesh.elements[k];
        if let Some(d) = model.free_dof(a) {
            r[d] += local[0];
        }
        if let Some(d) = model.free_dof(b) {
            r[d] += local[1];
        }
    }
    for j in 0..mesh.n_facets() {
        if let Some((node, value)) = model.facet_residual_step(j, &w_full, mu, t, dt) {
            if let Some(d) = model.free_dof(node) {
                r[d] += value;
            }
        }
    }
    r
}

fn step_jacobian<M: UnsteadyModel>(
    model: &M,
    w: &DVector<f64>,
    mu: &ParamVec,
    t: f64,
    dt: f64,
    gamma_prev: &[[f64; 2]],
) -> DMatrix<f64> {
    let w_full = model.to_full(w, t);
    let mut jac = DMatrix::zeros(model.n_dofs(), model.n_dofs());
    let mesh = model.mesh();
    for k in 0..mesh.n_elements() {
        let local = model.elem_jacobian_step(k, &w_full, mu, t, dt, &gamma_prev[k]);
        let (na, nb) = mesh.elements[k];
        let dofs = [model.free_dof(na), model.free_dof(nb)];
        for (i, di) in dofs.iter().enumerate() {
            if let Some(di) = di {
                for (jj, dj) in dofs.iter().enumerate() {
                    if let Some(dj) = dj {
                        jac[(*di, *dj)] += local[i][jj];
                    }
                }
            }
        }
    }
    jac
}

/// Time-marching solve of the quasi-static problem on a strictly increasing
/// time grid, committing the internal variables after each converged step.
pub fn hf_solve_unsteady<M: UnsteadyModel>(
    model: &M,
    mu: &ParamVec,
    time_grid: &[f64],
) -> Result<Trajectory> {
    if !model.param_box().contains(mu) {
        return Err(CoreError::invalid(format!(
            "parameter {mu} outside the admissible box"
        )));
    }
    if time_grid.len() < 2 || time_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::invalid("time grid must be strictly increasing"));
    }
    let mut states = vec![model.initial_state()];
    let mut gammas = vec![model.initial_gamma()];
    for k in 1..time_grid.len() {
        let (t, dt) = (time_grid[k], time_grid[k] - time_grid[k - 1]);
        let gamma_prev = gammas[k - 1].clone();
        let residual = |w: &DVector<f64>| step_residual(model, w, mu, t, dt, &gamma_prev);
        let jacobian = |w: &DVector<f64>| step_jacobian(model, w, mu, t, dt, &gamma_prev);
        let (u, _stats) = damped_newton(
            states[k - 1].clone(),
            residual,
            jacobian,
            &format!("unsteady HF solve, step {k}"),
        )?;
        let w_full = model.to_full(&u, t);
        let gamma_new: Vec<[f64; 2]> = (0..model.mesh().n_elements())
            .map(|e| {
                let strain = model.elem_strain(e, &w_full);
                [
                    model.gamma_update(mu, dt, strain, gamma_prev[e][0]),
                    model.gamma_update(mu, dt, strain, gamma_prev[e][1]),
                ]
            })
            .collect();
        states.push(u);
        gammas.push(gamma_new);
    }
    Ok(Trajectory {
        times: time_grid.to_vec(),
        states,
        gammas,
        mesh_level: model.level(),
    })
}

/// Nodal prolongation of a free-DOF field between two models of one
/// hierarchy (ancestor to descendant).
pub fn prolongate_field<A: ModelCore, B: ModelCore>(
    field: &HfField,
    from: &A,
    to: &B,
) -> Result<HfField> {
    from.check_field(field)?;
    let full = from.to_full(&field.values, 0.0);
    let fine = prolongate_nodal(&full, from.mesh(), to.mesh())?;
    Ok(HfField::new(to.from_full(&fine), to.level()))
}
