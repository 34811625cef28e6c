//! Reduced-order models: steady LSPG with empirical test space and
//! quadrature, unsteady Galerkin time marching with internal variables, the
//! residual-based error indicator, and construction of the empirical
//! test-space snapshots.

mod steady;
mod unsteady;

pub use steady::{GnSettings, LspgSolution, SteadyRom};
pub use unsteady::{ReducedTrajectory, UnsteadyRom};

use crate::compress::Rob;
use crate::model::{
    assemble_jacobian, dual_norm, hf_residual, riesz_solve, HfField, NormKind, SteadyModel,
};
use crate::params::ParamVec;
use crate::Result;
use nalgebra::DVector;

/// Step size of the finite-difference surrogate for Jacobian actions.
const FD_EPSILON: f64 = 1e-6;

/// Residual-based a posteriori error indicator: the dual test-norm of the
/// full high-fidelity residual at the reduced solution (one Riesz solve).
pub fn error_indicator<M: SteadyModel>(model: &M, u_hat: &HfField, mu: &ParamVec) -> Result<f64> {
    let r = hf_residual(model, u_hat, mu, None)?;
    dual_norm(model, &r, NormKind::Test)
}

/// Riesz representer of the Jacobian action on one trial mode,
/// `((Ψ, v)) = J[u](ζ, v)`, computed from the assembled Jacobian.
fn jacobian_representer<M: SteadyModel>(
    model: &M,
    jac: &nalgebra::DMatrix<f64>,
    zeta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let functional = jac * zeta;
    Ok(riesz_solve(model, &functional, NormKind::Test)?.values)
}

/// Riesz representer of the finite-difference surrogate
/// `(R(u + ε ζ, v) − R(u, v)) / ε`.
fn fd_representer<M: SteadyModel>(
    model: &M,
    u: &HfField,
    mu: &ParamVec,
    zeta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let base = hf_residual(model, u, mu, None)?;
    let perturbed = HfField::new(&u.values + FD_EPSILON * zeta, u.mesh_level);
    let shifted = hf_residual(model, &perturbed, mu, None)?;
    let functional = (shifted - base) / FD_EPSILON;
    Ok(riesz_solve(model, &functional, NormKind::Test)?.values)
}

/// The 2n−1 new test snapshots of one greedy iteration: Jacobian actions at
/// the newest snapshot on every mode, then finite-difference actions of the
/// newly added mode at every previous snapshot. When the newest snapshot did
/// not add a mode (deflation), only the Jacobian block is produced.
pub fn build_test_snapshots<M: SteadyModel>(
    model: &M,
    rob: &Rob,
    snapshots: &[(ParamVec, HfField)],
    new_mode_idx: Option<usize>,
) -> Result<Vec<DVector<f64>>> {
    let (mu_new, u_new) = snapshots.last().expect("at least one snapshot");
    let jac = assemble_jacobian(model, u_new, mu_new)?;
    let mut out = Vec::with_capacity(2 * rob.n_modes());
    for zeta in &rob.modes {
        out.push(jacobian_representer(model, &jac, zeta)?);
    }
    if let Some(mi) = new_mode_idx {
        let zeta_new = &rob.modes[mi];
        for (mu, u) in &snapshots[..snapshots.len() - 1] {
            out.push(fd_representer(model, u, mu, zeta_new)?);
        }
    }
    Ok(out)
}

/// The full test snapshot set `{Ψ_{k,i}}`: Jacobian actions of every mode at
/// every snapshot (the non-incremental construction, n² Riesz solves).
pub fn build_full_test_set<M: SteadyModel>(
    model: &M,
    rob: &Rob,
    snapshots: &[(ParamVec, HfField)],
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(snapshots.len() * rob.n_modes());
    for (mu, u) in snapshots {
        let jac = assemble_jacobian(model, u, mu)?;
        for zeta in &rob.modes {
            out.push(jacobian_representer(model, &jac, zeta)?);
        }
    }
    Ok(out)
}
