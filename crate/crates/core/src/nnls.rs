//! Lawson-Hanson active-set solver for non-negative least squares
//! `min ‖G ρ − b‖₂ s.t. ρ ≥ 0`, with warm starting of the active set.
//!
//! The solver terminates when the active set saturates, when the relative
//! residual drops below `δ`, or at a KKT point (no positive gradient entry
//! remains outside the active set). Least-squares subproblems are solved
//! with pseudo-inverse semantics, so rank-deficient column subsets take the
//! minimum-norm solution. The number of least-squares solves is reported:
//! it is the cost driver and the quantity the warm start is meant to cut.

use crate::error::CoreError;
use crate::linalg::lstsq_min_norm;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Anti-division-by-zero constant in the inner-loop step length.
const STEP_EPS: f64 = f64::MIN_POSITIVE; // 2^-1022

#[derive(Debug, Clone)]
pub struct NnlsProblem<'a> {
    pub g: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    /// Relative residual tolerance δ > 0.
    pub delta: f64,
    /// Initial active set P₀ (column indices); empty for a cold start.
    pub warm_start: Vec<usize>,
}

impl<'a> NnlsProblem<'a> {
    pub fn new(g: &'a DMatrix<f64>, b: &'a DVector<f64>, delta: f64) -> Self {
        Self {
            g,
            b,
            delta,
            warm_start: Vec::new(),
        }
    }

    pub fn with_warm_start(mut self, p0: Vec<usize>) -> Self {
        self.warm_start = p0;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.g.nrows() != self.b.len() {
            return Err(CoreError::dims(format!(
                "G has {} rows, b has {}",
                self.g.nrows(),
                self.b.len()
            )));
        }
        if !(self.delta > 0.0) {
            return Err(CoreError::invalid("NNLS tolerance delta must be positive"));
        }
        let n = self.g.ncols();
        let mut seen = vec![false; n];
        for &i in &self.warm_start {
            if i >= n {
                return Err(CoreError::invalid(format!(
                    "warm-start index {i} out of range (N = {n})"
                )));
            }
            if seen[i] {
                return Err(CoreError::invalid(format!("duplicate warm-start index {i}")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NnlsResult {
    /// Non-negative solution; entries outside the active set are exactly 0.
    pub rho: DVector<f64>,
    /// Final active set, sorted ascending.
    pub active_set: Vec<usize>,
    /// Number of least-squares solves performed.
    pub ls_solve_count: usize,
    /// `‖G ρ − b‖₂`, recomputed on the returned solution.
    pub residual_norm: f64,
    /// Residual norm at the head of each outer iteration (non-increasing).
    pub residual_history: Vec<f64>,
}

struct Workspace<'a> {
    g: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    in_p: Vec<bool>,
    x: DVector<f64>,
    w: DVector<f64>,
    ls_solves: usize,
}

impl Workspace<'_> {
    fn p_indices(&self) -> Vec<usize> {
        (0..self.in_p.len()).filter(|&i| self.in_p[i]).collect()
    }

    fn p_len(&self) -> usize {
        self.in_p.iter().filter(|&&f| f).count()
    }

    /// Unconstrained least-squares solve on the current active set, followed
    /// by the standard removal loop for variables driven negative.
    fn inner_loop(&mut self) {
        loop {
            self.ls_solves += 1;
            let p = self.p_indices();
            let z_p = if p.is_empty() {
                DVector::zeros(0)
            } else {
                let sub = self.g.select_columns(p.iter());
                lstsq_min_norm(&sub, self.b)
            };
            let mut z = DVector::zeros(self.x.len());
            for (slot, &col) in p.iter().enumerate() {
                z[col] = z_p[slot];
            }
            if p.iter().all(|&i| z[i] >= 0.0) {
                self.x = z;
                self.w = self.g.transpose() * (self.b - self.g * &self.x);
                return;
            }
            // Step length toward z that keeps x feasible; remove the
            // blocking index (ties broken by lowest index).
            let mut alpha = f64::INFINITY;
            let mut blocking = usize::MAX;
            for &i in &p {
                if z[i] < 0.0 {
                    let candidate = self.x[i] / (self.x[i] - z[i] + STEP_EPS);
                    if candidate < alpha {
                        alpha = candidate;
                        blocking = i;
                    }
                }
            }
            self.in_p[blocking] = false;
            for i in 0..self.x.len() {
                self.x[i] -= alpha * (self.x[i] - z[i]);
            }
            self.x[blocking] = 0.0;
            for i in 0..self.x.len() {
                if !self.in_p[i] {
                    self.x[i] = 0.0;
                }
            }
        }
    }
}

/// Active-set solve of the non-negative least-squares problem.
///
/// A non-empty `warm_start` seeds the active set, and one unconstrained
/// solve (with the usual negative-purge loop) runs on it before the
/// selection loop starts.
pub fn nnls_solve(problem: &NnlsProblem) -> Result<NnlsResult> {
    problem.validate()?;
    let (g, b) = (problem.g, problem.b);
    let n = g.ncols();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(NnlsResult {
            rho: DVector::zeros(n),
            active_set: Vec::new(),
            ls_solve_count: 0,
            residual_norm: 0.0,
            residual_history: vec![0.0],
        });
    }

    let mut ws = Workspace {
        g,
        b,
        in_p: vec![false; n],
        x: DVector::zeros(n),
        w: g.transpose() * b,
        ls_solves: 0,
    };
    for &i in &problem.warm_start {
        ws.in_p[i] = true;
    }
    if ws.p_len() > 0 {
        ws.inner_loop();
    }

    let max_outer = 5 * n.max(1);
    let mut history = Vec::new();
    for _ in 0..=max_outer {
        let residual_norm = (g * &ws.x - b).norm();
        history.push(residual_norm);
        if ws.p_len() == n || residual_norm <= problem.delta * b_norm {
            break;
        }
        // Most-positive gradient entry outside P, lowest index on ties.
        let mut best = usize::MAX;
        let mut best_w = f64::NEG_INFINITY;
        for j in 0..n {
            if !ws.in_p[j] && ws.w[j] > best_w {
                best_w = ws.w[j];
                best = j;
            }
        }
        if best_w <= 0.0 {
            // KKT point: no admissible descent direction remains.
            break;
        }
        ws.in_p[best] = true;
        ws.inner_loop();
        if history.len() == max_outer + 1 {
            return Err(CoreError::NnlsOverrun(format!(
                "no convergence after {max_outer} outer iterations \
                 (residual {residual_norm:.3e}, target {:.3e})",
                problem.delta * b_norm
            )));
        }
    }

    let residual_norm = (g * &ws.x - b).norm();
    Ok(NnlsResult {
        active_set: ws.p_indices(),
        rho: ws.x,
        ls_solve_count: ws.ls_solves,
        residual_norm,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, nonneg: bool) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| {
            let v: f64 = rng.random();
            if nonneg {
                v
            } else {
                v - 0.5
            }
        })
    }

    #[test]
    fn identity_recovers_rhs() {
        let g = DMatrix::identity(3, 3);
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-12)).unwrap();
        assert!((r.rho - DVector::from_row_slice(&[1.0, 2.0, 3.0])).norm() < 1e-10);
        assert_eq!(r.active_set, vec![0, 1, 2]);
    }

    #[test]
    fn feasible_all_ones_target_meets_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..10 {
            let (m, n) = (4 + trial % 3, 9 + trial % 4);
            let g = random_matrix(&mut rng, m, n, true);
            let b = &g * DVector::from_element(n, 1.0);
            for delta in [1e-4, 1e-8] {
                let r = nnls_solve(&NnlsProblem::new(&g, &b, delta)).unwrap();
                assert!(r.residual_norm <= delta * b.norm() + 1e-12);
                assert!(r.rho.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn zero_rhs_returns_zero_without_solves() {
        let g = DMatrix::identity(4, 4);
        let b = DVector::zeros(4);
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-8)).unwrap();
        assert_eq!(r.ls_solve_count, 0);
        assert_eq!(r.rho.norm(), 0.0);
    }

    #[test]
    fn loose_delta_returns_zero_support() {
        // delta = 1 is satisfied by rho = 0 at the equality boundary.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_matrix(&mut rng, 5, 8, true);
        let b = &g * DVector::from_element(8, 1.0);
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1.0)).unwrap();
        assert_eq!(r.ls_solve_count, 0);
        assert_eq!(r.rho.norm(), 0.0);
        assert!(r.active_set.is_empty());
    }

    #[test]
    fn support_consistency_and_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 6, 12, false);
        let b = DVector::from_fn(6, |_, _| rng.random::<f64>());
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-10)).unwrap();
        for i in 0..12 {
            if r.rho[i] > 0.0 {
                assert!(r.active_set.contains(&i));
            }
            if !r.active_set.contains(&i) {
                assert_eq!(r.rho[i], 0.0);
            }
        }
    }

    #[test]
    fn kkt_conditions_at_optimal_exit() {
        // Unreachable tolerance forces a run to the KKT point.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let g = random_matrix(&mut rng, 7, 5, false);
            let b = DVector::from_fn(7, |_, _| rng.random::<f64>() - 0.5);
            let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-14)).unwrap();
            let w = g.transpose() * (&b - &g * &r.rho);
            let scale = (g.transpose() * &b).amax().max(1e-30);
            for i in 0..5 {
                if r.active_set.contains(&i) && r.rho[i] > 0.0 {
                    assert!(w[i].abs() <= 1e-6 * scale, "gradient {} at support", w[i]);
                } else if !r.active_set.contains(&i) {
                    assert!(w[i] <= 1e-6 * scale, "gradient {} off support", w[i]);
                }
            }
        }
    }

    #[test]
    fn outer_residual_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = random_matrix(&mut rng, 8, 14, true);
            let b = &g * DVector::from_fn(14, |_, _| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 });
            let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-9)).unwrap();
            for w in r.residual_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let g = random_matrix(&mut rng, 8, 12, true);
            let sparse = DVector::from_fn(12, |_, _| {
                if rng.random::<f64>() < 0.3 {
                    rng.random::<f64>() + 0.1
                } else {
                    0.0
                }
            });
            let b = &g * &sparse;
            let delta = 1e-8;
            let cold = nnls_solve(&NnlsProblem::new(&g, &b, delta)).unwrap();
            let warm = nnls_solve(
                &NnlsProblem::new(&g, &b, delta).with_warm_start(cold.active_set.clone()),
            )
            .unwrap();
            assert!((warm.residual_norm - cold.residual_norm).abs() <= delta * b.norm() + 1e-12);
            assert!(warm.ls_solve_count <= cold.ls_solve_count);
        }
    }

    #[test]
    fn warm_start_purges_bad_seed_indices() {
        let g = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0]);
        let b = DVector::from_row_slice(&[2.0, 3.0]);
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-12).with_warm_start(vec![2])).unwrap();
        assert!(r.rho[2] == 0.0);
        assert!((r.rho[0] - 2.0).abs() < 1e-10);
        assert!((r.rho[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid_problems() {
        let g = DMatrix::identity(3, 3);
        let b = DVector::zeros(2);
        assert!(nnls_solve(&NnlsProblem::new(&g, &b, 1e-8)).is_err());
        let b = DVector::zeros(3);
        assert!(nnls_solve(&NnlsProblem::new(&g, &b, 0.0)).is_err());
        assert!(nnls_solve(&NnlsProblem::new(&g, &b, 1e-8).with_warm_start(vec![5])).is_err());
        assert!(nnls_solve(&NnlsProblem::new(&g, &b, 1e-8).with_warm_start(vec![1, 1])).is_err());
    }

    #[test]
    fn rank_deficient_subsets_use_min_norm_solves() {
        // Duplicated column: the solver must not blow up when both copies
        // enter the active set.
        let mut g = DMatrix::zeros(3, 4);
        g.set_column(0, &DVector::from_row_slice(&[1.0, 1.0, 0.0]));
        g.set_column(1, &DVector::from_row_slice(&[1.0, 1.0, 0.0]));
        g.set_column(2, &DVector::from_row_slice(&[0.0, 1.0, 1.0]));
        g.set_column(3, &DVector::from_row_slice(&[0.0, 0.0, 2.0]));
        let b = DVector::from_row_slice(&[1.0, 2.0, 1.5]);
        let r = nnls_solve(&NnlsProblem::new(&g, &b, 1e-10)).unwrap();
        assert!(r.rho.iter().all(|&v| v >= 0.0));
        assert!(r.residual_norm <= 1e-9);
    }
}
