//! Data compression: POD by the method of snapshots, hierarchical
//! incremental (HAPOD) updates, strong-greedy snapshot selection, and the
//! nested space updates used for trajectories.
//!
//! Conventions shared by every routine here: eigenvalues sorted
//! non-increasing, ties broken by lowest index, and each mode's
//! largest-magnitude entry made positive so serialized bases reproduce.

use crate::error::CoreError;
use crate::linalg::{orthogonalize_twice, projection_residual_sq, InnerProduct};
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue threshold below which directions are treated as
/// numerically rank-deficient and excluded from mode construction.
const RANK_CUTOFF: f64 = 1e-12;

/// Relative deflation threshold for Gram-Schmidt appends.
const DEFLATION_THRESHOLD: f64 = 1e-8;

/// Tag recording which inner product a basis is orthonormal in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpTag {
    Trial,
    Test,
    Euclidean,
}

/// Mode-count selection for [`pod`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodTarget {
    /// Keep exactly this many modes (capped at the numerical rank).
    Count(usize),
    /// Keep the smallest count whose retained energy fraction is at least
    /// `1 − tol²`.
    EnergyTol(f64),
}

/// Orthonormal modes with their POD eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub modes: Vec<DVector<f64>>,
    pub eigenvalues: Vec<f64>,
    pub inner_product_tag: IpTag,
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -&*v;
    }
}

/// POD by the method of snapshots: eigendecomposition of the Gramian
/// `C_{kk'} = (u^k, u^{k'})`, modes rebuilt as snapshot combinations and
/// normalized. All-zero snapshot sets yield an empty basis.
pub fn pod(
    snapshots: &[DVector<f64>],
    target: PodTarget,
    ip: &dyn InnerProduct,
    tag: IpTag,
) -> Result<PodBasis> {
    let (basis, _) = pod_with_energy(snapshots, target, ip, tag)?;
    Ok(basis)
}

/// [`pod`] that also reports the discarded eigenvalue mass
/// `Σ λ_all − Σ λ_kept` (used by the HAPOD bookkeeping).
pub fn pod_with_energy(
    snapshots: &[DVector<f64>],
    target: PodTarget,
    ip: &dyn InnerProduct,
    tag: IpTag,
) -> Result<(PodBasis, f64)> {
    if snapshots.is_empty() {
        return Err(CoreError::invalid("POD needs at least one snapshot"));
    }
    let n = snapshots.len();
    if snapshots.iter().any(|s| s.len() != snapshots[0].len()) {
        return Err(CoreError::dims("POD snapshots must share one space"));
    }
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = ip.dot(&snapshots[i], &snapshots[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Ok((
            PodBasis {
                modes: Vec::new(),
                eigenvalues: Vec::new(),
                inner_product_tag: tag,
            },
            0.0,
        ));
    }
    let rank = lambdas
        .iter()
        .take_while(|&&l| l > RANK_CUTOFF * lambdas[0])
        .count();
    let keep = match target {
        PodTarget::Count(c) => c.min(rank),
        PodTarget::EnergyTol(tol) => {
            let goal = (1.0 - tol * tol) * total;
            let mut acc = 0.0;
            let mut k = rank;
            for (i, &l) in lambdas.iter().enumerate().take(rank) {
                acc += l;
                if acc >= goal {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let mut modes: Vec<DVector<f64>> = Vec::with_capacity(keep);
    let mut kept_lambdas = Vec::with_capacity(keep);
    for (slot, &col) in order.iter().enumerate().take(keep) {
        let coeffs = eig.eigenvectors.column(col);
        let mut mode = DVector::zeros(snapshots[0].len());
        for (k, snap) in snapshots.iter().enumerate() {
            mode.axpy(coeffs[k], snap, 1.0);
        }
        mode /= lambdas[slot].sqrt();
        // Near the rank cutoff the snapshot combination loses orthogonality
        // to roundoff; a Gram-Schmidt cleanup restores the invariant without
        // touching the eigenvalues.
        let mut mode = orthogonalize_twice(&modes, &mode, ip);
        let norm = ip.norm(&mode);
        if norm < 0.5 {
            break; // direction already spanned: true rank exhaustion
        }
        mode /= norm;
        fix_sign(&mut mode);
        modes.push(mode);
        kept_lambdas.push(lambdas[slot]);
    }
    let kept_energy: f64 = kept_lambdas.iter().sum();
    Ok((
        PodBasis {
            modes,
            eigenvalues: kept_lambdas,
            inner_product_tag: tag,
        },
        (total - kept_energy).max(0.0),
    ))
}

/// Reduced-order basis: orthonormal trial modes grown by deflated
/// Gram-Schmidt appends.
#[derive(Debug, Clone, PartialEq)]
pub struct Rob {
    pub modes: Vec<DVector<f64>>,
    pub mesh_level: usize,
}

impl Rob {
    pub fn new(mesh_level: usize) -> Self {
        Self {
            modes: Vec::new(),
            mesh_level,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Twice-iterated Gram-Schmidt append; the candidate is dropped when its
    /// orthogonal residual falls below the deflation threshold. Returns
    /// whether a mode was added.
    pub fn append(&mut self, u_new: &DVector<f64>, ip: &dyn InnerProduct) -> bool {
        let norm_u = ip.norm(u_new);
        if norm_u == 0.0 {
            return false;
        }
        let mut r = orthogonalize_twice(&self.modes, u_new, ip);
        let norm_r = ip.norm(&r);
        if norm_r < DEFLATION_THRESHOLD * norm_u {
            return false;
        }
        r /= norm_r;
        self.modes.push(r);
        true
    }

    /// Coordinates of `u` in the basis (valid because modes are orthonormal).
    pub fn coordinates(&self, u: &DVector<f64>, ip: &dyn InnerProduct) -> DVector<f64> {
        DVector::from_fn(self.n_modes(), |i, _| ip.dot(&self.modes[i], u))
    }

    /// Reconstruct `Z α`.
    pub fn lift(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let dim = self.modes.first().map_or(0, DVector::len);
        let mut out = DVector::zeros(dim);
        for (i, m) in self.modes.iter().enumerate() {
            out.axpy(alpha[i], m, 1.0);
        }
        out
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        let dim = self.modes.first().map_or(0, DVector::len);
        DMatrix::from_fn(dim, self.n_modes(), |i, j| self.modes[j][i])
    }
}

/// POD eigenpairs of the empirical test space, carried across greedy
/// iterations for HAPOD updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpaceState {
    pub modes: Vec<DVector<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl TestSpaceState {
    pub fn empty() -> Self {
        Self {
            modes: Vec::new(),
            eigenvalues: Vec::new(),
        }
    }

    pub fn from_pod(basis: PodBasis) -> Self {
        Self {
            modes: basis.modes,
            eigenvalues: basis.eigenvalues,
        }
    }

    pub fn size(&self) -> usize {
        self.modes.len()
    }
}

/// Hierarchical (incremental) POD update: applies POD to the previous modes
/// scaled by `√λ` pooled with the new snapshots, keeping `m_new` eigenpairs.
/// The resulting spaces are not nested across iterations. Also returns the
/// eigenvalue mass discarded by the truncation.
pub fn hapod_update(
    state: &TestSpaceState,
    new_snapshots: &[DVector<f64>],
    m_new: usize,
    ip: &dyn InnerProduct,
) -> Result<(TestSpaceState, f64)> {
    if m_new < 1 {
        return Err(CoreError::invalid("HAPOD target size must be at least 1"));
    }
    let mut pool: Vec<DVector<f64>> = Vec::with_capacity(state.size() + new_snapshots.len());
    for (psi, &lambda) in state.modes.iter().zip(&state.eigenvalues) {
        pool.push(psi * lambda.max(0.0).sqrt());
    }
    pool.extend(new_snapshots.iter().cloned());
    let (basis, discarded) = pod_with_energy(&pool, PodTarget::Count(m_new), ip, IpTag::Test)?;
    Ok((TestSpaceState::from_pod(basis), discarded))
}

/// Stopping rule for [`strong_greedy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectTarget {
    Count(usize),
    /// Stop once the maximum relative projection error drops to `tol`.
    Tol(f64),
}

/// Strong-greedy selection: repeatedly pick the snapshot with the largest
/// projection error onto the selected span (lowest index on ties), stopping
/// at the requested count, at the error tolerance, or at rank exhaustion.
/// Returns the ordered selected indices.
pub fn strong_greedy(
    snapshots: &[DVector<f64>],
    target: SelectTarget,
    ip: &dyn InnerProduct,
) -> Result<Vec<usize>> {
    if snapshots.is_empty() {
        return Err(CoreError::invalid("strong greedy needs a nonempty snapshot set"));
    }
    let norms: Vec<f64> = snapshots.iter().map(|s| ip.norm(s)).collect();
    let mut residuals: Vec<DVector<f64>> = snapshots.to_vec();
    let mut selected: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let max_picks = match target {
        SelectTarget::Count(n) => n.min(snapshots.len()),
        SelectTarget::Tol(_) => snapshots.len(),
    };
    loop {
        if selected.len() >= max_picks {
            break;
        }
        if let SelectTarget::Tol(tol) = target {
            let worst = (0..snapshots.len())
                .map(|i| {
                    if norms[i] == 0.0 {
                        0.0
                    } else {
                        ip.norm(&residuals[i]) / norms[i]
                    }
                })
                .fold(0.0f64, f64::max);
            if worst <= tol {
                break;
            }
        }
        let mut winner = usize::MAX;
        let mut winner_norm = f64::NEG_INFINITY;
        for i in 0..snapshots.len() {
            if selected.contains(&i) {
                continue;
            }
            let rn = ip.norm(&residuals[i]);
            if rn > winner_norm {
                winner_norm = rn;
                winner = i;
            }
        }
        if winner == usize::MAX || winner_norm < DEFLATION_THRESHOLD * norms[winner].max(1e-300) {
            break; // rank exhausted
        }
        let mut q = orthogonalize_twice(&basis, &snapshots[winner], ip);
        let qn = ip.norm(&q);
        if qn < DEFLATION_THRESHOLD * norms[winner] {
            break;
        }
        q /= qn;
        for r in residuals.iter_mut() {
            let c = ip.dot(&q, r);
            r.axpy(-c, &q, 1.0);
        }
        basis.push(q);
        selected.push(winner);
    }
    Ok(selected)
}

/// Nested space update for trajectories: PODs the orthogonal complements of
/// the states and appends the minimal number of new modes so that the
/// time-weighted relative squared projection error falls below `tol²`.
/// Existing modes are never modified. Returns the number of appended modes.
///
/// `states` are the trajectory states u^(1..K); `dts` the matching step
/// sizes.
pub fn nested_space_update(
    rob: &mut Rob,
    states: &[DVector<f64>],
    dts: &[f64],
    tol: f64,
    ip: &dyn InnerProduct,
) -> Result<usize> {
    if states.len() != dts.len() {
        return Err(CoreError::dims(format!(
            "{} states vs {} time steps",
            states.len(),
            dts.len()
        )));
    }
    if states.is_empty() {
        return Ok(0);
    }
    let denom: f64 = states
        .iter()
        .zip(dts)
        .map(|(u, &dt)| dt * ip.dot(u, u))
        .sum();
    if denom <= 0.0 {
        return Ok(0);
    }
    let residuals: Vec<DVector<f64>> = states
        .iter()
        .map(|u| orthogonalize_twice(&rob.modes, u, ip))
        .collect();
    let mut err: f64 = residuals
        .iter()
        .zip(dts)
        .map(|(r, &dt)| dt * ip.dot(r, r))
        .sum();
    let budget = tol * tol * denom;
    if err <= budget {
        return Ok(0);
    }
    let candidates = pod(&residuals, PodTarget::Count(residuals.len()), ip, IpTag::Trial)?;
    let mut added = 0;
    for mode in candidates.modes {
        // Candidate modes are orthogonal to the span by construction; the
        // deflated append re-orthonormalizes against roundoff.
        if !rob.append(&mode, ip) {
            continue;
        }
        let q = rob.modes.last().expect("just appended");
        err -= residuals
            .iter()
            .zip(dts)
            .map(|(r, &dt)| {
                let c = ip.dot(q, r);
                dt * c * c
            })
            .sum::<f64>();
        added += 1;
        if err <= budget {
            break;
        }
    }
    Ok(added)
}

/// POD-strong-greedy over trajectories sharing one time grid: at each
/// iteration selects the trajectory with the largest summed squared
/// projection error, then grows the space with [`nested_space_update`].
/// Returns the ordered selected trajectory indices.
pub fn pod_strong_greedy(
    trajectories: &[Vec<DVector<f64>>],
    dts: &[f64],
    maxit: usize,
    tol: f64,
    ip: &dyn InnerProduct,
) -> Result<Vec<usize>> {
    if trajectories.is_empty() {
        return Err(CoreError::invalid("POD-strong-greedy needs trajectories"));
    }
    if trajectories.iter().any(|t| t.len() != dts.len()) {
        return Err(CoreError::dims("trajectories must share the common time grid"));
    }
    let level = 0;
    let mut space = Rob::new(level);
    let mut selected = Vec::new();
    for _ in 0..maxit {
        if selected.len() == trajectories.len() {
            break;
        }
        let mut winner = usize::MAX;
        let mut winner_score = f64::NEG_INFINITY;
        for (i, traj) in trajectories.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let score: f64 = traj
                .iter()
                .map(|u| projection_residual_sq(&space.modes, u, ip))
                .sum();
            if score > winner_score {
                winner_score = score;
                winner = i;
            }
        }
        nested_space_update(&mut space, &trajectories[winner], dts, tol, ip)?;
        selected.push(winner);
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{principal_angle_sines, EuclideanIp};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn single_snapshot_norm_two() {
        let u = DVector::from_row_slice(&[2.0, 0.0, 0.0]);
        let basis = pod(&[u.clone()], PodTarget::Count(1), &EuclideanIp, IpTag::Euclidean).unwrap();
        assert_eq!(basis.n_modes(), 1);
        assert!((basis.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!((&basis.modes[0] - &u / 2.0).norm() < 1e-12);
    }

    #[test]
    fn orthonormal_snapshots_unit_eigenvalues() {
        let a = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let b = DVector::from_row_slice(&[0.0, 1.0, 0.0]);
        let basis = pod(&[a, b], PodTarget::Count(2), &EuclideanIp, IpTag::Euclidean).unwrap();
        assert_eq!(basis.n_modes(), 2);
        assert!((basis.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((basis.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_match_dense_svd_oracle() {
        let mut r = rng(7);
        let snaps: Vec<DVector<f64>> = (0..5).map(|_| random_vec(&mut r, 12)).collect();
        let basis = pod(&snaps, PodTarget::Count(5), &EuclideanIp, IpTag::Euclidean).unwrap();
        // Oracle: singular values of the snapshot matrix, squared.
        let mat = DMatrix::from_fn(12, 5, |i, j| snaps[j][i]);
        let mut sv: Vec<f64> = mat.svd(false, false).singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (l, s) in basis.eigenvalues.iter().zip(&sv) {
            assert!((l - s * s).abs() <= 1e-8 * s * s.max(1.0));
        }
    }

    #[test]
    fn modes_orthonormal_and_energy_identity() {
        let mut r = rng(8);
        let snaps: Vec<DVector<f64>> = (0..6).map(|_| random_vec(&mut r, 9)).collect();
        let basis = pod(&snaps, PodTarget::Count(6), &EuclideanIp, IpTag::Euclidean).unwrap();
        for i in 0..basis.n_modes() {
            for j in 0..=i {
                let d = basis.modes[i].dot(&basis.modes[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
        let total: f64 = snaps.iter().map(|u| u.dot(u)).sum();
        let spectrum: f64 = basis.eigenvalues.iter().sum();
        assert!((total - spectrum).abs() <= 1e-8 * total);
    }

    #[test]
    fn energy_tolerance_picks_smallest_count() {
        let a = DVector::from_row_slice(&[10.0, 0.0]);
        let b = DVector::from_row_slice(&[0.0, 1e-3]);
        let basis = pod(&[a, b], PodTarget::EnergyTol(1e-2), &EuclideanIp, IpTag::Euclidean).unwrap();
        assert_eq!(basis.n_modes(), 1);
        let full = pod(
            &[
                DVector::from_row_slice(&[10.0, 0.0]),
                DVector::from_row_slice(&[0.0, 1e-3]),
            ],
            PodTarget::EnergyTol(1e-8),
            &EuclideanIp,
            IpTag::Euclidean,
        )
        .unwrap();
        assert_eq!(full.n_modes(), 2);
    }

    #[test]
    fn all_zero_snapshots_give_empty_basis() {
        let z = DVector::zeros(4);
        let basis = pod(&[z.clone(), z], PodTarget::Count(2), &EuclideanIp, IpTag::Euclidean).unwrap();
        assert_eq!(basis.n_modes(), 0);
        assert!(pod(&[], PodTarget::Count(1), &EuclideanIp, IpTag::Euclidean).is_err());
    }

    #[test]
    fn pod_beats_random_subspaces() {
        let mut r = rng(9);
        let snaps: Vec<DVector<f64>> = (0..6).map(|_| random_vec(&mut r, 12)).collect();
        let n = 2;
        let basis = pod(&snaps, PodTarget::Count(n), &EuclideanIp, IpTag::Euclidean).unwrap();
        let pod_err: f64 = snaps
            .iter()
            .map(|u| projection_residual_sq(&basis.modes, u, &EuclideanIp))
            .sum();
        for _ in 0..200 {
            // Random n-dim subspace of the snapshot span.
            let mut cols: Vec<DVector<f64>> = Vec::new();
            for _ in 0..n {
                let mut v = DVector::zeros(12);
                for s in &snaps {
                    v.axpy(r.random::<f64>() - 0.5, s, 1.0);
                }
                let res = orthogonalize_twice(&cols, &v, &EuclideanIp);
                let rn = res.norm();
                if rn > 1e-12 {
                    cols.push(res / rn);
                }
            }
            let rand_err: f64 = snaps
                .iter()
                .map(|u| projection_residual_sq(&cols, u, &EuclideanIp))
                .sum();
            assert!(pod_err <= rand_err + 1e-10);
        }
    }

    #[test]
    fn hapod_single_batch_is_pod() {
        let mut r = rng(10);
        let snaps: Vec<DVector<f64>> = (0..4).map(|_| random_vec(&mut r, 8)).collect();
        let (state, _) = hapod_update(&TestSpaceState::empty(), &snaps, 4, &EuclideanIp).unwrap();
        let direct = pod(&snaps, PodTarget::Count(4), &EuclideanIp, IpTag::Euclidean).unwrap();
        for (a, b) in state.modes.iter().zip(&direct.modes) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn hapod_full_rank_matches_pooled_pod() {
        let mut r = rng(11);
        let batch1: Vec<DVector<f64>> = (0..3).map(|_| random_vec(&mut r, 10)).collect();
        let batch2: Vec<DVector<f64>> = (0..3).map(|_| random_vec(&mut r, 10)).collect();
        let (state1, d1) = hapod_update(&TestSpaceState::empty(), &batch1, 3, &EuclideanIp).unwrap();
        assert!(d1 < 1e-12);
        let (state2, d2) = hapod_update(&state1, &batch2, 6, &EuclideanIp).unwrap();
        assert!(d2 < 1e-10);
        let pooled: Vec<DVector<f64>> = batch1.iter().chain(&batch2).cloned().collect();
        let oracle = pod(&pooled, PodTarget::Count(6), &EuclideanIp, IpTag::Euclidean).unwrap();
        let sines = principal_angle_sines(&oracle.modes, &state2.modes, &EuclideanIp);
        for s in sines {
            assert!(s <= 1e-8, "principal angle sine {s}");
        }
    }

    #[test]
    fn hapod_with_zero_snapshots_keeps_state() {
        let mut r = rng(12);
        let snaps: Vec<DVector<f64>> = (0..3).map(|_| random_vec(&mut r, 6)).collect();
        let (state, _) = hapod_update(&TestSpaceState::empty(), &snaps, 3, &EuclideanIp).unwrap();
        let zeros = vec![DVector::zeros(6); 2];
        let (updated, _) = hapod_update(&state, &zeros, 2, &EuclideanIp).unwrap();
        for (a, b) in updated.modes.iter().zip(&state.modes) {
            let same = (a - b).norm() < 1e-9 || (a + b).norm() < 1e-9;
            assert!(same);
        }
        for (la, lb) in updated.eigenvalues.iter().zip(&state.eigenvalues) {
            assert!((la - lb).abs() <= 1e-9 * lb.max(1.0));
        }
    }

    #[test]
    fn strong_greedy_orders_orthogonal_by_norm() {
        let a = DVector::from_row_slice(&[3.0, 0.0, 0.0]);
        let b = DVector::from_row_slice(&[0.0, 2.0, 0.0]);
        let c = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let order = strong_greedy(
            &[c.clone(), a.clone(), b.clone()],
            SelectTarget::Count(3),
            &EuclideanIp,
        )
        .unwrap();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn strong_greedy_skips_duplicates_and_exhausts_rank() {
        let a = DVector::from_row_slice(&[1.0, 0.0]);
        let b = DVector::from_row_slice(&[0.0, 1.0]);
        let snaps = vec![a.clone(), a, b.clone(), b];
        let order = strong_greedy(&snaps, SelectTarget::Count(4), &EuclideanIp).unwrap();
        assert_eq!(order.len(), 2); // rank exhaustion stops selection
        let mut dedup = order.clone();
        dedup.dedup();
        assert_eq!(order, dedup);
        // After rank steps the relative projection error is zero.
        let order_tol = strong_greedy(&snaps, SelectTarget::Tol(1e-12), &EuclideanIp).unwrap();
        assert_eq!(order_tol.len(), 2);
    }

    #[test]
    fn strong_greedy_matches_brute_force() {
        let mut r = rng(13);
        let snaps: Vec<DVector<f64>> = (0..8).map(|_| random_vec(&mut r, 10)).collect();
        let order = strong_greedy(&snaps, SelectTarget::Count(4), &EuclideanIp).unwrap();
        // Brute force: recompute all projection errors at each step.
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut chosen: Vec<usize> = Vec::new();
        for step in 0..4 {
            let mut best = usize::MAX;
            let mut best_err = f64::NEG_INFINITY;
            for i in 0..snaps.len() {
                if chosen.contains(&i) {
                    continue;
                }
                let e = projection_residual_sq(&basis, &snaps[i], &EuclideanIp);
                if e > best_err {
                    best_err = e;
                    best = i;
                }
            }
            assert_eq!(order[step], best, "winner mismatch at step {step}");
            chosen.push(best);
            let res = orthogonalize_twice(&basis, &snaps[best], &EuclideanIp);
            let rn = res.norm();
            basis.push(res / rn);
        }
    }

    #[test]
    fn strong_greedy_error_monotone() {
        let mut r = rng(14);
        let snaps: Vec<DVector<f64>> = (0..7).map(|_| random_vec(&mut r, 9)).collect();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let order = strong_greedy(&snaps, SelectTarget::Count(7), &EuclideanIp).unwrap();
        let mut prev = f64::INFINITY;
        for &i in &order {
            let worst = snaps
                .iter()
                .map(|u| {
                    let n = u.norm();
                    (projection_residual_sq(&basis, u, &EuclideanIp).sqrt() / n).min(1.0)
                })
                .fold(0.0f64, f64::max);
            assert!(worst <= prev + 1e-12);
            prev = worst;
            let res = orthogonalize_twice(&basis, &snaps[i], &EuclideanIp);
            basis.push(&res / res.norm());
        }
    }

    #[test]
    fn append_deduplicates_and_normalizes() {
        let mut rob = Rob::new(0);
        let u = DVector::from_row_slice(&[2.0, 0.0, 0.0]);
        assert!(rob.append(&u, &EuclideanIp));
        assert!(!rob.append(&u, &EuclideanIp));
        let v = DVector::from_row_slice(&[0.0, 3.0, 0.0]);
        assert!(rob.append(&v, &EuclideanIp));
        assert!((&rob.modes[1] - DVector::from_row_slice(&[0.0, 1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn append_keeps_gram_identity() {
        let mut r = rng(15);
        let mut rob = Rob::new(0);
        for _ in 0..6 {
            rob.append(&random_vec(&mut r, 10), &EuclideanIp);
        }
        for i in 0..rob.n_modes() {
            for j in 0..=i {
                let d = rob.modes[i].dot(&rob.modes[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nested_update_no_modes_for_contained_trajectory() {
        let mut rob = Rob::new(0);
        rob.append(&DVector::from_row_slice(&[1.0, 0.0]), &EuclideanIp);
        let states = vec![
            DVector::from_row_slice(&[0.5, 0.0]),
            DVector::from_row_slice(&[2.0, 0.0]),
        ];
        let added = nested_space_update(&mut rob, &states, &[0.1, 0.1], 1e-6, &EuclideanIp).unwrap();
        assert_eq!(added, 0);
        assert_eq!(rob.n_modes(), 1);
    }

    #[test]
    fn nested_update_constant_trajectory_adds_one() {
        let mut rob = Rob::new(0);
        let u = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let states = vec![u.clone(), u.clone(), u];
        let added = nested_space_update(&mut rob, &states, &[0.1; 3], 0.5, &EuclideanIp).unwrap();
        assert_eq!(added, 1);
    }

    #[test]
    fn nested_update_is_minimal() {
        let mut r = rng(16);
        let states: Vec<DVector<f64>> = (0..10).map(|_| random_vec(&mut r, 8)).collect();
        let dts = vec![0.05; 10];
        let tol = 1e-5;
        let mut rob = Rob::new(0);
        rob.append(&random_vec(&mut r, 8), &EuclideanIp);
        let before = rob.modes.clone();
        let added = nested_space_update(&mut rob, &states, &dts, tol, &EuclideanIp).unwrap();
        // Old modes retained unchanged (nestedness).
        for (a, b) in before.iter().zip(&rob.modes) {
            assert_eq!(a, b);
        }
        let criterion = |basis: &[DVector<f64>]| -> f64 {
            let num: f64 = states
                .iter()
                .zip(&dts)
                .map(|(u, &dt)| dt * projection_residual_sq(basis, u, &EuclideanIp))
                .sum();
            let den: f64 = states.iter().zip(&dts).map(|(u, &dt)| dt * u.dot(u)).sum();
            num / den
        };
        assert!(criterion(&rob.modes) <= tol * tol);
        if added > 0 {
            let one_fewer = &rob.modes[..rob.n_modes() - 1];
            assert!(criterion(one_fewer) > tol * tol, "update was not minimal");
        }
    }

    #[test]
    fn pod_strong_greedy_prefers_nonzero_and_breaks_ties_by_index() {
        let zero = vec![DVector::zeros(3); 2];
        let live = vec![
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.5, 0.0]),
        ];
        let order =
            pod_strong_greedy(&[zero, live.clone()], &[0.1, 0.1], 2, 1e-8, &EuclideanIp).unwrap();
        assert_eq!(order[0], 1);

        let twins = vec![live.clone(), live.clone(), live];
        let order = pod_strong_greedy(&twins, &[0.1, 0.1], 3, 1e-8, &EuclideanIp).unwrap();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn pod_strong_greedy_matches_brute_force_scores() {
        let mut r = rng(17);
        let trajs: Vec<Vec<DVector<f64>>> = (0..6)
            .map(|_| (0..5).map(|_| random_vec(&mut r, 7)).collect())
            .collect();
        let dts = vec![0.2; 5];
        let order = pod_strong_greedy(&trajs, &dts, 3, 1e-10, &EuclideanIp).unwrap();
        // Brute force replay with an independent space accumulation.
        let mut space = Rob::new(0);
        let mut chosen: Vec<usize> = Vec::new();
        for step in 0..3 {
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for (i, t) in trajs.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                let score: f64 = t
                    .iter()
                    .map(|u| projection_residual_sq(&space.modes, u, &EuclideanIp))
                    .sum();
                if score > best_score {
                    best_score = score;
                    best = i;
                }
            }
            assert_eq!(order[step], best, "winner mismatch at step {step}");
            chosen.push(best);
            nested_space_update(&mut space, &trajs[best], &dts, 1e-10, &EuclideanIp).unwrap();
        }
    }

    #[test]
    fn pod_strong_greedy_stops_when_all_selected() {
        let t = vec![vec![DVector::from_row_slice(&[1.0, 0.0]); 2]; 2];
        let order = pod_strong_greedy(&t, &[0.1, 0.1], 10, 1e-8, &EuclideanIp).unwrap();
        assert_eq!(order.len(), 2);
    }
}
