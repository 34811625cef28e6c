//! Report metrics: grid-convergence errors, sampling-quality projection
//! errors against random baselines, unsteady trajectory projection errors,
//! quantity-of-interest errors, and the rank statistics used to check the
//! qualitative claims.

use crate::linalg::{orthogonalize_twice, InnerProduct};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// One CSV-ready metric value: `family,key1,key2,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub family: String,
    pub key1: String,
    pub key2: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(
        family: impl Into<String>,
        key1: impl Into<String>,
        key2: impl Into<String>,
        value: f64,
    ) -> Self {
        Self {
            family: family.into(),
            key1: key1.into(),
            key2: key2.into(),
            value,
        }
    }
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (ties get averaged ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Deterministic random orderings: for each seed, a Fisher-Yates prefix of
/// length `take` over `0..n_items`.
pub fn random_orderings(n_items: usize, take: usize, seeds: &[u64]) -> Vec<Vec<usize>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool: Vec<usize> = (0..n_items).collect();
            let take = take.min(n_items);
            for i in 0..take {
                let j = rng.random_range(i..n_items);
                pool.swap(i, j);
            }
            pool.truncate(take);
            pool
        })
        .collect()
}

/// Maximum relative projection error of the snapshot set onto the spaces
/// spanned by the first n selected snapshots, for n = 1..=order.len().
pub fn projection_error_curve(
    snapshots: &[DVector<f64>],
    order: &[usize],
    ip: &dyn InnerProduct,
) -> Vec<f64> {
    let norms: Vec<f64> = snapshots.iter().map(|s| ip.norm(s)).collect();
    let mut residuals: Vec<DVector<f64>> = snapshots.to_vec();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut curve = Vec::with_capacity(order.len());
    for &sel in order {
        let q = orthogonalize_twice(&basis, &snapshots[sel], ip);
        let qn = ip.norm(&q);
        if qn > 1e-13 * norms[sel].max(1e-300) {
            let q = q / qn;
            for r in residuals.iter_mut() {
                let c = ip.dot(&q, r);
                r.axpy(-c, &q, 1.0);
            }
            basis.push(q);
        }
        let worst = residuals
            .iter()
            .zip(&norms)
            .map(|(r, &n)| if n == 0.0 { 0.0 } else { ip.norm(r) / n })
            .fold(0.0f64, f64::max);
        curve.push(worst);
    }
    curve
}

/// Discrete time-weighted trajectory norm `sqrt(Σ Δt_k ‖v_k‖²)`.
pub fn trajectory_norm(states: &[DVector<f64>], dts: &[f64], ip: &dyn InnerProduct) -> f64 {
    states
        .iter()
        .zip(dts)
        .map(|(v, &dt)| dt * ip.dot(v, v))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Relative time-weighted projection error of a trajectory onto an
/// orthonormal basis.
pub fn trajectory_projection_error(
    states: &[DVector<f64>],
    dts: &[f64],
    basis: &[DVector<f64>],
    ip: &dyn InnerProduct,
) -> f64 {
    let den = trajectory_norm(states, dts, ip);
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = states
        .iter()
        .zip(dts)
        .map(|(u, &dt)| {
            let r = orthogonalize_twice(basis, u, ip);
            dt * ip.dot(&r, &r)
        })
        .sum();
    num.max(0.0).sqrt() / den
}

/// Maximum and time-weighted average relative errors of a scalar quantity
/// of interest against a reference curve.
pub fn qoi_errors(dts: &[f64], q_approx: &[f64], q_ref: &[f64]) -> (f64, f64) {
    assert_eq!(q_approx.len(), q_ref.len());
    assert_eq!(dts.len() + 1, q_ref.len(), "one dt per step, plus t=0 value");
    let max_diff = q_approx
        .iter()
        .zip(q_ref)
        .skip(1)
        .map(|(a, r)| (a - r).abs())
        .fold(0.0f64, f64::max);
    let max_ref = q_ref.iter().skip(1).map(|r| r.abs()).fold(0.0f64, f64::max);
    let e_max = if max_ref == 0.0 { 0.0 } else { max_diff / max_ref };
    let num: f64 = q_approx
        .iter()
        .zip(q_ref)
        .skip(1)
        .zip(dts)
        .map(|((a, r), &dt)| dt * (a - r).abs())
        .sum();
    let den: f64 = q_ref.iter().skip(1).map(|r| r.abs()).sum();
    let e_avg = if den == 0.0 { 0.0 } else { num / den };
    (e_max, e_avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::EuclideanIp;

    #[test]
    fn pearson_and_spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
        // Monotone but nonlinear: perfect rank correlation.
        let d = [1.0, 8.0, 27.0, 64.0];
        assert!((spearman(&a, &d) - 1.0).abs() < 1e-12);
        assert!(pearson(&a, &d) < 1.0);
    }

    #[test]
    fn random_orderings_are_seeded_and_distinct() {
        let a = random_orderings(10, 5, &[1, 2]);
        let b = random_orderings(10, 5, &[1, 2]);
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 5);
        let mut sorted = a[0].clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "orderings must not repeat items");
    }

    #[test]
    fn projection_curve_reaches_zero_at_full_rank() {
        let snaps = vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[1.0, 1.0]),
            DVector::from_row_slice(&[0.0, 2.0]),
        ];
        let curve = projection_error_curve(&snaps, &[0, 2], &EuclideanIp);
        assert_eq!(curve.len(), 2);
        assert!(curve[1] < 1e-12);
        assert!(curve[0] > 0.1);
    }

    #[test]
    fn qoi_errors_zero_for_exact_match() {
        let dts = [0.5, 0.5];
        let q = [0.0, 1.0, 2.0];
        let (e_max, e_avg) = qoi_errors(&dts, &q, &q);
        assert_eq!((e_max, e_avg), (0.0, 0.0));
        let q2 = [0.0, 1.1, 2.0];
        let (e_max, e_avg) = qoi_errors(&dts, &q2, &q);
        assert!((e_max - 0.05).abs() < 1e-12);
        assert!((e_avg - 0.05 / 3.0 * 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_projection_error_is_relative() {
        let states = vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.5]),
        ];
        let dts = [0.1, 0.1];
        let basis = [DVector::from_row_slice(&[1.0, 0.0])];
        let e = trajectory_projection_error(&states, &dts, &basis, &EuclideanIp);
        let expect = (0.1 * 0.25f64 / (0.1 * 1.0 + 0.1 * 1.25)).sqrt();
        assert!((e - expect).abs() < 1e-12);
    }
}
