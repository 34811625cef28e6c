//! Deterministic serialization: a small binary archive format for numerical
//! payloads (fields, bases, quadrature rules, traces, ROM bundles) and the
//! CSV writers for traces and metrics.
//!
//! Archive layout, all little-endian:
//!
//! ```text
//! magic "MORFORGE" (8 bytes) | version u32 | kind u32 | ndims u32
//! | dims u64 × ndims | count u64 | payload f64 × count
//! ```
//!
//! Files are written atomically (temp file + rename). Loading revalidates
//! payload invariants: corrupted or truncated files produce errors, never
//! partially constructed objects.

use crate::compress::{Rob, TestSpaceState};
use crate::driver::metrics::MetricRow;
use crate::driver::{GreedyTrace, GreedyVariant, IterationRecord, UnsteadyTrace};
use crate::error::CoreError;
use crate::hyper::QuadRule;
use crate::mesh::Mesh;
use crate::model::HfField;
use crate::params::ParamVec;
use crate::Result;
use nalgebra::DVector;
use std::io::Write;
use std::path::Path;

pub const MAGIC: [u8; 8] = *b"MORFORGE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Mesh = 0,
    Field = 1,
    Rob = 2,
    TestSpace = 3,
    QuadRule = 4,
    Trace = 5,
    RomBundle = 6,
}

impl PayloadKind {
    fn from_u32(v: u32) -> Result<Self> {
        Ok(match v {
            0 => PayloadKind::Mesh,
            1 => PayloadKind::Field,
            2 => PayloadKind::Rob,
            3 => PayloadKind::TestSpace,
            4 => PayloadKind::QuadRule,
            5 => PayloadKind::Trace,
            6 => PayloadKind::RomBundle,
            other => return Err(CoreError::Format(format!("unknown payload kind {other}"))),
        })
    }
}

/// Everything a trained ROM needs besides the model itself (which is
/// rebuilt from the run configuration, recorded here by hash).
#[derive(Debug, Clone, PartialEq)]
pub struct RomBundle {
    pub steady: bool,
    pub mesh_level: usize,
    pub rob: Rob,
    /// Empirical test space (empty for the Galerkin/unsteady bundle).
    pub test: TestSpaceState,
    pub quad: QuadRule,
    /// Time grid (empty for the steady bundle).
    pub times: Vec<f64>,
    pub config_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Mesh(Mesh),
    Field(HfField),
    Rob(Rob),
    TestSpace(TestSpaceState),
    Quad(QuadRule),
    Trace(GreedyTrace),
    Bundle(RomBundle),
}

fn variant_id(v: GreedyVariant) -> u64 {
    match v {
        GreedyVariant::Vanilla => 0,
        GreedyVariant::Incremental => 1,
        GreedyVariant::MultiFidelity => 2,
    }
}

fn variant_from_id(id: u64) -> Result<GreedyVariant> {
    Ok(match id {
        0 => GreedyVariant::Vanilla,
        1 => GreedyVariant::Incremental,
        2 => GreedyVariant::MultiFidelity,
        other => return Err(CoreError::Format(format!("unknown variant id {other}"))),
    })
}

/// Non-mu columns of a binary trace record.
const TRACE_FIXED_COLS: usize = 15;

fn encode(payload: &Payload) -> (PayloadKind, Vec<u64>, Vec<f64>) {
    match payload {
        Payload::Mesh(mesh) => (
            PayloadKind::Mesh,
            vec![mesh.n_nodes() as u64, mesh.level as u64],
            mesh.nodes.clone(),
        ),
        Payload::Field(field) => (
            PayloadKind::Field,
            vec![field.len() as u64, field.mesh_level as u64],
            field.values.as_slice().to_vec(),
        ),
        Payload::Rob(rob) => {
            let n_dofs = rob.modes.first().map_or(0, DVector::len);
            let mut data = Vec::with_capacity(n_dofs * rob.n_modes());
            for m in &rob.modes {
                data.extend_from_slice(m.as_slice());
            }
            (
                PayloadKind::Rob,
                vec![n_dofs as u64, rob.n_modes() as u64, rob.mesh_level as u64],
                data,
            )
        }
        Payload::TestSpace(ts) => {
            let n_dofs = ts.modes.first().map_or(0, DVector::len);
            let mut data = Vec::with_capacity(n_dofs * ts.size() + ts.size());
            for m in &ts.modes {
                data.extend_from_slice(m.as_slice());
            }
            data.extend_from_slice(&ts.eigenvalues);
            (
                PayloadKind::TestSpace,
                vec![n_dofs as u64, ts.size() as u64],
                data,
            )
        }
        Payload::Quad(q) => {
            let mut data = q.elem_weights.as_slice().to_vec();
            data.extend_from_slice(q.facet_weights.as_slice());
            (
                PayloadKind::QuadRule,
                vec![q.elem_weights.len() as u64, q.facet_weights.len() as u64],
                data,
            )
        }
        Payload::Trace(trace) => {
            let p = trace.records.first().map_or(2, |r| r.mu.dim());
            let mut data = Vec::new();
            for r in &trace.records {
                data.push(r.iter as f64);
                data.extend_from_slice(&r.mu.components);
                data.extend_from_slice(&[
                    r.indicator_max,
                    r.true_rel_err,
                    r.n as f64,
                    r.m as f64,
                    r.nnls_solves as f64,
                    r.nnz_elem as f64,
                    r.nnz_facet as f64,
                    r.t_rob_s,
                    r.t_es_s,
                    r.t_eqp_s,
                    r.t_search_s,
                    r.t_hf_s,
                    r.hf_newton_iters as f64,
                    r.eq_constraint_ratio,
                ]);
            }
            data.push(trace.overhead_s);
            (
                PayloadKind::Trace,
                vec![
                    trace.records.len() as u64,
                    p as u64,
                    variant_id(trace.variant),
                ],
                data,
            )
        }
        Payload::Bundle(b) => {
            let n_dofs = b.rob.modes.first().map_or(0, DVector::len);
            let mut data = Vec::new();
            for m in &b.rob.modes {
                data.extend_from_slice(m.as_slice());
            }
            for m in &b.test.modes {
                data.extend_from_slice(m.as_slice());
            }
            data.extend_from_slice(&b.test.eigenvalues);
            data.extend_from_slice(b.quad.elem_weights.as_slice());
            data.extend_from_slice(b.quad.facet_weights.as_slice());
            data.extend_from_slice(&b.times);
            (
                PayloadKind::RomBundle,
                vec![
                    b.steady as u64,
                    b.mesh_level as u64,
                    n_dofs as u64,
                    b.rob.n_modes() as u64,
                    b.test.size() as u64,
                    b.quad.elem_weights.len() as u64,
                    b.quad.facet_weights.len() as u64,
                    b.times.len() as u64,
                    b.config_hash,
                ],
                data,
            )
        }
    }
}

fn require_finite(data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Format("payload contains non-finite values".into()));
    }
    Ok(())
}

fn take<'a>(data: &mut &'a [f64], n: usize) -> Result<&'a [f64]> {
    if data.len() < n {
        return Err(CoreError::Format("payload shorter than its dimensions claim".into()));
    }
    let (head, tail) = data.split_at(n);
    *data = tail;
    Ok(head)
}

fn decode_modes(data: &mut &[f64], n_dofs: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(DVector::from_row_slice(take(data, n_dofs)?));
    }
    Ok(out)
}

fn decode_quad(elem: &[f64], facet: &[f64]) -> Result<QuadRule> {
    let mut q = QuadRule::zeros(elem.len(), facet.len());
    q.elem_weights = DVector::from_row_slice(elem);
    q.facet_weights = DVector::from_row_slice(facet);
    q.rebuild_active_set();
    q.validate()?;
    Ok(q)
}

fn decode_eigenvalues(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.windows(2).any(|w| w[1] > w[0]) {
        return Err(CoreError::Format("eigenvalues not sorted non-increasing".into()));
    }
    if raw.iter().any(|&l| l < -1e-12) {
        return Err(CoreError::Format("negative eigenvalue beyond tolerance".into()));
    }
    Ok(raw.iter().map(|&l| l.max(0.0)).collect())
}

fn dim(dims: &[u64], i: usize) -> Result<usize> {
    dims.get(i)
        .map(|&v| v as usize)
        .ok_or_else(|| CoreError::Format("dimension list too short".into()))
}

fn decode(kind: PayloadKind, dims: &[u64], data: Vec<f64>) -> Result<Payload> {
    require_finite(&data)?;
    let mut rest: &[f64] = &data;
    let payload = match kind {
        PayloadKind::Mesh => {
            let n_nodes = dim(dims, 0)?;
            let level = dim(dims, 1)?;
            let nodes = take(&mut rest, n_nodes)?.to_vec();
            Payload::Mesh(Mesh::from_sorted_nodes(nodes, level).map_err(format_err)?)
        }
        PayloadKind::Field => {
            let n = dim(dims, 0)?;
            let level = dim(dims, 1)?;
            let values = DVector::from_row_slice(take(&mut rest, n)?);
            Payload::Field(HfField::new(values, level))
        }
        PayloadKind::Rob => {
            let n_dofs = dim(dims, 0)?;
            let n_modes = dim(dims, 1)?;
            let level = dim(dims, 2)?;
            Payload::Rob(Rob {
                modes: decode_modes(&mut rest, n_dofs, n_modes)?,
                mesh_level: level,
            })
        }
        PayloadKind::TestSpace => {
            let n_dofs = dim(dims, 0)?;
            let m = dim(dims, 1)?;
            let modes = decode_modes(&mut rest, n_dofs, m)?;
            let eigenvalues = decode_eigenvalues(take(&mut rest, m)?)?;
            Payload::TestSpace(TestSpaceState { modes, eigenvalues })
        }
        PayloadKind::QuadRule => {
            let n_e = dim(dims, 0)?;
            let n_f = dim(dims, 1)?;
            let elem = take(&mut rest, n_e)?;
            let facet = take(&mut rest, n_f)?;
            Payload::Quad(decode_quad(elem, facet)?)
        }
        PayloadKind::Trace => {
            let n_records = dim(dims, 0)?;
            let p = dim(dims, 1)?;
            let variant = variant_from_id(*dims.get(2).unwrap_or(&u64::MAX))?;
            let width = TRACE_FIXED_COLS + p;
            let mut records = Vec::with_capacity(n_records);
            for idx in 0..n_records {
                let row = take(&mut rest, width)?;
                let record = IterationRecord {
                    iter: row[0] as usize,
                    mu: ParamVec::new(row[1..1 + p].to_vec()),
                    indicator_max: row[1 + p],
                    true_rel_err: row[2 + p],
                    n: row[3 + p] as usize,
                    m: row[4 + p] as usize,
                    nnls_solves: row[5 + p] as usize,
                    nnz_elem: row[6 + p] as usize,
                    nnz_facet: row[7 + p] as usize,
                    t_rob_s: row[8 + p],
                    t_es_s: row[9 + p],
                    t_eqp_s: row[10 + p],
                    t_search_s: row[11 + p],
                    t_hf_s: row[12 + p],
                    hf_newton_iters: row[13 + p] as usize,
                    eq_constraint_ratio: row[14 + p],
                };
                if record.iter != idx + 1 {
                    return Err(CoreError::Format("trace iterations not contiguous".into()));
                }
                records.push(record);
            }
            let overhead = take(&mut rest, 1)?[0];
            Payload::Trace(GreedyTrace {
                variant,
                records,
                overhead_s: overhead,
                warnings: Vec::new(),
            })
        }
        PayloadKind::RomBundle => {
            let steady = dim(dims, 0)? != 0;
            let mesh_level = dim(dims, 1)?;
            let n_dofs = dim(dims, 2)?;
            let n_modes = dim(dims, 3)?;
            let m_test = dim(dims, 4)?;
            let n_e = dim(dims, 5)?;
            let n_f = dim(dims, 6)?;
            let n_times = dim(dims, 7)?;
            let config_hash = *dims
                .get(8)
                .ok_or_else(|| CoreError::Format("dimension list too short".into()))?;
            let rob = Rob {
                modes: decode_modes(&mut rest, n_dofs, n_modes)?,
                mesh_level,
            };
            let test_modes = decode_modes(&mut rest, n_dofs, m_test)?;
            let eigenvalues = decode_eigenvalues(take(&mut rest, m_test)?)?;
            let elem = take(&mut rest, n_e)?.to_vec();
            let facet = take(&mut rest, n_f)?.to_vec();
            let times = take(&mut rest, n_times)?.to_vec();
            if !steady && times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CoreError::Format("bundle time grid not increasing".into()));
            }
            Payload::Bundle(RomBundle {
                steady,
                mesh_level,
                rob,
                test: TestSpaceState {
                    modes: test_modes,
                    eigenvalues,
                },
                quad: decode_quad(&elem, &facet)?,
                times,
                config_hash,
            })
        }
    };
    if !rest.is_empty() {
        return Err(CoreError::Format("payload longer than its dimensions claim".into()));
    }
    Ok(payload)
}

fn format_err(e: CoreError) -> CoreError {
    CoreError::Format(format!("invalid payload: {e}"))
}

fn to_bytes(payload: &Payload) -> Vec<u8> {
    let (kind, dims, data) = encode(payload);
    let mut out = Vec::with_capacity(24 + dims.len() * 8 + data.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in &data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn from_bytes(bytes: &[u8]) -> Result<Payload> {
    let mut cursor = bytes;
    let mut read = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(CoreError::Format("file truncated".into()));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    let magic = read(8)?;
    if magic != MAGIC {
        return Err(CoreError::Format("bad magic (not an archive)".into()));
    }
    let version = u32::from_le_bytes(read(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CoreError::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = PayloadKind::from_u32(u32::from_le_bytes(read(4)?.try_into().expect("4 bytes")))?;
    let ndims = u32::from_le_bytes(read(4)?.try_into().expect("4 bytes")) as usize;
    if ndims > 64 {
        return Err(CoreError::Format("implausible dimension count".into()));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(u64::from_le_bytes(read(8)?.try_into().expect("8 bytes")));
    }
    let count = u64::from_le_bytes(read(8)?.try_into().expect("8 bytes")) as usize;
    if count > bytes.len() {
        return Err(CoreError::Format("file truncated".into()));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f64::from_le_bytes(read(8)?.try_into().expect("8 bytes")));
    }
    if !cursor.is_empty() {
        return Err(CoreError::Format("trailing bytes after payload".into()));
    }
    decode(kind, &dims, data)
}

/// Atomic file write: temp sibling + rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CoreError::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CoreError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CoreError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn save(path: &Path, payload: &Payload) -> Result<()> {
    write_atomic(path, &to_bytes(payload))
}

pub fn load(path: &Path) -> Result<Payload> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    from_bytes(&bytes)
}

/// Orthonormality revalidation for a loaded basis in a given inner product.
pub fn validate_orthonormal(
    modes: &[DVector<f64>],
    ip: &dyn crate::linalg::InnerProduct,
    tol: f64,
) -> Result<()> {
    for i in 0..modes.len() {
        for j in 0..=i {
            let d = ip.dot(&modes[i], &modes[j]);
            let expect = if i == j { 1.0 } else { 0.0 };
            if (d - expect).abs() > tol {
                return Err(CoreError::Format(format!(
                    "basis not orthonormal: gram[{i},{j}] = {d}"
                )));
            }
        }
    }
    Ok(())
}

pub const STEADY_TRACE_HEADER: &str = "iter,mu_1,mu_2,indicator_max,true_rel_err,n,m,nnls_solves,nnz_elem,nnz_facet,t_rob_s,t_es_s,t_eqp_s,t_search_s,t_hf_s";

fn mu2(mu: &ParamVec) -> (f64, f64) {
    (
        mu.components.first().copied().unwrap_or(0.0),
        mu.components.get(1).copied().unwrap_or(0.0),
    )
}

/// Steady trace CSV in the documented 15-column schema.
pub fn steady_trace_csv(trace: &GreedyTrace) -> String {
    let mut out = String::from(STEADY_TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let (mu_1, mu_2) = mu2(&r.mu);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            mu_1,
            mu_2,
            r.indicator_max,
            r.true_rel_err,
            r.n,
            r.m,
            r.nnls_solves,
            r.nnz_elem,
            r.nnz_facet,
            r.t_rob_s,
            r.t_es_s,
            r.t_eqp_s,
            r.t_search_s,
            r.t_hf_s
        ));
    }
    out
}

pub fn write_steady_trace_csv(path: &Path, trace: &GreedyTrace) -> Result<()> {
    write_atomic(path, steady_trace_csv(trace).as_bytes())
}

pub const UNSTEADY_TRACE_HEADER: &str = "iter,mu_1,mu_2,n,n_new_modes,rows,nnls_solves_warm,nnls_solves_cold,t_eqp_warm_s,t_eqp_cold_s,pct_weights_warm,pct_weights_cold,nnz_elem,nnz_facet,speedup_count,speedup_time,t_hf_s,t_rob_s";

pub fn unsteady_trace_csv(trace: &UnsteadyTrace) -> String {
    let mut out = String::from(UNSTEADY_TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let (mu_1, mu_2) = mu2(&r.mu);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            mu_1,
            mu_2,
            r.n,
            r.n_new_modes,
            r.rows,
            r.nnls_solves_warm,
            r.nnls_solves_cold,
            r.t_eqp_warm_s,
            r.t_eqp_cold_s,
            r.pct_weights_warm,
            r.pct_weights_cold,
            r.nnz_elem,
            r.nnz_facet,
            r.speedup_count(),
            r.speedup_time(),
            r.t_hf_s,
            r.t_rob_s
        ));
    }
    out
}

pub fn write_unsteady_trace_csv(path: &Path, trace: &UnsteadyTrace) -> Result<()> {
    write_atomic(path, unsteady_trace_csv(trace).as_bytes())
}

pub const METRICS_HEADER: &str = "family,key1,key2,value";

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.family, r.key1, r.key2, r.value));
    }
    write_atomic(path, out.as_bytes())
}

/// Parsed steady-trace row (column order of [`STEADY_TRACE_HEADER`]).
#[derive(Debug, Clone)]
pub struct SteadyTraceRow {
    pub values: Vec<f64>,
}

/// Read back a steady trace CSV, verifying the schema (reports the file on
/// any missing or renamed column).
pub fn read_steady_trace_csv(path: &Path) -> Result<Vec<SteadyTraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Format(format!("{}: empty trace file", path.display())))?;
    if header != STEADY_TRACE_HEADER {
        return Err(CoreError::Format(format!(
            "{}: unexpected columns (got '{header}')",
            path.display()
        )));
    }
    let n_cols = STEADY_TRACE_HEADER.split(',').count();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    CoreError::Format(format!(
                        "{}: bad number '{tok}' on data line {}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != n_cols {
            return Err(CoreError::Format(format!(
                "{}: wrong column count on data line {}",
                path.display(),
                lineno + 1
            )));
        }
        rows.push(SteadyTraceRow { values });
    }
    Ok(rows)
}
