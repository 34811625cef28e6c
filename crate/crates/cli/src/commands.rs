//! Subcommand implementations.

use morforge_core::driver::metrics::{qoi_errors, trajectory_projection_error, MetricRow};
use morforge_core::driver::{
    multi_fidelity_greedy, pod_greedy_unsteady, weak_greedy_steady, GreedyTrace, GreedyVariant,
    SteadyGreedyResult,
};
use morforge_core::linalg::MatrixIp;
use morforge_core::model::{
    hf_solve_steady, hf_solve_unsteady, ModelCore, NormKind, SteadyReactionDiffusion,
    UnsteadyModel,
};
use morforge_core::persist::{
    load, read_steady_trace_csv, save, validate_orthonormal, write_atomic,
    write_metrics_csv, write_steady_trace_csv, write_unsteady_trace_csv, Payload, RomBundle,
};
use morforge_core::rom::{GnSettings, SteadyRom, UnsteadyRom};
use morforge_core::{
    tensor_grid, AxisSpacing, CoreError, GridSpec, ModelKind, ParamVec, Result, RunConfig,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CoreError::io(&cfg.out_dir, e))
}

fn print_steady_summary(trace: &GreedyTrace) {
    for r in &trace.records {
        println!(
            "iter {:>2}: mu = {} | n = {:>2} m = {:>2} | indicator_max = {:.3e} | true_rel_err = {:.3e} | nnls = {:>4} | nnz = {}+{}",
            r.iter, r.mu, r.n, r.m, r.indicator_max, r.true_rel_err, r.nnls_solves, r.nnz_elem, r.nnz_facet
        );
    }
    if trace.overhead_s > 0.0 {
        println!("coarse-phase overhead: {:.3} s", trace.overhead_s);
    }
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
}

fn steady_bundle(rom: &SteadyRom<SteadyReactionDiffusion>, hash: u64) -> RomBundle {
    RomBundle {
        steady: true,
        mesh_level: rom.rob.mesh_level,
        rob: rom.rob.clone(),
        test: rom.test.clone(),
        quad: rom.quad.clone(),
        times: Vec::new(),
        config_hash: hash,
    }
}

fn train_metric_rows(label: &str, trace: &GreedyTrace) -> Vec<MetricRow> {
    let sum = |f: fn(&morforge_core::driver::IterationRecord) -> f64| -> f64 {
        trace.records.iter().map(f).sum()
    };
    let last = trace.records.last();
    vec![
        MetricRow::new("train", label, "overhead_s", trace.overhead_s),
        MetricRow::new("train", label, "t_rob_s", sum(|r| r.t_rob_s)),
        MetricRow::new("train", label, "t_es_s", sum(|r| r.t_es_s)),
        MetricRow::new("train", label, "t_eqp_s", sum(|r| r.t_eqp_s)),
        MetricRow::new("train", label, "t_search_s", sum(|r| r.t_search_s)),
        MetricRow::new("train", label, "t_hf_s", sum(|r| r.t_hf_s)),
        MetricRow::new(
            "train",
            label,
            "total_nnls_solves",
            trace.cumulative_nnls_solves() as f64,
        ),
        MetricRow::new("train", label, "final_n", last.map_or(0.0, |r| r.n as f64)),
        MetricRow::new("train", label, "final_m", last.map_or(0.0, |r| r.m as f64)),
    ]
}

pub fn train_steady(config_path: &Path, variant_flag: Option<&str>) -> Result<()> {
    let mut cfg = RunConfig::parse_file(config_path)?;
    if let Some(v) = variant_flag {
        cfg.variant = v.parse()?;
    }
    if cfg.model != ModelKind::SteadyRd {
        return Err(CoreError::Config(
            "train-steady needs `model = steady-rd`".into(),
        ));
    }
    ensure_out_dir(&cfg)?;
    let gcfg = cfg.greedy_config()?;
    let mut models = cfg.build_steady_models()?;
    let fine = Arc::new(models.pop().expect("validated mesh_levels >= 1"));
    let label = cfg.variant.label();

    let result: SteadyGreedyResult<SteadyReactionDiffusion> = match cfg.variant {
        GreedyVariant::Vanilla | GreedyVariant::Incremental => {
            weak_greedy_steady(&gcfg, fine.clone())?
        }
        GreedyVariant::MultiFidelity => {
            let coarse = if cfg.coarse_level < models.len() {
                Arc::new(models.swap_remove(cfg.coarse_level))
            } else {
                fine.clone() // degenerate hierarchy: coarse level = fine level
            };
            let mf = multi_fidelity_greedy(&gcfg, coarse, fine.clone())?;
            println!(
                "multi-fidelity seed: n0 = {} parameters, {} fine Newton iterations",
                mf.n0, mf.seed_newton_iterations
            );
            mf.fine
        }
    };
    print_steady_summary(&result.trace);

    save(
        &cfg.out_dir.join(format!("rom_{label}.bin")),
        &Payload::Bundle(steady_bundle(&result.rom, cfg.hash())),
    )?;
    write_steady_trace_csv(&cfg.out_dir.join(format!("trace_{label}.csv")), &result.trace)?;
    write_metrics_csv(
        &cfg.out_dir.join(format!("metrics_{label}.csv")),
        &train_metric_rows(label, &result.trace),
    )?;
    println!(
        "wrote rom_{label}.bin, trace_{label}.csv, metrics_{label}.csv to {}",
        cfg.out_dir.display()
    );
    Ok(())
}

fn format_delta(delta: f64) -> String {
    format!("{delta:e}")
}

pub fn train_unsteady(config_path: &Path, delta_flag: Option<&str>) -> Result<()> {
    let cfg = RunConfig::parse_file(config_path)?;
    if cfg.model != ModelKind::CreepBar {
        return Err(CoreError::Config(
            "train-unsteady needs `model = creep-bar`".into(),
        ));
    }
    ensure_out_dir(&cfg)?;
    let deltas: Vec<f64> = match delta_flag {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CoreError::Config(format!("bad delta '{s}' in sweep")))
            })
            .collect::<Result<_>>()?,
        None => cfg.delta_sweep.clone(),
    };
    for d in &deltas {
        if !(*d > 0.0 && *d < 1.0) {
            return Err(CoreError::Config(format!(
                "key 'delta': must lie in (0, 1), got {d}"
            )));
        }
    }
    let mut models = cfg.build_creep_models()?;
    let fine = Arc::new(models.pop().expect("validated mesh_levels >= 1"));
    let coarse = if cfg.coarse_level < models.len() {
        Arc::new(models.swap_remove(cfg.coarse_level))
    } else {
        fine.clone()
    };

    for delta in deltas {
        let ucfg = cfg.unsteady_config(delta)?;
        let res = pod_greedy_unsteady(&ucfg, coarse.clone(), fine.clone())?;
        let label = format_delta(delta);
        let warm: usize = res.trace.records.iter().map(|r| r.nnls_solves_warm).sum();
        let cold: usize = res.trace.records.iter().map(|r| r.nnls_solves_cold).sum();
        println!(
            "delta = {label}: {} iterations, final n = {}, NNLS solves warm/cold = {warm}/{cold}",
            res.trace.records.len(),
            res.rom.n_modes(),
        );

        write_unsteady_trace_csv(
            &cfg.out_dir.join(format!("trace_unsteady_{label}.csv")),
            &res.trace,
        )?;
        save(
            &cfg.out_dir.join(format!("rom_unsteady_{label}.bin")),
            &Payload::Bundle(RomBundle {
                steady: false,
                mesh_level: res.rom.rob.mesh_level,
                rob: res.rom.rob.clone(),
                test: morforge_core::TestSpaceState::empty(),
                quad: res.rom.quad.clone(),
                times: res.rom.times.clone(),
                config_hash: cfg.hash(),
            }),
        )?;

        // In-sample projection errors per iteration: nested spaces make the
        // historical bases prefixes of the final one.
        let trial = fine.inner_product(NormKind::Trial);
        let ip = MatrixIp::new(trial);
        let dts: Vec<f64> = res.rom.times.windows(2).map(|w| w[1] - w[0]).collect();
        let mut rows = Vec::new();
        for r in &res.trace.records {
            let prefix = &res.rom.rob.modes[..r.n];
            let worst = res
                .trajectories
                .iter()
                .map(|(_, t)| trajectory_projection_error(&t.states[1..], &dts, prefix, &ip))
                .fold(0.0f64, f64::max);
            rows.push(MetricRow::new(
                "unsteady_proj",
                r.iter.to_string(),
                "train_selected",
                worst,
            ));
            rows.push(MetricRow::new(
                "unsteady_speedup",
                r.iter.to_string(),
                "count_ratio",
                r.speedup_count(),
            ));
        }
        write_metrics_csv(
            &cfg.out_dir.join(format!("metrics_unsteady_{label}.csv")),
            &rows,
        )?;
    }
    println!("wrote per-delta traces, bundles and metrics to {}", cfg.out_dir.display());
    Ok(())
}

fn parse_param_file(path: &Path, dim: usize) -> Result<Vec<ParamVec>> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let comps: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    CoreError::Config(format!(
                        "{}: bad number '{t}' on line {}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if comps.len() != dim {
            return Err(CoreError::Config(format!(
                "{}: expected {dim} components on line {}",
                path.display(),
                lineno + 1
            )));
        }
        out.push(ParamVec::new(comps));
    }
    if out.is_empty() {
        return Err(CoreError::Config(format!(
            "{}: empty parameter file",
            path.display()
        )));
    }
    Ok(out)
}

fn random_params(
    bx: &morforge_core::ParamBox,
    spacing: &[AxisSpacing],
    count: usize,
    seed: u64,
) -> Vec<ParamVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let comps = (0..bx.dim())
                .map(|ax| match spacing.get(ax).copied().unwrap_or(AxisSpacing::Linear) {
                    AxisSpacing::Linear => rng.random_range(bx.lo[ax]..=bx.hi[ax]),
                    AxisSpacing::Log => {
                        let (a, b) = (bx.lo[ax].ln(), bx.hi[ax].ln());
                        rng.random_range(a..=b).exp()
                    }
                })
                .collect();
            ParamVec::new(comps)
        })
        .collect()
}

fn parse_params_spec(
    spec: &str,
    bx: &morforge_core::ParamBox,
    spacing: &[AxisSpacing],
) -> Result<Vec<ParamVec>> {
    if let Some(rest) = spec.strip_prefix("grid:") {
        let counts: Vec<usize> = rest
            .split('x')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CoreError::Config(format!("bad grid spec '{spec}'")))
            })
            .collect::<Result<_>>()?;
        let gs = GridSpec::new(counts, spacing.to_vec())?;
        tensor_grid(bx, &gs)
    } else if let Some(path) = spec.strip_prefix("file:") {
        parse_param_file(Path::new(path), bx.dim())
    } else if let Some(rest) = spec.strip_prefix("random:") {
        let (count, seed) = rest
            .split_once(':')
            .ok_or_else(|| CoreError::Config(format!("bad random spec '{spec}' (use random:N:SEED)")))?;
        let count: usize = count
            .parse()
            .map_err(|_| CoreError::Config(format!("bad count in '{spec}'")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| CoreError::Config(format!("bad seed in '{spec}'")))?;
        if count == 0 {
            return Err(CoreError::Config("random parameter count must be positive".into()));
        }
        Ok(random_params(bx, spacing, count, seed))
    } else {
        Err(CoreError::Config(format!(
            "unknown --params source '{spec}' (use grid:NxM, file:PATH, or random:N:SEED)"
        )))
    }
}

pub fn eval(
    bundle_path: &Path,
    config_path: &Path,
    params_spec: &str,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::parse_file(config_path)?;
    let bundle = match load(bundle_path)? {
        Payload::Bundle(b) => b,
        other => {
            return Err(CoreError::Format(format!(
                "{}: expected a ROM bundle, found {:?} payload",
                bundle_path.display(),
                persist_kind_name(&other)
            )))
        }
    };
    if bundle.config_hash != cfg.hash() {
        return Err(CoreError::Config(format!(
            "bundle {} was trained with a different configuration (hash mismatch)",
            bundle_path.display()
        )));
    }
    let out_path =
        out.map(PathBuf::from).unwrap_or_else(|| bundle_path.with_file_name("eval.csv"));
    if bundle.steady {
        eval_steady(&cfg, bundle, params_spec, &out_path)
    } else {
        eval_unsteady(&cfg, bundle, params_spec, &out_path)
    }
}

fn persist_kind_name(p: &Payload) -> &'static str {
    match p {
        Payload::Mesh(_) => "mesh",
        Payload::Field(_) => "field",
        Payload::Rob(_) => "rob",
        Payload::TestSpace(_) => "testspace",
        Payload::Quad(_) => "quadrule",
        Payload::Trace(_) => "trace",
        Payload::Bundle(_) => "rom_bundle",
    }
}

fn eval_steady(cfg: &RunConfig, bundle: RomBundle, params_spec: &str, out: &Path) -> Result<()> {
    let mut models = cfg.build_steady_models()?;
    if bundle.mesh_level >= models.len() {
        return Err(CoreError::Config(format!(
            "bundle mesh level {} outside the configured hierarchy",
            bundle.mesh_level
        )));
    }
    let model = Arc::new(models.swap_remove(bundle.mesh_level));
    validate_orthonormal(
        &bundle.rob.modes,
        &MatrixIp::new(model.inner_product(NormKind::Trial)),
        1e-8,
    )?;
    validate_orthonormal(
        &bundle.test.modes,
        &MatrixIp::new(model.inner_product(NormKind::Test)),
        1e-8,
    )?;
    let params = parse_params_spec(params_spec, model.param_box(), &cfg.spacing)?;
    let rom = SteadyRom::new(
        model.clone(),
        bundle.rob,
        bundle.test,
        bundle.quad,
        GnSettings::default(),
    )?;
    let trial = MatrixIp::new(model.inner_product(NormKind::Trial));
    use morforge_core::linalg::InnerProduct;
    let mut csv = String::from("mu_1,mu_2,rel_l2_err\n");
    let mut total = 0.0;
    for mu in &params {
        let sol = rom.lspg_solve(mu, None)?;
        let u_hat = rom.reconstruct(&sol.alpha);
        let (u, _) = hf_solve_steady(model.as_ref(), mu, None)?;
        let err = trial.norm(&(&u.values - &u_hat.values)) / trial.norm(&u.values);
        total += err;
        csv.push_str(&format!(
            "{},{},{}\n",
            mu.components[0],
            mu.components.get(1).copied().unwrap_or(0.0),
            err
        ));
    }
    let e_avg = total / params.len() as f64;
    write_atomic(out, csv.as_bytes())?;
    write_metrics_csv(
        &out.with_file_name("eval_summary.csv"),
        &[MetricRow::new("eval", "steady", "e_avg", e_avg)],
    )?;
    println!("evaluated {} parameters: E_avg = {e_avg:.6e}", params.len());
    println!("wrote {} and eval_summary.csv", out.display());
    Ok(())
}

fn eval_unsteady(cfg: &RunConfig, bundle: RomBundle, params_spec: &str, out: &Path) -> Result<()> {
    let mut models = cfg.build_creep_models()?;
    if bundle.mesh_level >= models.len() {
        return Err(CoreError::Config(format!(
            "bundle mesh level {} outside the configured hierarchy",
            bundle.mesh_level
        )));
    }
    let model = Arc::new(models.swap_remove(bundle.mesh_level));
    validate_orthonormal(
        &bundle.rob.modes,
        &MatrixIp::new(model.inner_product(NormKind::Trial)),
        1e-8,
    )?;
    let params = parse_params_spec(params_spec, model.param_box(), &cfg.spacing)?;
    let rom = UnsteadyRom::new(model.clone(), bundle.rob, bundle.quad, bundle.times)?;
    let dts: Vec<f64> = rom.times.windows(2).map(|w| w[1] - w[0]).collect();
    let trial = MatrixIp::new(model.inner_product(NormKind::Trial));
    let mut csv = String::from("mu_1,mu_2,qoi_e_max,qoi_e_avg,traj_rel_err\n");
    let mut rows = Vec::new();
    for (i, mu) in params.iter().enumerate() {
        let reduced = rom.galerkin_march(mu)?;
        let hf = hf_solve_unsteady(model.as_ref(), mu, &rom.times)?;
        let q_hf: Vec<f64> = hf
            .states
            .iter()
            .zip(&hf.times)
            .map(|(s, &t)| model.qoi(s, t))
            .collect();
        let (e_max, e_avg) = qoi_errors(&dts, &reduced.qois, &q_hf);
        let lifted: Vec<nalgebra::DVector<f64>> = reduced
            .alphas
            .iter()
            .skip(1)
            .map(|a| rom.rob.lift(a))
            .collect();
        let diffs: Vec<nalgebra::DVector<f64>> = lifted
            .iter()
            .zip(&hf.states[1..])
            .map(|(a, b)| a - b)
            .collect();
        let num = morforge_core::driver::metrics::trajectory_norm(&diffs, &dts, &trial);
        let den = morforge_core::driver::metrics::trajectory_norm(&hf.states[1..], &dts, &trial);
        let traj_err = if den > 0.0 { num / den } else { 0.0 };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            mu.components[0], mu.components[1], e_max, e_avg, traj_err
        ));
        rows.push(MetricRow::new("eval", format!("mu{i}"), "qoi_e_avg", e_avg));

        // QoI curves for this parameter.
        let mut qcsv = String::from("t,q_rom,q_hf\n");
        for (k, &t) in rom.times.iter().enumerate() {
            qcsv.push_str(&format!("{t},{},{}\n", reduced.qois[k], q_hf[k]));
        }
        write_atomic(&out.with_file_name(format!("eval_qoi_{i}.csv")), qcsv.as_bytes())?;
    }
    write_atomic(out, csv.as_bytes())?;
    write_metrics_csv(&out.with_file_name("eval_summary.csv"), &rows)?;
    println!(
        "evaluated {} parameters; wrote {} plus QoI curves",
        params.len(),
        out.display()
    );
    Ok(())
}

/// Column indices in the steady trace schema.
const COL_N: usize = 5;
const COL_NNLS: usize = 7;
const COL_NNZ_E: usize = 8;
const COL_NNZ_F: usize = 9;
const COL_T_ROB: usize = 10;
const COL_T_HF: usize = 14;
const COL_INDICATOR: usize = 3;
const COL_TRUE_ERR: usize = 4;

fn read_overhead(dir: &Path, label: &str) -> f64 {
    let path = dir.join(format!("metrics_{label}.csv"));
    let Ok(text) = std::fs::read_to_string(&path) else {
        return 0.0;
    };
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() == 4 && cols[0] == "train" && cols[2] == "overhead_s" {
            return cols[3].parse().unwrap_or(0.0);
        }
    }
    0.0
}

pub fn report(trace_dir: &Path, out: Option<&Path>) -> Result<()> {
    let out_dir = out.unwrap_or(trace_dir);
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(trace_dir)
        .map_err(|e| CoreError::io(trace_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv") && !n.contains("unsteady"))
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(CoreError::invalid(format!(
            "no steady trace files (trace_*.csv) in {}",
            trace_dir.display()
        )));
    }
    let mut table = String::from(
        "variant,t_rob_s,t_es_s,t_eqp_s,t_search_s,t_hf_s,overhead_s,total_s\n",
    );
    println!("variant    rob        ES         EQP        search     HF         overhead   total");
    for path in &entries {
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("trace_"))
            .unwrap_or("unknown")
            .to_string();
        let rows = read_steady_trace_csv(path)?;
        let sum = |col: usize| -> f64 { rows.iter().map(|r| r.values[col]).sum() };
        let phases: Vec<f64> = (COL_T_ROB..=COL_T_HF).map(sum).collect();
        let overhead = read_overhead(trace_dir, &label);
        let total: f64 = phases.iter().sum::<f64>() + overhead;
        table.push_str(&format!(
            "{label},{},{},{},{},{},{overhead},{total}\n",
            phases[0], phases[1], phases[2], phases[3], phases[4]
        ));
        println!(
            "{label:<10} {:<10.3} {:<10.3} {:<10.3} {:<10.3} {:<10.3} {overhead:<10.3} {total:<10.3}",
            phases[0], phases[1], phases[2], phases[3], phases[4]
        );

        // Plot-ready series: one row per iteration keyed by basis size.
        let mut series = String::from("n,nnls_solves,nnz_total,indicator_max,true_rel_err\n");
        for r in &rows {
            series.push_str(&format!(
                "{},{},{},{},{}\n",
                r.values[COL_N],
                r.values[COL_NNLS],
                r.values[COL_NNZ_E] + r.values[COL_NNZ_F],
                r.values[COL_INDICATOR],
                r.values[COL_TRUE_ERR]
            ));
        }
        write_atomic(
            &out_dir.join(format!("report_series_{label}.csv")),
            series.as_bytes(),
        )?;
    }
    write_atomic(&out_dir.join("report_cost.csv"), table.as_bytes())?;
    println!("wrote report_cost.csv and per-variant series to {}", out_dir.display());
    Ok(())
}
