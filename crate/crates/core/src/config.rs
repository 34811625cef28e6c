//! Flat key=value run configuration ('#' comments, one `key = value` per
//! line). Every numeric range is validated at parse time and errors name the
//! offending key.

use crate::driver::{GreedyConfig, GreedyVariant, UnsteadyGreedyConfig};
use crate::error::CoreError;
use crate::mesh::{build_mesh_hierarchy, Mesh};
use crate::model::{CreepBar, SteadyReactionDiffusion};
use crate::params::{AxisSpacing, GridSpec};
use crate::Result;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Steady nonlinear reaction-diffusion rod.
    SteadyRd,
    /// Quasi-static creep bar with internal variables.
    CreepBar,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::SteadyRd => "steady-rd",
            ModelKind::CreepBar => "creep-bar",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub n_coarse_elements: usize,
    pub mesh_levels: usize,
    pub coarse_level: usize,
    pub grid: Vec<usize>,
    pub spacing: Vec<AxisSpacing>,
    pub tol: f64,
    pub delta: f64,
    pub m_factor: usize,
    pub n_max: usize,
    pub variant: GreedyVariant,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub deterministic_times: bool,
    pub keep_intermediate: bool,
    // Unsteady-only settings.
    pub t_final: f64,
    pub n_time_steps: usize,
    pub maxit: usize,
    pub nested_tol: f64,
    pub delta_sweep: Vec<f64>,
}

impl RunConfig {
    pub fn defaults(model: ModelKind) -> Self {
        match model {
            ModelKind::SteadyRd => Self {
                model,
                n_coarse_elements: 100,
                mesh_levels: 2,
                coarse_level: 0,
                grid: vec![10, 10],
                spacing: vec![AxisSpacing::Linear, AxisSpacing::Linear],
                tol: 1e-3,
                delta: 1e-4,
                m_factor: 2,
                n_max: 25,
                variant: GreedyVariant::Incremental,
                seed: 0,
                out_dir: PathBuf::from("out"),
                threads: 0,
                deterministic_times: false,
                keep_intermediate: false,
                t_final: 2.0,
                n_time_steps: 25,
                maxit: 15,
                nested_tol: 1e-5,
                delta_sweep: vec![1e-2, 1e-4, 1e-6],
            },
            ModelKind::CreepBar => Self {
                grid: vec![7, 7],
                spacing: vec![AxisSpacing::Log, AxisSpacing::Log],
                n_coarse_elements: 32,
                ..Self::defaults(ModelKind::SteadyRd)
            }
            .with_model(model),
        }
    }

    fn with_model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let model = match pairs.iter().find(|(k, _)| k == "model") {
            Some((_, v)) => parse_model(v)?,
            None => ModelKind::SteadyRd,
        };
        let mut cfg = Self::defaults(model);
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| CoreError::Config(format!("key '{key}': {what} (got '{value}')"));
        match key {
            "model" => self.model = parse_model(value)?,
            "n_coarse_elements" => {
                self.n_coarse_elements = value.parse().map_err(|_| bad("expected integer"))?
            }
            "mesh_levels" => self.mesh_levels = value.parse().map_err(|_| bad("expected integer"))?,
            "coarse_level" => self.coarse_level = value.parse().map_err(|_| bad("expected integer"))?,
            "grid" => {
                let parts: Vec<&str> = value.split('x').collect();
                self.grid = parts
                    .iter()
                    .map(|p| p.trim().parse::<usize>().map_err(|_| bad("expected NxM")))
                    .collect::<Result<_>>()?;
            }
            "spacing" => {
                self.spacing = value
                    .split(',')
                    .map(|s| match s.trim() {
                        "linear" => Ok(AxisSpacing::Linear),
                        "log" => Ok(AxisSpacing::Log),
                        _ => Err(bad("expected linear|log per axis")),
                    })
                    .collect::<Result<_>>()?;
            }
            "tol" => self.tol = value.parse().map_err(|_| bad("expected number"))?,
            "delta" => self.delta = value.parse().map_err(|_| bad("expected number"))?,
            "m_factor" => self.m_factor = value.parse().map_err(|_| bad("expected integer"))?,
            "n_max" => self.n_max = value.parse().map_err(|_| bad("expected integer"))?,
            "variant" => self.variant = parse_variant(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected integer"))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "threads" => self.threads = value.parse().map_err(|_| bad("expected integer"))?,
            "deterministic_times" => {
                self.deterministic_times = value.parse().map_err(|_| bad("expected true|false"))?
            }
            "keep_intermediate" => {
                self.keep_intermediate = value.parse().map_err(|_| bad("expected true|false"))?
            }
            "t_final" => self.t_final = value.parse().map_err(|_| bad("expected number"))?,
            "n_time_steps" => {
                self.n_time_steps = value.parse().map_err(|_| bad("expected integer"))?
            }
            "maxit" => self.maxit = value.parse().map_err(|_| bad("expected integer"))?,
            "nested_tol" => self.nested_tol = value.parse().map_err(|_| bad("expected number"))?,
            "delta_sweep" => {
                self.delta_sweep = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad("expected numbers")))
                    .collect::<Result<_>>()?;
            }
            _ => return Err(CoreError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, what: String| Err(CoreError::Config(format!("key '{key}': {what}")));
        if !(self.tol > 0.0) {
            return fail("tol", format!("must be positive, got {}", self.tol));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        for d in &self.delta_sweep {
            if !(*d > 0.0 && *d < 1.0) {
                return fail("delta_sweep", format!("must lie in (0, 1), got {d}"));
            }
        }
        if self.grid.is_empty() || self.grid.iter().any(|&g| g < 1) {
            return fail("grid", "needs at least 1 point per axis".into());
        }
        if self.grid.len() != self.spacing.len() {
            return fail("spacing", "one spacing entry per grid axis".into());
        }
        if self.n_coarse_elements < 2 {
            return fail("n_coarse_elements", "needs at least 2".into());
        }
        if self.mesh_levels < 1 {
            return fail("mesh_levels", "needs at least 1 level".into());
        }
        if self.coarse_level >= self.mesh_levels {
            return fail("coarse_level", "must stay below mesh_levels".into());
        }
        if !(self.nested_tol > 0.0) {
            return fail("nested_tol", "must be positive".into());
        }
        if !(self.t_final > 0.0) || self.n_time_steps < 1 || self.maxit < 1 {
            return fail("t_final", "time settings must be positive".into());
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.clone(), self.spacing.clone())
    }

    pub fn greedy_config(&self) -> Result<GreedyConfig> {
        let mut cfg = GreedyConfig::new(self.grid_spec()?, self.variant);
        cfg.tol = self.tol;
        cfg.n_max = self.n_max;
        cfg.m_factor = self.m_factor;
        cfg.delta = self.delta;
        cfg.seed = self.seed;
        cfg.keep_intermediate = self.keep_intermediate;
        cfg.deterministic_times = self.deterministic_times;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn unsteady_config(&self, delta: f64) -> Result<UnsteadyGreedyConfig> {
        let cfg = UnsteadyGreedyConfig {
            grid: self.grid_spec()?,
            maxit: self.maxit,
            nested_tol: self.nested_tol,
            delta,
            t_final: self.t_final,
            n_steps: self.n_time_steps,
            deterministic_times: self.deterministic_times,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mesh_hierarchy(&self) -> Result<Vec<Mesh>> {
        build_mesh_hierarchy(self.n_coarse_elements, self.mesh_levels)
    }

    pub fn build_steady_models(&self) -> Result<Vec<SteadyReactionDiffusion>> {
        self.mesh_hierarchy()?
            .into_iter()
            .map(SteadyReactionDiffusion::new)
            .collect()
    }

    pub fn build_creep_models(&self) -> Result<Vec<CreepBar>> {
        self.mesh_hierarchy()?.into_iter().map(CreepBar::new).collect()
    }

    /// Stable textual form used for hashing (sorted fixed key order).
    pub fn canonical_string(&self) -> String {
        let spacing: Vec<&str> = self
            .spacing
            .iter()
            .map(|s| match s {
                AxisSpacing::Linear => "linear",
                AxisSpacing::Log => "log",
            })
            .collect();
        let grid: Vec<String> = self.grid.iter().map(|g| g.to_string()).collect();
        let sweep: Vec<String> = self.delta_sweep.iter().map(|d| d.to_string()).collect();
        format!(
            "coarse_level={}\ndelta={}\ndelta_sweep={}\ngrid={}\nm_factor={}\nmaxit={}\nmesh_levels={}\nmodel={}\nn_coarse_elements={}\nn_max={}\nn_time_steps={}\nnested_tol={}\nseed={}\nspacing={}\nt_final={}\ntol={}\nvariant={}\n",
            self.coarse_level,
            self.delta,
            sweep.join(","),
            grid.join("x"),
            self.m_factor,
            self.maxit,
            self.mesh_levels,
            self.model.label(),
            self.n_coarse_elements,
            self.n_max,
            self.n_time_steps,
            self.nested_tol,
            self.seed,
            spacing.join(","),
            self.t_final,
            self.tol,
            self.variant.label(),
        )
    }

    /// FNV-1a hash of the canonical form; stored in ROM bundles so an eval
    /// run can verify it is paired with the right configuration.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_string().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn parse_model(value: &str) -> Result<ModelKind> {
    match value {
        "steady-rd" => Ok(ModelKind::SteadyRd),
        "creep-bar" => Ok(ModelKind::CreepBar),
        _ => Err(CoreError::Config(format!(
            "key 'model': expected steady-rd|creep-bar (got '{value}')"
        ))),
    }
}

fn parse_variant(value: &str) -> Result<GreedyVariant> {
    match value {
        "vanilla" => Ok(GreedyVariant::Vanilla),
        "incr" => Ok(GreedyVariant::Incremental),
        "incr-mf" => Ok(GreedyVariant::MultiFidelity),
        _ => Err(CoreError::Config(format!(
            "key 'variant': expected vanilla|incr|incr-mf (got '{value}')"
        ))),
    }
}
