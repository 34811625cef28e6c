//! Parameter vectors, parameter boxes and training grids.

use crate::error::CoreError;
use crate::Result;

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub components: Vec<f64>,
}

impl ParamVec {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Euclidean distance between raw components.
    pub fn distance(&self, other: &ParamVec) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::fmt::Display for ParamVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Compact box of admissible parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(CoreError::invalid("parameter box bounds must have equal nonzero length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(CoreError::invalid("parameter box must have lo < hi per axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, mu: &ParamVec) -> bool {
        mu.dim() == self.dim()
            && mu
                .components
                .iter()
                .enumerate()
                .all(|(i, &c)| c >= self.lo[i] - 1e-12 && c <= self.hi[i] + 1e-12)
    }

    /// The 2^p box corners followed by the center, deduplicated in order.
    /// Standard a-priori seed for the greedy loop.
    pub fn corners_and_center(&self) -> Vec<ParamVec> {
        let p = self.dim();
        let mut out = Vec::with_capacity((1 << p) + 1);
        for mask in 0..(1usize << p) {
            let c = (0..p)
                .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                .collect();
            out.push(ParamVec::new(c));
        }
        let center = (0..p).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect();
        out.push(ParamVec::new(center));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisSpacing {
    Linear,
    Log,
}

/// Tensor-product grid specification over a [`ParamBox`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub counts: Vec<usize>,
    pub spacing: Vec<AxisSpacing>,
}

impl GridSpec {
    pub fn new(counts: Vec<usize>, spacing: Vec<AxisSpacing>) -> Result<Self> {
        if counts.is_empty() || counts.len() != spacing.len() {
            return Err(CoreError::invalid("grid counts/spacing must have equal nonzero length"));
        }
        if counts.iter().any(|&c| c < 1) {
            return Err(CoreError::invalid("grid must have at least 1 point per axis"));
        }
        Ok(Self { counts, spacing })
    }

    pub fn uniform(counts: Vec<usize>) -> Result<Self> {
        let spacing = vec![AxisSpacing::Linear; counts.len()];
        Self::new(counts, spacing)
    }
}

fn axis_points(lo: f64, hi: f64, count: usize, spacing: AxisSpacing) -> Result<Vec<f64>> {
    if count == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    match spacing {
        AxisSpacing::Linear => Ok((0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()),
        AxisSpacing::Log => {
            if lo <= 0.0 {
                return Err(CoreError::invalid("log spacing requires positive lower bound"));
            }
            let (a, b) = (lo.ln(), hi.ln());
            Ok((0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect())
        }
    }
}

/// Tensor grid over the box, last axis fastest. Deterministic ordering.
pub fn tensor_grid(bx: &ParamBox, spec: &GridSpec) -> Result<Vec<ParamVec>> {
    if spec.counts.len() != bx.dim() {
        return Err(CoreError::dims(format!(
            "grid has {} axes, box has {}",
            spec.counts.len(),
            bx.dim()
        )));
    }
    let axes: Vec<Vec<f64>> = (0..bx.dim())
        .map(|i| axis_points(bx.lo[i], bx.hi[i], spec.counts[i], spec.spacing[i]))
        .collect::<Result<_>>()?;
    let total: usize = spec.counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; bx.dim()];
    for _ in 0..total {
        out.push(ParamVec::new(
            idx.iter().enumerate().map(|(ax, &i)| axes[ax][i]).collect(),
        ));
        for ax in (0..bx.dim()).rev() {
            idx[ax] += 1;
            if idx[ax] < spec.counts[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Ok(out)
}
