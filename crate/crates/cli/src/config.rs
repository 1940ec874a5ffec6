//! JSON experiment config and the policy flags that override it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use trra_core::{PolicySpec, Variant};

/// Every field is optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub policy: Option<PolicySpec>,
    pub slices_per_subject: Option<usize>,
    pub threads: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub resize: Option<(usize, usize)>,
    pub crop: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("config {}", path.display()))
    }
}

#[derive(Args, Debug, Default)]
pub struct PolicyArgs {
    /// RA, RA23, RRA23 or TRRA. Default policy: TRRA with 5 color, 2 shape,
    /// levels 5..=30, P = 0.9.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Transforms per image (RA, RA23, RRA23).
    #[arg(long)]
    pub n: Option<u32>,
    /// Fixed level (RA, RA23).
    #[arg(long)]
    pub m: Option<i64>,
    #[arg(long)]
    pub m_lo: Option<i64>,
    #[arg(long)]
    pub m_hi: Option<i64>,
    #[arg(long)]
    pub n_color: Option<u32>,
    #[arg(long)]
    pub n_shape: Option<u32>,
    /// Retention probability of each TRRA instance.
    #[arg(long)]
    pub p: Option<f64>,
}

impl PolicyArgs {
    /// Start from the config policy (or the default when absent and no
    /// variant is given) and apply the flags on top.
    pub fn resolve(&self, from_config: Option<PolicySpec>) -> Result<PolicySpec> {
        let mut spec = match (self.variant, from_config) {
            (Some(v), Some(c)) if c.variant == v => c,
            (Some(v), _) => PolicySpec {
                variant: v,
                n: None,
                m: None,
                m_lo: None,
                m_hi: None,
                n_color: None,
                n_shape: None,
                p: None,
            },
            (None, Some(c)) => c,
            (None, None) => PolicySpec::trra(5, 2, 5, 30, 0.9),
        };
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_some() { spec.$f = self.$f; } )* };
        }
        take!(n, m, m_lo, m_hi, n_color, n_shape, p);
        if spec.variant == Variant::RRA23 && spec.m_lo.is_none() {
            spec.m_lo = Some(5);
        }
        spec.validate()?;
        Ok(spec)
    }
}
