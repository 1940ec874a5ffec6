//! Random augmentation policies and their grid-search spaces.
//!
//! * `RA` draws `n` kinds from the 16-kind space at fixed level `m`.
//! * `RA23` is the same over all 23 kinds.
//! * `RRA23` draws each instance's level uniformly from `[m_lo, m_hi]`.
//! * `TRRA` draws `n_color` color kinds and `n_shape` shape kinds with
//!   `RRA23` levels, then keeps each instance independently with probability `p`.
//!
//! Kinds are drawn with replacement; levels are drawn per instance.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Image8;
use crate::transforms::{apply_transform, TransformInstance, TransformKind, MAX_LEVEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    RA,
    RA23,
    RRA23,
    TRRA,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RA, Variant::RA23, Variant::RRA23, Variant::TRRA];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::RA => "RA",
            Variant::RA23 => "RA23",
            Variant::RRA23 => "RRA23",
            Variant::TRRA => "TRRA",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "RA" => Ok(Variant::RA),
            "RA23" => Ok(Variant::RA23),
            "RRA23" => Ok(Variant::RRA23),
            "TRRA" => Ok(Variant::TRRA),
            _ => Err(Error::Policy(format!("unknown variant {s:?}"))),
        }
    }
}

/// Policy hyperparameters. Serialized as a flat JSON object with absent
/// fields omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_lo: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_hi: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_color: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_shape: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl PolicySpec {
    fn empty(variant: Variant) -> Self {
        Self {
            variant,
            n: None,
            m: None,
            m_lo: None,
            m_hi: None,
            n_color: None,
            n_shape: None,
            p: None,
        }
    }

    pub fn ra(n: u32, m: i64) -> Self {
        Self {
            n: Some(n),
            m: Some(m),
            ..Self::empty(Variant::RA)
        }
    }

    pub fn ra23(n: u32, m: i64) -> Self {
        Self {
            n: Some(n),
            m: Some(m),
            ..Self::empty(Variant::RA23)
        }
    }

    pub fn rra23(n: u32, m_lo: i64, m_hi: i64) -> Self {
        Self {
            n: Some(n),
            m_lo: Some(m_lo),
            m_hi: Some(m_hi),
            ..Self::empty(Variant::RRA23)
        }
    }

    pub fn trra(n_color: u32, n_shape: u32, m_lo: i64, m_hi: i64, p: f64) -> Self {
        Self {
            n_color: Some(n_color),
            n_shape: Some(n_shape),
            m_lo: Some(m_lo),
            m_hi: Some(m_hi),
            p: Some(p),
            ..Self::empty(Variant::TRRA)
        }
    }

    /// Compact identifier such as `TRRA_c5_s2_m5-30_p0.9`.
    pub fn label(&self) -> String {
        match self.variant {
            Variant::RA | Variant::RA23 => format!(
                "{}_n{}_m{}",
                self.variant.as_str(),
                self.n.unwrap_or(0),
                self.m.unwrap_or(0)
            ),
            Variant::RRA23 => format!(
                "RRA23_n{}_m{}-{}",
                self.n.unwrap_or(0),
                self.m_lo.unwrap_or(0),
                self.m_hi.unwrap_or(0)
            ),
            Variant::TRRA => format!(
                "TRRA_c{}_s{}_m{}-{}_p{}",
                self.n_color.unwrap_or(0),
                self.n_shape.unwrap_or(0),
                self.m_lo.unwrap_or(0),
                self.m_hi.unwrap_or(0),
                self.p.unwrap_or(0.0)
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let level = |name: &str, v: Option<i64>| -> Result<i64> {
            let v = v.ok_or_else(|| Error::Policy(format!("{} requires {name}", self.variant.as_str())))?;
            if !(0..=MAX_LEVEL).contains(&v) {
                return Err(Error::Policy(format!("{name}={v} outside [0, {MAX_LEVEL}]")));
            }
            Ok(v)
        };
        let count = |name: &str, v: Option<u32>| -> Result<u32> {
            v.ok_or_else(|| Error::Policy(format!("{} requires {name}", self.variant.as_str())))
        };
        let check_bounds = || -> Result<()> {
            let lo = level("m_lo", self.m_lo)?;
            let hi = level("m_hi", self.m_hi)?;
            if lo > hi {
                return Err(Error::Policy(format!("m_lo={lo} exceeds m_hi={hi}")));
            }
            Ok(())
        };
        match self.variant {
            Variant::RA | Variant::RA23 => {
                count("n", self.n)?;
                level("m", self.m)?;
            }
            Variant::RRA23 => {
                count("n", self.n)?;
                check_bounds()?;
            }
            Variant::TRRA => {
                let nc = count("n_color", self.n_color)?;
                let ns = count("n_shape", self.n_shape)?;
                if nc as usize > TransformKind::COLOR.len() || ns as usize > TransformKind::SHAPE.len() {
                    return Err(Error::Policy(format!("n_color={nc} > 13 or n_shape={ns} > 10")));
                }
                check_bounds()?;
                let p = self.p.ok_or_else(|| Error::Policy("TRRA requires p".into()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Policy(format!("p={p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn search_space(&self) -> &'static [TransformKind] {
        match self.variant {
            Variant::RA => &TransformKind::RANDAUGMENT,
            _ => &TransformKind::ALL,
        }
    }
}

/// Full outcome of one policy draw: the selected instances before the
/// retention step and which of them execute.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDraw {
    pub selected: Vec<TransformInstance>,
    pub executed: Vec<bool>,
}

impl PolicyDraw {
    pub fn into_executed(self) -> Vec<TransformInstance> {
        self.selected
            .into_iter()
            .zip(self.executed)
            .filter_map(|(t, keep)| keep.then_some(t))
            .collect()
    }
}

fn pick(space: &[TransformKind], rng: &mut Rng) -> TransformKind {
    space[rng.random_range(0..space.len())]
}

/// Draw a policy, keeping the pre-retention selection visible.
pub fn sample_policy_detailed(spec: &PolicySpec, rng: &mut Rng) -> Result<PolicyDraw> {
    spec.validate()?;
    let mut selected = Vec::new();
    match spec.variant {
        Variant::RA | Variant::RA23 => {
            let m = spec.m.unwrap();
            for _ in 0..spec.n.unwrap() {
                let kind = pick(spec.search_space(), rng);
                selected.push(TransformInstance::draw(kind, m, rng)?);
            }
        }
        Variant::RRA23 => {
            let (lo, hi) = (spec.m_lo.unwrap(), spec.m_hi.unwrap());
            for _ in 0..spec.n.unwrap() {
                let kind = pick(spec.search_space(), rng);
                let level = rng.random_range(lo..=hi);
                selected.push(TransformInstance::draw(kind, level, rng)?);
            }
        }
        Variant::TRRA => {
            let (lo, hi) = (spec.m_lo.unwrap(), spec.m_hi.unwrap());
            let groups: [(&[TransformKind], u32); 2] = [
                (&TransformKind::COLOR, spec.n_color.unwrap()),
                (&TransformKind::SHAPE, spec.n_shape.unwrap()),
            ];
            for (space, n) in groups {
                for _ in 0..n {
                    let kind = pick(space, rng);
                    let level = rng.random_range(lo..=hi);
                    selected.push(TransformInstance::draw(kind, level, rng)?);
                }
            }
        }
    }
    let executed = match spec.variant {
        Variant::TRRA => {
            let p = spec.p.unwrap();
            selected.iter().map(|_| rng.random::<f64>() < p).collect()
        }
        _ => vec![true; selected.len()],
    };
    Ok(PolicyDraw { selected, executed })
}

/// Instances that execute, in draw order.
pub fn sample_policy(spec: &PolicySpec, rng: &mut Rng) -> Result<Vec<TransformInstance>> {
    Ok(sample_policy_detailed(spec, rng)?.into_executed())
}

pub fn apply_all(img: &Image8, instances: &[TransformInstance]) -> Image8 {
    instances.iter().fold(img.clone(), |acc, t| apply_transform(&acc, t))
}

/// Augment and return the applied instances.
pub fn augment_recorded(img: &Image8, spec: &PolicySpec, rng: &mut Rng) -> Result<(Image8, Vec<TransformInstance>)> {
    let instances = sample_policy(spec, rng)?;
    Ok((apply_all(img, &instances), instances))
}

pub fn augment(img: &Image8, spec: &PolicySpec, rng: &mut Rng) -> Result<Image8> {
    Ok(augment_recorded(img, spec, rng)?.0)
}

pub const GRID_N: std::ops::RangeInclusive<u32> = 1..=8;
pub const GRID_M: [i64; 6] = [5, 10, 15, 20, 25, 30];
pub const GRID_RRA_HI: [i64; 5] = [10, 15, 20, 25, 30];
pub const GRID_TRRA_P: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
/// `n_color + n_shape` for every TRRA grid point.
pub const TRRA_TOTAL: u32 = 7;

/// All grid-search configurations for `variant`, row-major in the order
/// the hyperparameters are listed.
pub fn grid_enumerate(variant: Variant) -> Vec<PolicySpec> {
    match variant {
        Variant::RA | Variant::RA23 => GRID_N
            .flat_map(|n| {
                GRID_M.iter().map(move |&m| match variant {
                    Variant::RA => PolicySpec::ra(n, m),
                    _ => PolicySpec::ra23(n, m),
                })
            })
            .collect(),
        Variant::RRA23 => GRID_N
            .flat_map(|n| GRID_RRA_HI.iter().map(move |&hi| PolicySpec::rra23(n, 5, hi)))
            .collect(),
        Variant::TRRA => (1..TRRA_TOTAL)
            .flat_map(|nc| {
                GRID_TRRA_P
                    .iter()
                    .map(move |&p| PolicySpec::trra(nc, TRRA_TOTAL - nc, 5, 30, p))
            })
            .collect(),
    }
}
