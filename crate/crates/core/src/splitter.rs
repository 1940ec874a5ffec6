//! Subject-level stratified 6:2:2 splitting with demographic balance checks.
//!
//! Each class is shuffled independently and cut at `round(0.6 n)` and
//! `round(0.2 n)`. A split is accepted when every pairwise Welch t-test on
//! age and every 2×2 chi-square test on sex has `p > 0.05`; otherwise the
//! next attempt reshuffles with a freshly derived stream. When retries run
//! out the split with the largest minimum p-value is returned and flagged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, Rng};
use crate::stats::{chi2_p, welch_t_p, TestOutcome};

pub const DEFAULT_MAX_RETRIES: u32 = 100;
pub const SIGNIFICANCE: f64 = 0.05;
pub const MIN_PER_CLASS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: u8,
    pub age: f64,
    pub sex: Sex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBalance {
    pub pair: (Partition, Partition),
    pub age: TestOutcome,
    pub sex: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub pairs: Vec<PairBalance>,
}

impl BalanceReport {
    pub fn min_p(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|p| [p.age.p_value, p.sex.p_value])
            .fold(1.0, f64::min)
    }

    pub fn balanced(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.age.p_value > SIGNIFICANCE && p.sex.p_value > SIGNIFICANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub balance: BalanceReport,
    /// Retries were exhausted without reaching balance.
    pub warning: bool,
    pub attempts: u32,
}

impl SplitResult {
    pub fn members(&self, part: Partition) -> &[String] {
        match part {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    pub fn partition_of(&self, subject_id: &str) -> Option<Partition> {
        Partition::ALL
            .into_iter()
            .find(|&p| self.members(p).binary_search_by(|s| s.as_str().cmp(subject_id)).is_ok())
    }

    /// Item-level assignment inherited from the subject split.
    pub fn assign_items(&self, item_index: &BTreeMap<String, String>) -> Result<ItemSplit> {
        let mut items = ItemSplit::default();
        for (item, subject) in item_index {
            let part = self
                .partition_of(subject)
                .ok_or_else(|| Error::UnknownSubject(subject.clone()))?;
            items.members_mut(part).push(item.clone());
        }
        Ok(items)
    }
}

/// Per-class cut sizes `(train, val, test)`.
pub fn class_sizes(n: usize) -> (usize, usize, usize) {
    let train = (0.6 * n as f64).round() as usize;
    let val = (0.2 * n as f64).round() as usize;
    (train, val, n - train - val)
}

fn validate_roster(roster: &[SubjectRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in roster {
        if !seen.insert(r.subject_id.as_str()) {
            return Err(Error::invalid(format!("duplicate subject id {:?}", r.subject_id)));
        }
        if r.label > 1 {
            return Err(Error::invalid(format!(
                "label {} of {:?} not in {{0, 1}}",
                r.label, r.subject_id
            )));
        }
        if !r.age.is_finite() {
            return Err(Error::NonFinite("age"));
        }
    }
    Ok(())
}

fn balance_of(roster: &HashMap<&str, &SubjectRecord>, parts: [&[String]; 3]) -> BalanceReport {
    let ages = |ids: &[String]| ids.iter().map(|id| roster[id.as_str()].age).collect::<Vec<_>>();
    let sexes = |ids: &[String]| {
        let m = ids.iter().filter(|id| roster[id.as_str()].sex == Sex::M).count() as u64;
        [m, ids.len() as u64 - m]
    };
    let pairs = [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .map(|(i, j)| PairBalance {
            pair: (Partition::ALL[i], Partition::ALL[j]),
            age: welch_t_p(&ages(parts[i]), &ages(parts[j])),
            sex: chi2_p([sexes(parts[i]), sexes(parts[j])]),
        })
        .collect();
    BalanceReport { pairs }
}

pub fn split_subjects(roster: &[SubjectRecord], seed: u64, max_retries: u32) -> Result<SplitResult> {
    validate_roster(roster)?;
    let mut classes: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for r in roster {
        classes[r.label as usize].push(&r.subject_id);
    }
    for (label, members) in classes.iter_mut().enumerate() {
        if members.len() < MIN_PER_CLASS && !members.is_empty() {
            return Err(Error::ClassTooSmall {
                label: label as u8,
                count: members.len(),
            });
        }
        members.sort_unstable();
    }
    if classes.iter().all(|c| c.is_empty()) {
        return Err(Error::ClassTooSmall { label: 0, count: 0 });
    }
    let lookup: HashMap<&str, &SubjectRecord> = roster.iter().map(|r| (r.subject_id.as_str(), r)).collect();

    let mut best: Option<SplitResult> = None;
    for attempt in 0..=max_retries {
        let mut rng = Rng::derive(seed, streams::SPLIT, u64::from(attempt));
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for members in &classes {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let (nt, nv, _) = class_sizes(shuffled.len());
            train.extend(shuffled[..nt].iter().map(|s| s.to_string()));
            val.extend(shuffled[nt..nt + nv].iter().map(|s| s.to_string()));
            test.extend(shuffled[nt + nv..].iter().map(|s| s.to_string()));
        }
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        let balance = balance_of(&lookup, [&train, &val, &test]);
        let balanced = balance.balanced();
        let candidate = SplitResult {
            seed,
            train,
            val,
            test,
            balance,
            warning: !balanced,
            attempts: attempt + 1,
        };
        if balanced {
            return Ok(candidate);
        }
        if best
            .as_ref()
            .is_none_or(|b| candidate.balance.min_p() > b.balance.min_p())
        {
            best = Some(candidate);
        }
    }
    let mut best = best.expect("at least one attempt");
    best.attempts = max_retries + 1;
    Ok(best)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl ItemSplit {
    pub fn members(&self, part: Partition) -> &[String] {
        match part {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    fn members_mut(&mut self, part: Partition) -> &mut Vec<String> {
        match part {
            Partition::Train => &mut self.train,
            Partition::Val => &mut self.val,
            Partition::Test => &mut self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leak {
    pub subject_id: String,
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub leaks: Vec<Leak>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.leaks.is_empty()
    }
}

/// Subjects whose items appear in two or more partitions of `items`.
/// Every item must be in `item_index` and map to a subject of `split`.
pub fn check_leakage(
    split: &SplitResult,
    items: &ItemSplit,
    item_index: &BTreeMap<String, String>,
) -> Result<LeakageReport> {
    let mut seen: BTreeMap<&str, BTreeSet<Partition>> = BTreeMap::new();
    for part in Partition::ALL {
        for item in items.members(part) {
            let subject = item_index.get(item).ok_or_else(|| Error::UnknownItem(item.clone()))?;
            if split.partition_of(subject).is_none() {
                return Err(Error::UnknownSubject(subject.clone()));
            }
            seen.entry(subject.as_str()).or_default().insert(part);
        }
    }
    let leaks = seen
        .into_iter()
        .filter(|(_, parts)| parts.len() > 1)
        .map(|(s, parts)| Leak {
            subject_id: s.to_string(),
            partitions: parts.into_iter().collect(),
        })
        .collect();
    Ok(LeakageReport { leaks })
}

/// Roster CSV with header `subject_id,label,age,sex`.
pub fn read_roster(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["subject_id", "label", "age", "sex"] {
        return Err(Error::Schema(format!(
            "roster header must be subject_id,label,age,sex, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}
