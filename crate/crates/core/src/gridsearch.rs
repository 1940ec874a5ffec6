//! Grid-search harness: emits one config file per grid point and ranks
//! configs by externally produced validation accuracy.
//!
//! Selection only ever reads validation metrics. Metric files must have the
//! header `config_id,val_accuracy`; any column naming test data is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{grid_enumerate, PolicySpec, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub id: String,
    pub label: String,
    pub policy: PolicySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub config_id: String,
    pub label: String,
    pub val_accuracy: f64,
    pub winner: bool,
}

pub fn grid_configs(variant: Variant) -> Vec<GridConfig> {
    grid_enumerate(variant)
        .into_iter()
        .enumerate()
        .map(|(i, policy)| GridConfig {
            id: format!("{}_{:03}", variant.as_str(), i + 1),
            label: policy.label(),
            policy,
        })
        .collect()
}

/// Write `<id>.json` per config plus a `grid.json` index.
pub fn emit_grid(variant: Variant, out_dir: impl AsRef<Path>) -> Result<Vec<GridConfig>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let configs = grid_configs(variant);
    for c in &configs {
        let path = dir.join(format!("{}.json", c.id));
        fs::write(&path, serde_json::to_vec_pretty(c)?).map_err(|e| Error::io(&path, e))?;
    }
    let index = dir.join("grid.json");
    fs::write(&index, serde_json::to_vec_pretty(&configs)?).map_err(|e| Error::io(&index, e))?;
    Ok(configs)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Vec<GridConfig>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    config_id: String,
    val_accuracy: f64,
}

/// Read validation metric rows from CSV files.
pub fn read_val_metrics<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<(String, f64)>> {
    let mut rows = Vec::new();
    for path in paths {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_ascii_lowercase())
            .collect();
        if headers.iter().any(|h| h.contains("test")) {
            return Err(Error::Schema(format!(
                "{}: test metrics cannot be used for selection",
                path.as_ref().display()
            )));
        }
        if headers != ["config_id", "val_accuracy"] {
            return Err(Error::Schema(format!(
                "{}: metric header must be config_id,val_accuracy, got {}",
                path.as_ref().display(),
                headers.join(",")
            )));
        }
        for row in reader.deserialize::<MetricRow>() {
            let row = row?;
            rows.push((row.config_id, row.val_accuracy));
        }
    }
    Ok(rows)
}

/// Rank configs by validation accuracy, descending; ties go to the config
/// listed first in the grid.
pub fn rank(configs: &[GridConfig], val_metrics: &[(String, f64)]) -> Result<Vec<RankedRow>> {
    let order: BTreeMap<&str, usize> = configs.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    if order.len() != configs.len() {
        return Err(Error::Schema("duplicate config id in grid".into()));
    }
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, v) in val_metrics {
        if !order.contains_key(id.as_str()) {
            return Err(Error::Schema(format!("unknown config id {id:?}")));
        }
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Schema(format!("val_accuracy {v} for {id:?} outside [0, 1]")));
        }
        if acc.insert(id.as_str(), *v).is_some() {
            return Err(Error::Schema(format!("duplicate metric for config {id:?}")));
        }
    }
    if let Some(missing) = configs.iter().find(|c| !acc.contains_key(c.id.as_str())) {
        return Err(Error::Schema(format!("missing metric for config {:?}", missing.id)));
    }
    let mut ranked: Vec<&GridConfig> = configs.iter().collect();
    ranked.sort_by(|a, b| {
        acc[b.id.as_str()]
            .total_cmp(&acc[a.id.as_str()])
            .then(order[a.id.as_str()].cmp(&order[b.id.as_str()]))
    });
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedRow {
            rank: i + 1,
            config_id: c.id.clone(),
            label: c.label.clone(),
            val_accuracy: acc[c.id.as_str()],
            winner: i == 0,
        })
        .collect())
}

pub fn write_ranked(path: impl AsRef<Path>, rows: &[RankedRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics_for(configs: &[GridConfig]) -> Vec<(String, f64)> {
        configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), 0.5 + (i * 7 % 36) as f64 / 100.0))
            .collect()
    }

    #[test]
    fn trra_emits_36_files() {
        let dir = tempfile::tempdir().unwrap();
        let configs = emit_grid(Variant::TRRA, dir.path()).unwrap();
        assert_eq!(configs.len(), 36);
        let files = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 37);
        assert_eq!(read_grid(dir.path().join("grid.json")).unwrap(), configs);
        let one: GridConfig = serde_json::from_slice(&fs::read(dir.path().join("TRRA_001.json")).unwrap()).unwrap();
        assert_eq!(one.policy, PolicySpec::trra(1, 6, 5, 30, 0.1));
    }

    #[test]
    fn ranking_picks_best() {
        let configs = grid_configs(Variant::RRA23);
        let mut m = metrics_for(&configs);
        m[17].1 = 0.99;
        let ranked = rank(&configs, &m).unwrap();
        assert_eq!(ranked.len(), 40);
        assert_eq!(ranked[0].config_id, configs[17].id);
        assert!(ranked[0].winner && !ranked[1].winner);
        assert!(ranked.windows(2).all(|w| w[0].val_accuracy >= w[1].val_accuracy));
    }

    #[test]
    fn ranking_errors() {
        let configs = grid_configs(Variant::TRRA);
        let m = metrics_for(&configs);
        assert!(rank(&configs, &m[1..]).is_err());
        let mut dup = m.clone();
        dup.push(m[0].clone());
        assert!(rank(&configs, &dup).is_err());
        let mut unknown = m.clone();
        unknown[0].0 = "RA_999".into();
        assert!(rank(&configs, &unknown).is_err());
    }

    #[test]
    fn test_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "config_id,test_accuracy\nTRRA_001,0.9\n").unwrap();
        assert!(matches!(read_val_metrics(&[&p]), Err(Error::Schema(m)) if m.contains("test")));
        fs::write(&p, "config_id,val_accuracy\nTRRA_001,0.9\n").unwrap();
        assert_eq!(read_val_metrics(&[&p]).unwrap(), vec![("TRRA_001".to_string(), 0.9)]);
    }
}
