//! Patience-based early stopping on a validation metric (higher is better).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATIENCE: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_metric: Option<f64>,
    /// 1-based epoch of the best metric; 0 before the first update.
    pub best_epoch: u32,
    pub epochs_since_improve: u32,
    pub patience: u32,
    pub epoch: u32,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self::new(DEFAULT_PATIENCE)
    }
}

impl EarlyStopState {
    pub fn new(patience: u32) -> Self {
        Self {
            best_metric: None,
            best_epoch: 0,
            epochs_since_improve: 0,
            patience,
            epoch: 0,
        }
    }

    /// Record one epoch. Returns `true` once `patience` consecutive epochs
    /// have passed without a strict improvement.
    pub fn update(&mut self, metric: f64) -> Result<bool> {
        if !metric.is_finite() {
            return Err(Error::NonFinite("epoch metric"));
        }
        self.epoch += 1;
        if self.best_metric.is_none_or(|best| metric > best) {
            self.best_metric = Some(metric);
            self.best_epoch = self.epoch;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        Ok(self.should_stop())
    }

    pub fn should_stop(&self) -> bool {
        self.epochs_since_improve >= self.patience
    }
}

/// Functional form of [`EarlyStopState::update`].
pub fn early_stop_update(state: &EarlyStopState, metric: f64) -> Result<(EarlyStopState, bool)> {
    let mut next = state.clone();
    let stop = next.update(metric)?;
    Ok((next, stop))
}

/// Feed `metrics` until a stop is signaled; returns the final state and the
/// 1-based stopping epoch, if any.
pub fn replay(patience: u32, metrics: &[f64]) -> Result<(EarlyStopState, Option<u32>)> {
    let mut state = EarlyStopState::new(patience);
    for &m in metrics {
        if state.update(m)? {
            return Ok((state.clone(), Some(state.epoch)));
        }
    }
    Ok((state, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_sequence_stops_at_21() {
        let (state, stop) = replay(20, &[0.8; 30]).unwrap();
        assert_eq!(stop, Some(21));
        assert_eq!(state.best_epoch, 1);
        assert_eq!(state.epochs_since_improve, 20);
    }

    #[test]
    fn increasing_never_stops() {
        let metrics: Vec<f64> = (0..500).map(|i| i as f64 * 1e-3).collect();
        let (state, stop) = replay(20, &metrics).unwrap();
        assert_eq!(stop, None);
        assert_eq!(state.best_epoch, 500);
    }

    #[test]
    fn improvement_resets_counter() {
        let mut metrics = vec![0.5; 19];
        metrics.push(0.6);
        let mut state = EarlyStopState::new(20);
        for (i, &m) in metrics.iter().enumerate() {
            assert!(!state.update(m).unwrap());
            if i == 18 {
                assert_eq!(state.epochs_since_improve, 18);
            }
        }
        assert_eq!(state.epochs_since_improve, 0);
        assert_eq!(state.best_epoch, 20);
    }

    #[test]
    fn functional_update_and_errors() {
        let s = EarlyStopState::new(1);
        let (s, stop) = early_stop_update(&s, 0.3).unwrap();
        assert!(!stop);
        let (_, stop) = early_stop_update(&s, 0.3).unwrap();
        assert!(stop);
        assert!(early_stop_update(&s, f64::NAN).is_err());
    }
}
