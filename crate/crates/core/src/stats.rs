//! Two-sided balance tests used by the splitter.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Preconditions did not hold; `p_value` is reported as 1.0.
    pub degenerate: bool,
}

impl TestOutcome {
    fn degenerate() -> Self {
        Self {
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch–Satterthwaite degrees of freedom and t statistic.
pub fn welch_t(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 || !se2.is_finite() {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Some((t, df))
}

/// Two-sided Welch t-test p-value.
pub fn welch_t_p(a: &[f64], b: &[f64]) -> TestOutcome {
    match welch_t(a, b) {
        None => TestOutcome::degenerate(),
        Some((t, df)) => {
            let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
            TestOutcome {
                statistic: t,
                p_value: (2.0 * dist.sf(t.abs())).min(1.0),
                degenerate: false,
            }
        }
    }
}

/// Pearson chi-square test of independence on a 2×2 table, 1 d.f., no
/// continuity correction.
pub fn chi2_p(counts: [[u64; 2]; 2]) -> TestOutcome {
    let rows = [counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]];
    let cols = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return TestOutcome::degenerate();
    }
    let n = (rows[0] + rows[1]) as f64;
    let mut stat = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            stat += (obs as f64 - expected).powi(2) / expected;
        }
    }
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    TestOutcome {
        statistic: stat,
        p_value: dist.sf(stat).min(1.0),
        degenerate: false,
    }
}
