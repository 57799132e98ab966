//! Sequential sample filters: coverage, positivity, then ratio trimming.

use serde::{Deserialize, Serialize};

use super::records::{RawRecords, RawUnit};
use crate::error::{PmeError, Result};
use crate::panel::PanelDataset;

fn default_min_t() -> usize {
    20
}

fn default_true() -> bool {
    true
}

fn default_lower() -> f64 {
    1.0
}

fn default_upper() -> f64 {
    99.0
}

/// Drop units whose time-average of `numerator / denominator` falls outside
/// the `[lower_pct, upper_pct]` percentiles across units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTrim {
    pub numerator: String,
    pub denominator: String,
    #[serde(default = "default_lower")]
    pub lower_pct: f64,
    #[serde(default = "default_upper")]
    pub upper_pct: f64,
}

impl RatioTrim {
    pub fn new(numerator: impl Into<String>, denominator: impl Into<String>) -> Self {
        RatioTrim {
            numerator: numerator.into(),
            denominator: denominator.into(),
            lower_pct: default_lower(),
            upper_pct: default_upper(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default = "default_min_t")]
    pub min_t: usize,
    #[serde(default = "default_true")]
    pub require_positive: bool,
    #[serde(default)]
    pub log_transform: bool,
    #[serde(default)]
    pub trim_ratios: Vec<RatioTrim>,
    /// Keep a gapped unit's longest consecutive run instead of dropping it.
    #[serde(default)]
    pub keep_longest_run: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            min_t: default_min_t(),
            require_positive: true,
            log_transform: false,
            trim_ratios: Vec::new(),
            keep_longest_run: false,
        }
    }
}

impl FilterSpec {
    pub fn check(&self) -> Result<()> {
        if self.min_t == 0 {
            return Err(PmeError::Input("min_t must be at least 1".into()));
        }
        if self.log_transform && !self.require_positive {
            return Err(PmeError::Input("log_transform needs require_positive".into()));
        }
        for t in &self.trim_ratios {
            if !(0.0 <= t.lower_pct && t.lower_pct < t.upper_pct && t.upper_pct <= 100.0) {
                return Err(PmeError::Input(format!(
                    "percentiles must satisfy 0 <= lower < upper <= 100, got {} and {}",
                    t.lower_pct, t.upper_pct
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub unit: String,
    /// 1, 2 or 3.
    pub filter: u8,
    pub reason: String,
}

/// Units remaining after each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub input: usize,
    pub after_filter1: usize,
    pub after_filter2: usize,
    pub after_filter3: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub panel: PanelDataset,
    pub exclusions: Vec<Exclusion>,
    pub counts: FilterCounts,
}

/// Percentile by linear interpolation between order statistics of `sorted`.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(start, len)` of the longest consecutive run; the earliest wins ties.
fn longest_run(times: &[i64]) -> (usize, usize) {
    let (mut best, mut start) = ((0, 0), 0);
    for k in 0..times.len() {
        if k > 0 && times[k] != times[k - 1] + 1 {
            start = k;
        }
        if k + 1 - start > best.1 {
            best = (start, k + 1 - start);
        }
    }
    best
}

fn column(records: &RawRecords, name: &str) -> Result<usize> {
    records
        .variable_names
        .iter()
        .position(|v| v == name)
        .ok_or_else(|| PmeError::Input(format!("no variable named {name:?}")))
}

fn filter1(u: &RawUnit, spec: &FilterSpec) -> std::result::Result<RawUnit, String> {
    let gap = u.times.windows(2).position(|w| w[1] != w[0] + 1);
    let unit = match gap {
        Some(k) if !spec.keep_longest_run => {
            return Err(format!("gap after time {}", u.times[k]));
        }
        Some(_) => {
            let (s, len) = longest_run(&u.times);
            RawUnit {
                unit_id: u.unit_id.clone(),
                times: u.times[s..s + len].to_vec(),
                rows: u.rows[s..s + len].to_vec(),
            }
        }
        None => u.clone(),
    };
    if unit.len() < spec.min_t {
        return Err(format!("{} consecutive observations, fewer than {}", unit.len(), spec.min_t));
    }
    Ok(unit)
}

/// Applies filters 1, 2 and 3 in that order; the log transform sits between 2 and 3.
///
/// Ratios for filter 3 use the untransformed values.
pub fn apply_filters(records: &RawRecords, spec: &FilterSpec) -> Result<FilterOutcome> {
    spec.check()?;
    let ratio_cols = spec
        .trim_ratios
        .iter()
        .map(|t| Ok((column(records, &t.numerator)?, column(records, &t.denominator)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut exclusions = Vec::new();
    let mut exclude = |unit: &str, filter: u8, reason: String| {
        exclusions.push(Exclusion {
            unit: unit.to_string(),
            filter,
            reason,
        })
    };

    let mut kept = Vec::new();
    for u in &records.units {
        match filter1(u, spec) {
            Ok(v) => kept.push(v),
            Err(reason) => exclude(&u.unit_id, 1, reason),
        }
    }
    let after1 = kept.len();

    if spec.require_positive {
        kept.retain(|u| {
            let bad = u.rows.iter().zip(&u.times).find_map(|(row, t)| {
                row.iter()
                    .position(|&v| v <= 0.0)
                    .map(|j| format!("non-positive {} at time {t}", records.variable_names[j]))
            });
            match bad {
                Some(reason) => {
                    exclude(&u.unit_id, 2, reason);
                    false
                }
                None => true,
            }
        });
    }
    let after2 = kept.len();

    // unit-level mean ratios, one column per trim rule
    let ratios: Vec<Vec<f64>> = kept
        .iter()
        .map(|u| {
            ratio_cols
                .iter()
                .map(|&(a, b)| u.rows.iter().map(|r| r[a] / r[b]).sum::<f64>() / u.len() as f64)
                .collect()
        })
        .collect();
    let mut bounds = Vec::new();
    for (k, t) in spec.trim_ratios.iter().enumerate() {
        let mut xs: Vec<f64> = ratios.iter().map(|r| r[k]).filter(|x| x.is_finite()).collect();
        xs.sort_by(f64::total_cmp);
        bounds.push(if xs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (percentile(&xs, t.lower_pct), percentile(&xs, t.upper_pct))
        });
    }
    let mut survivors = Vec::new();
    for (u, r) in kept.into_iter().zip(&ratios) {
        let out = spec.trim_ratios.iter().enumerate().find_map(|(k, t)| {
            let (lo, hi) = bounds[k];
            let x = r[k];
            let name = format!("{}/{}", t.numerator, t.denominator);
            if !x.is_finite() {
                Some(format!("mean {name} is not finite"))
            } else if x < lo || x > hi {
                Some(format!("mean {name} = {x} outside [{lo}, {hi}]"))
            } else {
                None
            }
        });
        match out {
            Some(reason) => exclude(&u.unit_id, 3, reason),
            None => survivors.push(u),
        }
    }
    let after3 = survivors.len();
    if survivors.is_empty() {
        return Err(PmeError::Input("no units survive the filters".into()));
    }
    if spec.log_transform {
        for u in &mut survivors {
            for row in &mut u.rows {
                for v in row.iter_mut() {
                    *v = v.ln();
                }
            }
        }
    }
    let panel = RawRecords {
        variable_names: records.variable_names.clone(),
        units: survivors,
    }
    .to_panel()?;
    Ok(FilterOutcome {
        panel,
        exclusions,
        counts: FilterCounts {
            input: records.units.len(),
            after_filter1: after1,
            after_filter2: after2,
            after_filter3: after3,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(id: &str, times: Vec<i64>, f: impl Fn(i64) -> Vec<f64>) -> RawUnit {
        RawUnit {
            unit_id: id.into(),
            rows: times.iter().map(|&t| f(t)).collect(),
            times,
        }
    }

    fn recs(units: Vec<RawUnit>) -> RawRecords {
        RawRecords {
            variable_names: vec!["x".into(), "y".into()],
            units,
        }
    }

    fn no_trim() -> FilterSpec {
        FilterSpec::default()
    }

    #[test]
    fn short_unit_fails_filter1() {
        let r = recs(vec![
            unit("short", (1..=19).collect(), |_| vec![1.0, 1.0]),
            unit("ok", (1..=20).collect(), |_| vec![1.0, 1.0]),
        ]);
        let out = apply_filters(&r, &no_trim()).unwrap();
        assert_eq!(out.panel.n(), 1);
        assert_eq!(out.exclusions.len(), 1);
        assert_eq!(out.exclusions[0].unit, "short");
        assert_eq!(out.exclusions[0].filter, 1);
    }

    #[test]
    fn gaps_drop_or_truncate() {
        let mut times: Vec<i64> = (1..=5).collect();
        times.extend(10..=34);
        let r = recs(vec![unit("g", times, |_| vec![1.0, 2.0])]);
        assert!(apply_filters(&r, &no_trim()).is_err());
        let spec = FilterSpec {
            keep_longest_run: true,
            ..no_trim()
        };
        let out = apply_filters(&r, &spec).unwrap();
        assert_eq!(out.panel.units()[0].times(), &(10..=34).collect::<Vec<_>>()[..]);
        assert_eq!(longest_run(&[1, 2, 4, 5, 7]), (0, 2));
    }

    #[test]
    fn zero_fails_filter2() {
        let r = recs(vec![
            unit("z", (1..=20).collect(), |t| vec![if t == 7 { 0.0 } else { 1.0 }, 1.0]),
            unit("ok", (1..=20).collect(), |_| vec![1.0, 1.0]),
        ]);
        let out = apply_filters(&r, &no_trim()).unwrap();
        assert_eq!(out.exclusions[0].unit, "z");
        assert_eq!(out.exclusions[0].filter, 2);
        assert!(out.exclusions[0].reason.contains("time 7"));
        let spec = FilterSpec {
            require_positive: false,
            ..no_trim()
        };
        assert_eq!(apply_filters(&r, &spec).unwrap().panel.n(), 2);
    }

    #[test]
    fn log_after_filter2() {
        let r = recs(vec![unit("a", (1..=20).collect(), |t| vec![(t as f64).exp(), 1.0])]);
        let spec = FilterSpec {
            log_transform: true,
            ..no_trim()
        };
        let out = apply_filters(&r, &spec).unwrap();
        let v = out.panel.units()[0].values();
        assert!((v[(4, 0)] - 5.0).abs() < 1e-12);
        assert_eq!(v[(4, 1)], 0.0);
        let bad = FilterSpec {
            log_transform: true,
            require_positive: false,
            ..no_trim()
        };
        assert!(apply_filters(&r, &bad).is_err());
    }

    #[test]
    fn planted_outliers_are_trimmed() {
        // ratios 1.00, 1.01, ..., 1.97 plus one tiny and one huge unit
        let mut units: Vec<RawUnit> = (0..98)
            .map(|k| unit(&format!("u{k}"), (1..=20).collect(), move |_| vec![1.0 + k as f64 / 100.0, 1.0]))
            .collect();
        units.insert(40, unit("low", (1..=20).collect(), |_| vec![1e-3, 1.0]));
        units.push(unit("high", (1..=20).collect(), |_| vec![50.0, 1.0]));
        let spec = FilterSpec {
            trim_ratios: vec![RatioTrim::new("x", "y")],
            ..no_trim()
        };
        let out = apply_filters(&recs(units.clone()), &spec).unwrap();
        let mut dropped: Vec<&str> = out.exclusions.iter().map(|e| e.unit.as_str()).collect();
        dropped.sort();
        assert_eq!(dropped, vec!["high", "low"]);
        assert!(out.exclusions.iter().all(|e| e.filter == 3));
        assert_eq!(out.counts.after_filter3, 98);

        // sort-based oracle for the cut-offs
        let mut xs: Vec<f64> = units.iter().map(|u| u.rows[0][0]).collect();
        xs.sort_by(f64::total_cmp);
        let lo = xs[0] + 0.99 * (xs[1] - xs[0]);
        let hi = xs[98] + 0.01 * (xs[99] - xs[98]);
        assert!((percentile(&xs, 1.0) - lo).abs() < 1e-12);
        assert!((percentile(&xs, 99.0) - hi).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_spec() {
        let r = recs(vec![unit("a", (1..=20).collect(), |_| vec![1.0, 1.0])]);
        let mut t = RatioTrim::new("x", "y");
        t.lower_pct = 50.0;
        t.upper_pct = 50.0;
        let spec = FilterSpec {
            trim_ratios: vec![t],
            ..no_trim()
        };
        assert!(apply_filters(&r, &spec).is_err());
        let spec = FilterSpec {
            trim_ratios: vec![RatioTrim::new("x", "nope")],
            ..no_trim()
        };
        assert!(apply_filters(&r, &spec).is_err());
    }

    proptest! {
        #[test]
        fn filters_one_and_two_are_idempotent(
            lens in prop::collection::vec(5usize..30, 1..12),
            zeros in prop::collection::vec(any::<bool>(), 12),
            gaps in prop::collection::vec(any::<bool>(), 12),
            keep in any::<bool>(),
        ) {
            let units: Vec<RawUnit> = lens.iter().enumerate().map(|(k, &len)| {
                let mut times: Vec<i64> = (0..len as i64).collect();
                if gaps[k] { for t in times.iter_mut().skip(len / 2) { *t += 3; } }
                let z = zeros[k];
                unit(&format!("u{k}"), times, move |t| vec![if z && t == 2 { 0.0 } else { 1.0 + t as f64 }, 2.0])
            }).collect();
            let spec = FilterSpec { min_t: 8, keep_longest_run: keep, ..no_trim() };
            if let Ok(once) = apply_filters(&recs(units), &spec) {
                let twice = apply_filters(&RawRecords::from_panel(&once.panel), &spec).unwrap();
                prop_assert_eq!(&twice.panel, &once.panel);
                prop_assert!(twice.exclusions.is_empty());
            }
        }

        #[test]
        fn percentile_is_monotone_and_bounded(mut xs in prop::collection::vec(-1e6f64..1e6, 1..50), a in 0.0f64..100.0, b in 0.0f64..100.0) {
            xs.sort_by(f64::total_cmp);
            let (p, q) = if a < b { (a, b) } else { (b, a) };
            let (x, y) = (percentile(&xs, p), percentile(&xs, q));
            prop_assert!(x <= y);
            prop_assert!(xs[0] <= x && y <= xs[xs.len() - 1]);
        }
    }
}
