//! Outlier removal based on the median absolute deviation.
//!
//! Each reading is compared against the median of its neighbourhood
//! (`window` readings on either side, gaps skipped). The residuals are then
//! scaled by their own MAD and anything further than `mad_k` MADs from the
//! residual median is dropped. Using a local median means sustained level
//! changes, such as a replica going from idle to busy, produce no residual
//! and survive; isolated spikes do not. When more than half of the
//! residuals coincide the MAD is zero and the mean absolute deviation is
//! used as the scale instead. A reading must also differ from its
//! neighbourhood by more than the median level of the whole series, so a
//! step at either end of a series, where only one side of the neighbourhood
//! exists, is not mistaken for a spike.

use serde::{Deserialize, Serialize};

use super::resample::{Point, Series};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleaningMethod {
    #[default]
    Mad,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningConfig {
    #[serde(default)]
    pub method: CleaningMethod,
    #[serde(default = "default_mad_k")]
    pub mad_k: f64,
    /// Seconds a reading may be carried forward over a gap.
    #[serde(default = "default_max_gap_fill")]
    pub max_gap_fill: u64,
    /// Neighbours on each side used for the local median.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_mad_k() -> f64 {
    5.0
}
fn default_max_gap_fill() -> u64 {
    3
}
fn default_window() -> usize {
    3
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            method: CleaningMethod::Mad,
            mad_k: default_mad_k(),
            max_gap_fill: default_max_gap_fill(),
            window: default_window(),
        }
    }
}

impl CleaningConfig {
    pub fn none() -> Self {
        CleaningConfig {
            method: CleaningMethod::None,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mad_k.is_finite() && self.mad_k > 0.0) {
            return Err("mad_k > 0".into());
        }
        if self.window == 0 {
            return Err("window ≥ 1".into());
        }
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Replaces outliers with [`Point::Missing`]; returns the cleaned series and
/// how many readings were removed.
pub fn clean(series: &Series, config: &CleaningConfig) -> (Series, usize) {
    if config.method == CleaningMethod::None {
        return (series.clone(), 0);
    }
    let present: Vec<(usize, f64)> = series
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.value().map(|v| (i, v)))
        .collect();
    if present.len() < 3 {
        return (series.clone(), 0);
    }
    let w = config.window;
    let residuals: Vec<f64> = (0..present.len())
        .map(|j| {
            let lo = j.saturating_sub(w);
            let hi = (j + w + 1).min(present.len());
            let mut neigh: Vec<f64> = present[lo..hi].iter().map(|(_, v)| *v).collect();
            let m = median(&mut neigh).unwrap_or(present[j].1);
            present[j].1 - m
        })
        .collect();
    let center = median(&mut residuals.clone()).unwrap_or(0.0);
    let mut dev: Vec<f64> = residuals.iter().map(|r| (r - center).abs()).collect();
    let mut mad = median(&mut dev).unwrap_or(0.0);
    if mad == 0.0 {
        // more than half the residuals are identical; fall back to the mean
        // absolute deviation, rescaled to agree with the MAD on normal data
        mad = dev.iter().sum::<f64>() / dev.len() as f64 * (1.253314 / 1.4826);
    }
    let mut levels: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
    let level = median(&mut levels).unwrap_or(0.0);
    let limit = (config.mad_k * mad).max(level.abs());

    let mut out = series.clone();
    let mut removed = 0;
    for ((idx, _), r) in present.iter().zip(&residuals) {
        if (r - center).abs() > limit {
            out.points[*idx] = Point::Missing;
            removed += 1;
        }
    }
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::resample::Grid;

    fn series(vals: &[f64]) -> Series {
        Series {
            grid: Grid::new(0, vals.len() as i64),
            points: vals.iter().map(|v| Point::Observed(*v)).collect(),
        }
    }

    /// Direct global median/MAD computation, no windowing.
    fn global_mad_outliers(vals: &[f64], k: f64) -> Vec<usize> {
        let mut v = vals.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let med = v[v.len() / 2];
        let mut d: Vec<f64> = vals.iter().map(|x| (x - med).abs()).collect();
        d.sort_by(|a, b| a.total_cmp(b));
        let mad = d[d.len() / 2];
        vals.iter()
            .enumerate()
            .filter(|(_, x)| (*x - med).abs() > k * mad)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn constant_series_is_untouched() {
        let s = series(&[4.0; 20]);
        let (out, removed) = clean(&s, &CleaningConfig::default());
        assert_eq!(removed, 0);
        assert_eq!(out, s);
    }

    #[test]
    fn single_spike_is_removed() {
        let mut vals = vec![1.0; 10];
        vals.push(10_000.0);
        let oracle = global_mad_outliers(&vals, 5.0);
        assert_eq!(oracle, vec![10]);
        let (out, removed) = clean(&series(&vals), &CleaningConfig::default());
        assert_eq!(removed, 1);
        assert_eq!(out.points[10], Point::Missing);
        assert!(out.points[..10].iter().all(|p| p.is_observed()));
    }

    #[test]
    fn method_none_is_identity() {
        let mut vals = vec![1.0; 10];
        vals.push(10_000.0);
        let s = series(&vals);
        let (out, removed) = clean(&s, &CleaningConfig::none());
        assert_eq!(removed, 0);
        assert_eq!(out, s);
    }

    #[test]
    fn level_shift_survives() {
        // idle for 30 s, busy for 8 s, idle again: the busy stretch is real
        let mut vals = vec![12.5; 30];
        vals.extend(std::iter::repeat_n(20.0, 8));
        vals.extend(std::iter::repeat_n(12.5, 30));
        let (_, removed) = clean(&series(&vals), &CleaningConfig::default());
        assert_eq!(removed, 0);
    }

    #[test]
    fn steps_at_the_edges_survive() {
        // load starts in the first second and halves in the last one
        let mut vals = vec![4.0, 10.2, 11.6, 13.0];
        vals.extend(std::iter::repeat_n(30.0, 40));
        vals.push(15.6);
        let (_, removed) = clean(&series(&vals), &CleaningConfig::default());
        assert_eq!(removed, 0);
    }

    #[test]
    fn spike_on_a_varying_series_is_removed() {
        let mut vals: Vec<f64> = (0..60).map(|i| 10.0 + (i % 20) as f64).collect();
        vals[30] = 5_000.0;
        let (out, removed) = clean(&series(&vals), &CleaningConfig::default());
        assert_eq!(removed, 1);
        assert_eq!(out.points[30], Point::Missing);
    }

    #[test]
    fn simulator_power_series_lose_at_most_a_tenth() {
        use crate::model::{DocFormat, WorkloadShape, WorkloadSpec};
        use crate::simulator::{run_sim, SimTopology};
        use crate::workloads::{build_schedule, Scenario};

        let text = include_str!("../../demo/microservices.toml");
        let topo = SimTopology::from_value(DocFormat::Toml.parse(text).unwrap()).unwrap();
        for seed in 1..=5 {
            let schedule = build_schedule(&WorkloadSpec {
                name: "stress".into(),
                shape: WorkloadShape::Stress,
                duration: 120,
                peak_users: 120,
                fixed_request_count: None,
                seed,
                think_time: 0.5,
                ramp_exclusion: 0,
            })
            .unwrap();
            let (trace, _) = run_sim(&topo, &schedule, &Scenario::default(), seed, 10);
            let grid = Grid::new(trace.start, trace.end);
            for tl in trace.timelines(grid) {
                let s = Series {
                    grid,
                    points: tl
                        .watts
                        .iter()
                        .map(|w| w.map_or(Point::Missing, Point::Observed))
                        .collect(),
                };
                let n = s.observed_count();
                let (_, removed) = clean(&s, &CleaningConfig::default());
                assert!(removed * 10 <= n, "{}: {removed} of {n}", tl.replica);
            }
        }
    }

    #[test]
    fn gaps_are_skipped_when_building_neighbourhoods() {
        let mut s = series(&[5.0, 5.0, 5.0, 5.0, 900.0, 5.0, 5.0, 5.0]);
        s.points[3] = Point::Missing;
        let (out, removed) = clean(&s, &CleaningConfig::default());
        assert_eq!(removed, 1);
        assert_eq!(out.points[4], Point::Missing);
        assert_eq!(out.points[3], Point::Missing);
    }
}
