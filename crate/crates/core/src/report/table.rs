use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::MetricsReport;

/// Columns of the comparison, in display order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Wr,
    Ro,
    Ru,
    Re,
    Ac,
    Tc,
    Consumed,
    CostPerKilo,
    Fr,
    LatP50,
    LatP95,
    Rqs,
    SutEnergy,
    OverheadEnergy,
}

pub const ALL_METRICS: [Metric; 14] = [
    Metric::Wr,
    Metric::Ro,
    Metric::Ru,
    Metric::Re,
    Metric::Ac,
    Metric::Tc,
    Metric::Consumed,
    Metric::CostPerKilo,
    Metric::Fr,
    Metric::LatP50,
    Metric::LatP95,
    Metric::Rqs,
    Metric::SutEnergy,
    Metric::OverheadEnergy,
];

impl Metric {
    pub fn key(self) -> &'static str {
        match self {
            Metric::Wr => "wr",
            Metric::Ro => "ro",
            Metric::Ru => "ru",
            Metric::Re => "re",
            Metric::Ac => "ac",
            Metric::Tc => "tc",
            Metric::Consumed => "consumed_cost",
            Metric::CostPerKilo => "cost_per_kilorequest",
            Metric::Fr => "fr",
            Metric::LatP50 => "lat_p50",
            Metric::LatP95 => "lat_p95",
            Metric::Rqs => "rqs",
            Metric::SutEnergy => "total_sut_energy",
            Metric::OverheadEnergy => "total_overhead_energy",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Ru | Metric::Rqs)
    }

    pub fn of(self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::Wr => r.wr,
            Metric::Ro => r.ro,
            Metric::Ru => r.ru,
            Metric::Re => Some(r.re),
            Metric::Ac => Some(r.ac),
            Metric::Tc => Some(r.tc),
            Metric::Consumed => Some(r.consumed_cost),
            Metric::CostPerKilo => r.cost_per_kilorequest,
            Metric::Fr => r.fr,
            Metric::LatP50 => r.lat_p50,
            Metric::LatP95 => r.lat_p95,
            Metric::Rqs => Some(r.rqs),
            Metric::SutEnergy => Some(r.total_sut_energy),
            Metric::OverheadEnergy => Some(r.total_overhead_energy),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ALL_METRICS
            .iter()
            .find(|m| m.key() == s)
            .copied()
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Mean and range over repetitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: u32,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        Some(Stat {
            n: values.len() as u32,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Best,
    Worst,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Best => "best",
            Mark::Worst => "worst",
        }
    }
}

/// Best and worst variant of one (workload, metric) column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMarks {
    pub best: String,
    pub worst: String,
    /// Whether `best` shares its mean with another variant.
    pub best_tie: bool,
    pub worst_tie: bool,
}

pub type ColumnKey = (String, Metric);

/// Variants × (workload, metric), aggregated over repetitions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonTable {
    /// Row order.
    pub variants: Vec<String>,
    /// Column-group order.
    pub workloads: Vec<String>,
    pub cells: BTreeMap<(String, String, Metric), Stat>,
    pub marks: BTreeMap<ColumnKey, ColumnMarks>,
}

/// Per-cell input of [`ComparisonTable::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub variant: String,
    pub workload: String,
    pub repetition: u32,
    pub report: MetricsReport,
}

impl ComparisonTable {
    pub fn build(variants: &[String], workloads: &[String], reports: &[CellReport]) -> Self {
        let mut values: BTreeMap<(String, String, Metric), Vec<f64>> = BTreeMap::new();
        for r in reports {
            for m in ALL_METRICS {
                if let Some(v) = m.of(&r.report) {
                    values
                        .entry((r.variant.clone(), r.workload.clone(), m))
                        .or_default()
                        .push(v);
                }
            }
        }
        let mut t = ComparisonTable {
            variants: variants.to_vec(),
            workloads: workloads.to_vec(),
            cells: values
                .into_iter()
                .filter_map(|(k, v)| Stat::of(&v).map(|s| (k, s)))
                .collect(),
            marks: BTreeMap::new(),
        };
        t.mark();
        t
    }

    /// Builds a table straight from column values, one repetition each.
    pub fn from_values(
        workload: &str,
        metric: Metric,
        values: &[(&str, f64)],
    ) -> Self {
        let mut t = ComparisonTable {
            variants: values.iter().map(|(v, _)| v.to_string()).collect(),
            workloads: vec![workload.to_string()],
            ..Default::default()
        };
        for (v, x) in values {
            t.cells.insert(
                (v.to_string(), workload.to_string(), metric),
                Stat::of(&[*x]).expect("one value"),
            );
        }
        t.mark();
        t
    }

    pub fn get(&self, variant: &str, workload: &str, metric: Metric) -> Option<&Stat> {
        self.cells
            .get(&(variant.to_string(), workload.to_string(), metric))
    }

    pub fn mark_of(&self, variant: &str, workload: &str, metric: Metric) -> Option<(Mark, bool)> {
        let m = self.marks.get(&(workload.to_string(), metric))?;
        if m.best == variant {
            Some((Mark::Best, m.best_tie))
        } else if m.worst == variant {
            Some((Mark::Worst, m.worst_tie))
        } else {
            None
        }
    }

    /// Recomputes the marks. Variants are ranked by mean, best first;
    /// equal means rank by variant name.
    pub fn mark(&mut self) {
        self.marks.clear();
        for w in &self.workloads {
            for m in ALL_METRICS {
                let mut ranked: Vec<(&String, f64)> = self
                    .variants
                    .iter()
                    .filter_map(|v| self.get(v, w, m).map(|s| (v, s.mean)))
                    .collect();
                if ranked.len() < 2 {
                    continue;
                }
                ranked.sort_by(|a, b| {
                    let by_value = if m.higher_is_better() {
                        b.1.total_cmp(&a.1)
                    } else {
                        a.1.total_cmp(&b.1)
                    };
                    by_value.then_with(|| a.0.cmp(b.0))
                });
                let (best, bv) = ranked[0];
                let (worst, wv) = ranked[ranked.len() - 1];
                let ties = |x: f64| ranked.iter().filter(|(_, v)| *v == x).count() > 1;
                self.marks.insert(
                    (w.clone(), m),
                    ColumnMarks {
                        best: best.clone(),
                        worst: worst.clone(),
                        best_tie: ties(bv),
                        worst_tie: ties(wv),
                    },
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_variant_gets_no_marks() {
        let t = ComparisonTable::from_values("pausing", Metric::Fr, &[("monolith", 0.0089)]);
        assert!(t.marks.is_empty());
    }

    #[test]
    fn equal_values_rank_by_name_and_flag_the_tie() {
        let t = ComparisonTable::from_values("w", Metric::Wr, &[("beta", 2.0), ("alpha", 2.0)]);
        let m = &t.marks[&("w".to_string(), Metric::Wr)];
        assert_eq!(m.best, "alpha");
        assert_eq!(m.worst, "beta");
        assert!(m.best_tie && m.worst_tie);
    }

    #[test]
    fn higher_is_better_for_utilization_and_throughput() {
        let t = ComparisonTable::from_values("w", Metric::Ru, &[("a", 0.2), ("b", 0.6)]);
        assert_eq!(t.marks[&("w".to_string(), Metric::Ru)].best, "b");
        let t = ComparisonTable::from_values("w", Metric::LatP95, &[("a", 0.2), ("b", 0.6)]);
        assert_eq!(t.marks[&("w".to_string(), Metric::LatP95)].best, "a");
    }

    #[test]
    fn repetitions_aggregate_to_mean_and_range() {
        let rep = |v: &str, r: u32, fr: f64| CellReport {
            variant: v.into(),
            workload: "w".into(),
            repetition: r,
            report: MetricsReport {
                fr: Some(fr),
                ..Default::default()
            },
        };
        let t = ComparisonTable::build(
            &["a".into()],
            &["w".into()],
            &[rep("a", 1, 0.1), rep("a", 2, 0.3)],
        );
        let s = t.get("a", "w", Metric::Fr).unwrap();
        assert_eq!((s.n, s.min, s.max), (2, 0.1, 0.3));
        assert!((s.mean - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn marks_reference_distinct_existing_cells(
            values in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 2.5, 7.0]), 2..6),
        ) {
            let names: Vec<String> = (0..values.len()).map(|i| format!("v{i}")).collect();
            let pairs: Vec<(&str, f64)> = names.iter().map(String::as_str).zip(values.iter().copied()).collect();
            let t = ComparisonTable::from_values("w", Metric::Wr, &pairs);
            let m = &t.marks[&("w".to_string(), Metric::Wr)];
            prop_assert!(m.best != m.worst);
            let best = t.get(&m.best, "w", Metric::Wr).unwrap().mean;
            let worst = t.get(&m.worst, "w", Metric::Wr).unwrap().mean;
            for v in &values {
                prop_assert!(best <= *v && *v <= worst);
            }
        }
    }
}
