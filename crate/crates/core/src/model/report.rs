use serde::{Deserialize, Serialize};

use super::number::fmt_sig;
use super::ModelError;

/// The per-run metric set for one (variant, workload, repetition) cell.
///
/// Energies are joules, costs are in the cost book's currency except
/// `cost_per_kilorequest`, which is in hundredths of that currency.
/// Metrics that are undefined for a run (no successful requests, no energy
/// data) are `None` and serialize as `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wr: Option<f64>,
    pub ro: Option<f64>,
    /// overhead / sut, unbounded.
    pub overhead_ratio_raw: Option<f64>,
    pub ru: Option<f64>,
    pub re: f64,
    pub ac: f64,
    pub tc: f64,
    pub consumed_cost: f64,
    pub cost_per_kilorequest: Option<f64>,
    pub fr: Option<f64>,
    pub rqs: f64,
    pub lat_p50: Option<f64>,
    pub lat_p95: Option<f64>,
    pub successful_requests: u64,
    pub total_requests: u64,
    pub total_sut_energy: f64,
    pub total_overhead_energy: f64,
    pub energy_coverage: f64,
    pub removed_outliers: u64,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [("ro", self.ro), ("ru", self.ru), ("fr", self.fr)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::Invariant(format!("{name} must lie in [0, 1]")));
                }
            }
        }
        let energies = [
            self.wr.unwrap_or(0.0),
            self.re,
            self.ac,
            self.total_sut_energy,
            self.total_overhead_energy,
        ];
        if energies.iter().any(|e| *e < 0.0 || !e.is_finite()) {
            return Err(ModelError::Invariant("energies must be finite and ≥ 0".into()));
        }
        if self.successful_requests > self.total_requests {
            return Err(ModelError::Invariant(
                "successful_requests ≤ total_requests".into(),
            ));
        }
        Ok(())
    }

    /// Flat JSON object, keys in declaration order, numbers rounded to six
    /// significant digits in plain decimal notation.
    pub fn to_json(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| fmt_sig(x, 6)).unwrap_or_else(|| "null".into());
        let num = |v: f64| fmt_sig(v, 6);
        let fields: Vec<(&str, String)> = vec![
            ("wr", opt(self.wr)),
            ("ro", opt(self.ro)),
            ("overhead_ratio_raw", opt(self.overhead_ratio_raw)),
            ("ru", opt(self.ru)),
            ("re", num(self.re)),
            ("ac", num(self.ac)),
            ("tc", num(self.tc)),
            ("consumed_cost", num(self.consumed_cost)),
            ("cost_per_kilorequest", opt(self.cost_per_kilorequest)),
            ("fr", opt(self.fr)),
            ("rqs", num(self.rqs)),
            ("lat_p50", opt(self.lat_p50)),
            ("lat_p95", opt(self.lat_p95)),
            ("successful_requests", self.successful_requests.to_string()),
            ("total_requests", self.total_requests.to_string()),
            ("total_sut_energy", num(self.total_sut_energy)),
            ("total_overhead_energy", num(self.total_overhead_energy)),
            ("energy_coverage", num(self.energy_coverage)),
            ("removed_outliers", self.removed_outliers.to_string()),
        ];
        let mut out = String::from("{\n");
        for (i, (k, v)) in fields.iter().enumerate() {
            out.push_str(&format!("  \"{k}\": {v}"));
            out.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_has_no_scientific_notation_and_parses_back() {
        let r = MetricsReport {
            wr: Some(2.0),
            ro: Some(300.0 / 1300.0),
            re: 1.0e-7,
            tc: 12345678.9,
            successful_requests: 1800,
            total_requests: 1850,
            ..Default::default()
        };
        let text = r.to_json();
        assert!(!text.contains("e-") && !text.contains("e+"));
        assert!(text.contains("\"ro\": 0.230769"));
        assert!(text.contains("\"re\": 0.0000001"));
        assert!(text.contains("\"tc\": 12345700"));
        assert!(text.contains("\"lat_p50\": null"));
        let back = MetricsReport::from_json(&text).unwrap();
        assert_eq!(back.successful_requests, 1800);
        assert_eq!(back.wr, Some(2.0));
    }

    #[test]
    fn rejects_more_successes_than_requests() {
        let r = MetricsReport {
            successful_requests: 3,
            total_requests: 2,
            ..Default::default()
        };
        assert!(r.validate().is_err());
    }
}
