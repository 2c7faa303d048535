use super::{gb, AuxModel, MetricsError};
use crate::aggregator::EnergyLedger;
use crate::model::RequestRecord;

/// WR: SUT joules per successful request.
pub fn request_consumption(
    ledger: &EnergyLedger,
    requests: &[RequestRecord],
) -> Result<f64, MetricsError> {
    let ok = requests.iter().filter(|r| r.success).count();
    if ok == 0 {
        return Err(MetricsError::WrUndefined);
    }
    Ok(ledger.sut_joules / ok as f64)
}

/// RO: overhead share of all attributed energy.
pub fn runtime_overhead(ledger: &EnergyLedger) -> Result<f64, MetricsError> {
    let total = ledger.sut_joules + ledger.overhead_joules;
    if total <= 0.0 {
        return Err(MetricsError::NoEnergy);
    }
    Ok(ledger.overhead_joules / total)
}

/// Overhead relative to SUT energy, unbounded.
pub fn runtime_overhead_raw(ledger: &EnergyLedger) -> Option<f64> {
    (ledger.sut_joules > 0.0).then(|| ledger.overhead_joules / ledger.sut_joules)
}

/// AC: cooling share of attributed energy plus network and storage energy.
pub fn auxiliary_costs(ledger: &EnergyLedger, model: &AuxModel, bytes_tx: f64, storage_gb_s: f64) -> f64 {
    (model.pue - 1.0) * (ledger.sut_joules + ledger.overhead_joules)
        + model.network_j_per_gb * gb(bytes_tx)
        + model.storage_j_per_gb_s * storage_gb_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Timestamp;

    fn ledger(sut: f64, overhead: f64) -> EnergyLedger {
        EnergyLedger {
            sut_joules: sut,
            overhead_joules: overhead,
            ..Default::default()
        }
    }

    fn reqs(ok: usize, failed: usize) -> Vec<RequestRecord> {
        (0..ok + failed)
            .map(|i| RequestRecord {
                start: Timestamp::from_secs(i as i64),
                latency: 0.1,
                success: i < ok,
                endpoint: "/".into(),
                status: if i < ok { 200 } else { 500 },
            })
            .collect()
    }

    #[test]
    fn wr_divides_by_successful_only() {
        assert_eq!(request_consumption(&ledger(3600.0, 0.0), &reqs(1800, 200)), Ok(2.0));
        assert_eq!(
            request_consumption(&ledger(500.0, 0.0), &reqs(0, 3)),
            Err(MetricsError::WrUndefined)
        );
    }

    #[test]
    fn ro_is_bounded_share() {
        let ro = runtime_overhead(&ledger(1000.0, 300.0)).unwrap();
        assert!((ro - 300.0 / 1300.0).abs() < 1e-15);
        assert!((ro - 0.2308).abs() < 1e-4);
        assert_eq!(runtime_overhead(&ledger(1000.0, 0.0)), Ok(0.0));
        assert_eq!(runtime_overhead(&ledger(0.0, 0.0)), Err(MetricsError::NoEnergy));
        assert_eq!(runtime_overhead_raw(&ledger(1000.0, 300.0)), Some(0.3));
    }

    #[test]
    fn ac_definition() {
        let mut m = AuxModel::default();
        assert_eq!(auxiliary_costs(&ledger(700.0, 300.0), &m, 0.0, 0.0), 0.0);
        m.pue = 1.5;
        assert_eq!(auxiliary_costs(&ledger(700.0, 300.0), &m, 0.0, 0.0), 500.0);
        m.network_j_per_gb = 10.0;
        m.storage_j_per_gb_s = 0.5;
        let two_gb = 2.0 * crate::model::BYTES_PER_GB;
        assert_eq!(auxiliary_costs(&ledger(700.0, 300.0), &m, two_gb, 8.0), 524.0);
    }

    #[test]
    fn ro_is_scale_invariant() {
        let base = runtime_overhead(&ledger(812.0, 97.0)).unwrap();
        for c in [0.001, 0.5, 3.0, 1e6] {
            let scaled = runtime_overhead(&ledger(812.0 * c, 97.0 * c)).unwrap();
            assert!((scaled - base).abs() <= 1e-15);
        }
    }
}
