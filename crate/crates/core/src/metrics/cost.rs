use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{gb, limits_of, CostBook, MetricsError};
use crate::aggregator::ResourceTimeline;
use crate::model::{DeploymentKind, ResourceSpec};

/// One serverless invocation as billed by the platform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnInvocation {
    pub service: String,
    /// Billed seconds.
    pub duration: f64,
    /// Configured memory in bytes.
    pub mem_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    /// Provisioned capacity.
    pub tc: f64,
    /// Used capacity.
    pub consumed: f64,
    /// Serverless share, identical in both figures.
    pub functions: f64,
}

impl CostBreakdown {
    /// TC per thousand successful requests, in hundredths of the currency.
    pub fn per_kilorequest(&self, successful: u64) -> Option<f64> {
        (successful > 0).then(|| self.tc / (successful as f64 / 1000.0) * 100.0)
    }
}

/// TC and consumed cost with per-second billing.
///
/// Pods are billed for their limits in every live second (TC) and for their
/// measured usage (consumed). Function invocations are billed per request
/// plus GB-seconds of configured memory, and count the same in both.
pub fn total_cost(
    timelines: &[ResourceTimeline],
    invocations: &[FnInvocation],
    book: &CostBook,
    specs: &BTreeMap<String, ResourceSpec>,
) -> Result<CostBreakdown, MetricsError> {
    let pods: Vec<&ResourceTimeline> = timelines
        .iter()
        .filter(|t| t.kind == DeploymentKind::Pod && t.live.iter().any(|l| *l))
        .collect();
    let mut out = CostBreakdown::default();
    if !pods.is_empty() {
        let cpu_price = book.pod_cpu_price.ok_or(MetricsError::Unpriced("pods (cpu)"))?;
        let mem_price = book.pod_mem_price.ok_or(MetricsError::Unpriced("pods (memory)"))?;
        for tl in pods {
            let limits = limits_of(tl, specs)?;
            let live = tl.live.iter().filter(|l| **l).count() as f64;
            out.tc += live
                * (limits.cpu_limit / 1000.0 * cpu_price + gb(limits.mem_limit_f64()) * mem_price);
            for i in (0..tl.len()).filter(|i| tl.live[*i]) {
                let cpu = tl.cpu_millicores[i].unwrap_or(0.0);
                let mem = tl.mem_bytes[i].unwrap_or(0.0);
                out.consumed += cpu / 1000.0 * cpu_price + gb(mem) * mem_price;
            }
        }
    }
    if !invocations.is_empty() {
        let inv_price = book
            .fn_invocation_price
            .ok_or(MetricsError::Unpriced("function invocations"))?;
        let gbs_price = book
            .fn_gbs_price
            .ok_or(MetricsError::Unpriced("function GB-seconds"))?;
        for f in invocations {
            out.functions += inv_price + f.duration * gb(f.mem_bytes as f64) * gbs_price;
        }
        out.tc += out.functions;
        out.consumed += out.functions;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::Grid;
    use crate::model::BYTES_PER_GB;

    fn pod(secs: usize, limits: ResourceSpec, cpu: f64, mem: f64) -> ResourceTimeline {
        let mut t = ResourceTimeline::empty("web-0", Grid::new(0, secs as i64));
        t.service = "web".into();
        t.limits = Some(limits);
        t.live = vec![true; secs];
        t.cpu_millicores = vec![Some(cpu); secs];
        t.mem_bytes = vec![Some(mem); secs];
        t
    }

    #[test]
    fn one_pod_for_900_seconds() {
        let (pc, pm) = (0.000011244, 0.0000012347);
        let book = CostBook::default();
        let limits = ResourceSpec::new(2000.0, 3 * (1 << 30));
        let t = pod(900, limits, 500.0, 1.5 * BYTES_PER_GB);
        let c = total_cost(&[t], &[], &book, &BTreeMap::new()).unwrap();
        let expected = 900.0 * (2.0 * pc + 3.0 * pm);
        assert!((c.tc - expected).abs() < 1e-9);
        assert!((c.consumed - 900.0 * (0.5 * pc + 1.5 * pm)).abs() < 1e-9);
        assert!(c.tc >= c.consumed);
    }

    #[test]
    fn function_billing() {
        let book = CostBook::default();
        let inv: Vec<_> = (0..10_000)
            .map(|_| FnInvocation {
                service: "fn".into(),
                duration: 0.2,
                mem_bytes: 500 * 1024 * 1024,
            })
            .collect();
        assert_eq!(gb(500.0 * 1024.0 * 1024.0), 0.48828125);
        let c = total_cost(&[], &inv, &book, &BTreeMap::new()).unwrap();
        let expected = 10_000.0 * 0.0000002 + 10_000.0 * 0.2 * 0.48828125 * 0.0000166667;
        assert!((c.tc - expected).abs() < 1e-9);
        assert_eq!(c.tc, c.consumed);
    }

    #[test]
    fn zero_live_seconds_cost_nothing() {
        let mut t = pod(10, ResourceSpec::new(1000.0, 1 << 30), 1.0, 1.0);
        t.live = vec![false; 10];
        let c = total_cost(&[t], &[], &CostBook::default(), &BTreeMap::new()).unwrap();
        assert_eq!(c.tc, 0.0);
        assert_eq!(c.per_kilorequest(0), None);
    }

    #[test]
    fn unpriced_kind_is_an_error() {
        let book = CostBook {
            fn_invocation_price: None,
            ..Default::default()
        };
        let inv = [FnInvocation {
            service: "fn".into(),
            duration: 0.1,
            mem_bytes: 1,
        }];
        assert!(matches!(
            total_cost(&[], &inv, &book, &BTreeMap::new()),
            Err(MetricsError::Unpriced(_))
        ));
    }

    #[test]
    fn per_kilorequest_is_in_cents() {
        let c = CostBreakdown {
            tc: 0.58,
            ..Default::default()
        };
        assert!((c.per_kilorequest(2000).unwrap() - 29.0).abs() < 1e-12);
    }
}
