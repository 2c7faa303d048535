use std::collections::BTreeMap;

use super::{limits_of, MetricsError, OverProvisionRule};
use crate::aggregator::ResourceTimeline;
use crate::model::ResourceSpec;

/// RU: mean over seconds with at least one live replica of the average of
/// CPU and memory utilization, each computed as Σ used / Σ provisioned over
/// the live replicas. Replicas with a missing reading drop out of that
/// dimension for the second; a second with no readings in either dimension
/// is skipped. `None` when no second qualifies.
pub fn resource_utilization(
    timelines: &[ResourceTimeline],
    specs: &BTreeMap<String, ResourceSpec>,
) -> Result<Option<f64>, MetricsError> {
    let Some(len) = timelines.iter().map(ResourceTimeline::len).max() else {
        return Ok(None);
    };
    // per second: (cpu used, cpu limit, mem used, mem limit)
    let mut acc = vec![[0.0f64; 4]; len];
    for tl in timelines {
        let limits = limits_of(tl, specs)?;
        let mem_limit = limits.mem_limit_f64();
        for (i, a) in acc.iter_mut().enumerate().take(tl.len()) {
            if !tl.live[i] {
                continue;
            }
            if let Some(c) = tl.cpu_millicores[i] {
                a[0] += c;
                a[1] += limits.cpu_limit;
            }
            if let Some(m) = tl.mem_bytes[i] {
                a[2] += m;
                a[3] += mem_limit;
            }
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for [cu, cl, mu, ml] in acc {
        let dims: Vec<f64> = [(cu, cl), (mu, ml)]
            .into_iter()
            .filter(|(_, l)| *l > 0.0)
            .map(|(u, l)| u / l)
            .collect();
        if dims.is_empty() {
            continue;
        }
        sum += dims.iter().sum::<f64>() / dims.len() as f64;
        n += 1;
    }
    Ok((n > 0).then(|| (sum / n as f64).clamp(0.0, 1.0)))
}

/// One replica's state in one second, as seen by the over-provisioning rule.
#[derive(Clone, Copy)]
struct Slot {
    cpu: f64,
    mem: f64,
    cpu_head: f64,
    mem_head: f64,
    under: bool,
}

/// RE: joules drawn by over-provisioned replicas.
///
/// In each second a replica is over-provisioned when both its CPU and
/// memory fractions are below the rule's thresholds and, if the rule asks
/// for it, another live replica of the same service has at least as much
/// spare CPU and spare memory as the candidate currently uses. Replicas
/// without limits or without a CPU or memory reading are never candidates
/// and never peers.
pub fn scaling_waste(timelines: &[ResourceTimeline], rule: &OverProvisionRule) -> f64 {
    let len = timelines.iter().map(ResourceTimeline::len).max().unwrap_or(0);
    let mut by_service: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, tl) in timelines.iter().enumerate() {
        by_service.entry(tl.service.as_str()).or_default().push(i);
    }
    let mut flagged = vec![false; timelines.len()];
    let mut slots: Vec<Option<Slot>> = vec![None; timelines.len()];
    let mut peers: Vec<(f64, f64, usize)> = Vec::new();
    let mut total = 0.0;
    for sec in 0..len {
        for (i, tl) in timelines.iter().enumerate() {
            slots[i] = slot(tl, sec, rule);
            flagged[i] = false;
        }
        for members in by_service.values() {
            if !rule.require_peer_headroom {
                for &i in members {
                    flagged[i] = slots[i].is_some_and(|s| s.under);
                }
                continue;
            }
            // peers sorted by CPU headroom, descending, with the two best
            // memory headrooms of every prefix
            peers.clear();
            peers.extend(
                members
                    .iter()
                    .filter_map(|&i| slots[i].map(|s| (s.cpu_head, s.mem_head, i))),
            );
            if peers.len() < 2 {
                continue;
            }
            peers.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
            let best2 = top_two_prefix(&peers);
            for &i in members {
                let Some(s) = slots[i] else { continue };
                if !s.under {
                    continue;
                }
                // peers with cpu headroom ≥ candidate cpu form a prefix
                let k = peers.partition_point(|p| p.0 >= s.cpu);
                if k == 0 {
                    continue;
                }
                let (first, second) = best2[k - 1];
                let best_other = if first.1 == i { second } else { Some(first) };
                flagged[i] = best_other.is_some_and(|(m, _)| m >= s.mem);
            }
        }
        for (i, tl) in timelines.iter().enumerate() {
            if flagged[i] {
                total += tl.watts[sec].unwrap_or(0.0);
            }
        }
    }
    total
}

fn slot(tl: &ResourceTimeline, sec: usize, rule: &OverProvisionRule) -> Option<Slot> {
    if sec >= tl.len() || !tl.live[sec] {
        return None;
    }
    let limits = tl.limits.as_ref()?;
    let cpu = tl.cpu_millicores[sec]?;
    let mem = tl.mem_bytes[sec]?;
    let mem_limit = limits.mem_limit_f64();
    Some(Slot {
        cpu,
        mem,
        cpu_head: limits.cpu_limit - cpu,
        mem_head: mem_limit - mem,
        under: cpu / limits.cpu_limit < rule.cpu_threshold && mem / mem_limit < rule.mem_threshold,
    })
}

type Best = (f64, usize);

/// For each prefix of `peers`, the largest and second-largest memory
/// headroom together with the owning timeline index.
fn top_two_prefix(peers: &[(f64, f64, usize)]) -> Vec<(Best, Option<Best>)> {
    let mut out = Vec::with_capacity(peers.len());
    let mut first: Option<Best> = None;
    let mut second: Option<Best> = None;
    for &(_, m, i) in peers {
        match first {
            Some(f) if m <= f.0 => {
                if second.is_none_or(|s| m > s.0) {
                    second = Some((m, i));
                }
            }
            _ => {
                second = first;
                first = Some((m, i));
            }
        }
        out.push((first.expect("set above"), second));
    }
    out
}
