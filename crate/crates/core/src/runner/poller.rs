use std::io;
use std::path::Path;

use crate::collectors::{poll, CollectorConfig, Journal, PollContext};
use crate::model::Timestamp;

/// Polls every collector over consecutive windows and journals each batch.
pub struct Poller {
    collectors: Vec<(CollectorConfig, Timestamp)>,
    journal: Journal,
    ctx: PollContext,
}

impl Poller {
    /// Starts every collector's first window at `from`.
    pub fn new(
        collectors: &[CollectorConfig],
        dir: &Path,
        ctx: PollContext,
        from: Timestamp,
    ) -> io::Result<Self> {
        Ok(Poller {
            collectors: collectors.iter().map(|c| (c.clone(), from)).collect(),
            journal: Journal::open(dir)?,
            ctx,
        })
    }

    pub fn set_context(&mut self, ctx: PollContext) {
        self.ctx = ctx;
    }

    /// Polls whole `poll_interval` windows that end at or before `until`;
    /// each window stops one millisecond short of the next one's start.
    pub fn poll_until(&mut self, until: Timestamp) -> io::Result<()> {
        for i in 0..self.collectors.len() {
            loop {
                let (c, from) = &self.collectors[i];
                let to = from.add_secs_f64(c.poll_interval as f64);
                if to > until {
                    break;
                }
                self.poll_one(i, to)?;
            }
        }
        Ok(())
    }

    /// Polls whatever remains up to and including `until`.
    pub fn flush(&mut self, until: Timestamp) -> io::Result<()> {
        for i in 0..self.collectors.len() {
            let (c, mut from) = self.collectors[i].clone();
            while from < until {
                let to = from.add_secs_f64(c.poll_interval as f64).min(until);
                if to == until {
                    break;
                }
                self.poll_one(i, to)?;
                from = self.collectors[i].1;
            }
            let end = until.max(Timestamp::from_millis(from.millis() + 1));
            self.poll_window(i, (from, end))?;
            self.collectors[i].1 = Timestamp::from_millis(end.millis() + 1);
        }
        Ok(())
    }

    fn poll_one(&mut self, i: usize, next: Timestamp) -> io::Result<()> {
        let from = self.collectors[i].1;
        self.poll_window(i, (from, Timestamp::from_millis(next.millis() - 1)))?;
        self.collectors[i].1 = next;
        Ok(())
    }

    fn poll_window(&mut self, i: usize, window: (Timestamp, Timestamp)) -> io::Result<()> {
        let batch = poll(&self.collectors[i].0, window, &self.ctx)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        self.journal.append(&batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collectors::{read_journal, Backend, LabelNames, QuerySpec, RawSeries, SampleFeed};
    use crate::model::{LayerTag, SampleKind};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    struct Ramp;

    impl SampleFeed for Ramp {
        fn range_query(
            &self,
            _q: &str,
            (t0, t1): (Timestamp, Timestamp),
            _step: u64,
        ) -> Result<Vec<RawSeries>, String> {
            let points = (t0.ceil_sec()..=t1.floor_sec())
                .map(|s| (Timestamp::from_secs(s), s as f64))
                .collect();
            Ok(vec![RawSeries {
                labels: BTreeMap::from([("pod".to_string(), "p".to_string())]),
                points,
            }])
        }
    }

    #[test]
    fn windows_tile_without_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CollectorConfig {
            id: "sim".into(),
            backend: Backend::Simulator,
            endpoint: String::new(),
            queries: vec![QuerySpec {
                query: "x".into(),
                layer: LayerTag::Application,
                kind: SampleKind::EnergyJoules,
                unit: String::new(),
            }],
            poll_interval: 7,
            step: 1,
            mandatory: true,
            node: None,
            labels: LabelNames::default(),
            inject: None,
        };
        let ctx = PollContext {
            feed: Some(Arc::new(Ramp)),
            ..Default::default()
        };
        let mut p = Poller::new(&[cfg], dir.path(), ctx, Timestamp::from_secs(100)).unwrap();
        p.poll_until(Timestamp::from_secs(130)).unwrap();
        p.flush(Timestamp::from_secs(130)).unwrap();
        let batches = read_journal(dir.path()).unwrap();
        let secs: Vec<i64> = batches
            .iter()
            .flat_map(|b| b.samples.iter().map(|s| s.timestamp.floor_sec()))
            .collect();
        assert_eq!(secs, (100..=130).collect::<Vec<_>>());
        assert_eq!(batches.len(), 5);
    }
}
