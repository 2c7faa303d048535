use crate::model::{SampleKind, Timestamp};

/// State of one grid second after resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    /// At least one reading fell inside the second (mean of them).
    Observed(f64),
    /// Carried forward from an earlier observation.
    Filled(f64),
    Missing,
}

impl Point {
    pub fn value(self) -> Option<f64> {
        match self {
            Point::Observed(v) | Point::Filled(v) => Some(v),
            Point::Missing => None,
        }
    }

    pub fn is_observed(self) -> bool {
        matches!(self, Point::Observed(_))
    }
}

/// Half-open range of grid seconds `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub start: i64,
    pub end: i64,
}

impl Grid {
    pub fn new(start: i64, end: i64) -> Self {
        Grid {
            start,
            end: end.max(start),
        }
    }

    /// Smallest grid covering `[t0, t1)`.
    pub fn covering(t0: Timestamp, t1: Timestamp) -> Self {
        Grid::new(t0.floor_sec(), t1.ceil_sec())
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn index_of(&self, sec: i64) -> Option<usize> {
        (sec >= self.start && sec < self.end).then(|| (sec - self.start) as usize)
    }

    pub fn seconds(&self) -> impl Iterator<Item = i64> {
        self.start..self.end
    }
}

/// One series on a one-second grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub grid: Grid,
    pub points: Vec<Point>,
}

impl Series {
    pub fn missing(grid: Grid) -> Self {
        Series {
            grid,
            points: vec![Point::Missing; grid.len()],
        }
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.value()).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_observed()).count()
    }
}

/// Per-interval rates derived from a cumulative counter.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterRates {
    /// `(from, to, rate per second)` between consecutive readings.
    pub intervals: Vec<(Timestamp, Timestamp, f64)>,
    /// Indices of readings at which the counter went backwards.
    pub resets: Vec<usize>,
}

impl CounterRates {
    pub fn rates(&self) -> Vec<f64> {
        self.intervals.iter().map(|(_, _, r)| *r).collect()
    }
}

/// Successive differences of a counter. A decrease is a reset: the counter
/// restarted from zero, so the new reading itself is the increment.
pub fn counter_rates(readings: &[(Timestamp, f64)]) -> CounterRates {
    let mut intervals = Vec::new();
    let mut resets = Vec::new();
    for (i, w) in readings.windows(2).enumerate() {
        let (ta, va) = w[0];
        let (tb, vb) = w[1];
        if tb <= ta {
            continue;
        }
        let delta = if vb >= va {
            vb - va
        } else {
            resets.push(i + 1);
            vb
        };
        let dt = (tb.millis() - ta.millis()) as f64 / 1000.0;
        intervals.push((ta, tb, delta / dt));
    }
    CounterRates { intervals, resets }
}

/// Places readings on the grid without filling gaps. Gauges average the
/// readings inside each second; counters are converted to rates first.
pub fn resample_raw(kind: SampleKind, readings: &[(Timestamp, f64)], grid: Grid) -> Series {
    let mut sorted = readings.to_vec();
    sorted.sort_by_key(|(t, _)| *t);
    if kind.is_counter() {
        return place_counter(&sorted, grid);
    }
    let mut sums = vec![(0.0f64, 0usize); grid.len()];
    for (t, v) in &sorted {
        if let Some(i) = grid.index_of(t.floor_sec()) {
            sums[i].0 += v;
            sums[i].1 += 1;
        }
    }
    let points = sums
        .into_iter()
        .map(|(s, n)| {
            if n == 0 {
                Point::Missing
            } else {
                Point::Observed(s / n as f64)
            }
        })
        .collect();
    Series { grid, points }
}

fn place_counter(sorted: &[(Timestamp, f64)], grid: Grid) -> Series {
    let rates = counter_rates(sorted);
    let mut points = vec![Point::Missing; grid.len()];
    for (ta, tb, r) in rates.intervals {
        // second k takes the rate of the interval containing instant k
        let first = ta.ceil_sec().max(grid.start);
        let last = tb.ceil_sec().min(grid.end);
        for sec in first..last {
            if let Some(i) = grid.index_of(sec) {
                points[i] = Point::Observed(r);
            }
        }
    }
    Series { grid, points }
}

/// Last-observation-carried-forward for at most `max_gap_fill` seconds.
pub fn fill_gaps(series: &Series, max_gap_fill: u64) -> Series {
    fill_gaps_seeded(series, None, max_gap_fill)
}

pub(crate) fn fill_gaps_seeded(series: &Series, seed: Option<(i64, f64)>, max_gap_fill: u64) -> Series {
    let mut last: Option<(i64, f64)> = seed;
    let points = series
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sec = series.grid.start + i as i64;
            match *p {
                Point::Observed(v) => {
                    last = Some((sec, v));
                    Point::Observed(v)
                }
                Point::Filled(v) => Point::Filled(v),
                Point::Missing => match last {
                    Some((at, v)) if (sec - at) as u64 <= max_gap_fill => Point::Filled(v),
                    _ => Point::Missing,
                },
            }
        })
        .collect();
    Series {
        grid: series.grid,
        points,
    }
}

/// Resample and fill in one step.
pub fn resample(
    kind: SampleKind,
    readings: &[(Timestamp, f64)],
    grid: Grid,
    max_gap_fill: u64,
) -> Series {
    let raw = resample_raw_seeded(kind, readings, grid);
    fill_gaps_seeded(&raw.0, raw.1, max_gap_fill)
}

/// Raw placement plus the last reading before the grid, if any.
pub(crate) fn resample_raw_seeded(
    kind: SampleKind,
    readings: &[(Timestamp, f64)],
    grid: Grid,
) -> (Series, Option<(i64, f64)>) {
    let series = resample_raw(kind, readings, grid);
    if kind.is_counter() {
        return (series, None);
    }
    let seed = readings
        .iter()
        .filter(|(t, _)| t.floor_sec() < grid.start)
        .max_by_key(|(t, _)| *t)
        .map(|(t, v)| (t.floor_sec(), *v));
    (series, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    #[test]
    fn locf_fills_short_gaps() {
        let r = [(ts(0), 10.0), (ts(2), 20.0), (ts(4), 30.0)];
        let s = resample(SampleKind::Watts, &r, Grid::new(0, 5), 2);
        let vals: Vec<f64> = s.values().into_iter().map(Option::unwrap).collect();
        assert_eq!(vals, vec![10.0, 10.0, 20.0, 20.0, 30.0]);
        assert_eq!(s.observed_count(), 3);
    }

    #[test]
    fn gaps_beyond_fill_limit_stay_missing() {
        let r = [(ts(0), 1.0), (ts(5), 2.0)];
        let s = resample(SampleKind::Watts, &r, Grid::new(0, 6), 2);
        assert_eq!(
            s.values(),
            vec![Some(1.0), Some(1.0), Some(1.0), None, None, Some(2.0)]
        );
    }

    #[test]
    fn counter_reset_is_detected() {
        let r = [(ts(0), 100.0), (ts(1), 150.0), (ts(2), 30.0)];
        let rates = counter_rates(&r);
        assert_eq!(rates.rates(), vec![50.0, 30.0]);
        // third reading, index 2
        assert_eq!(rates.resets, vec![2]);
        let s = resample(SampleKind::RequestCount, &r, Grid::new(0, 3), 0);
        assert_eq!(s.values(), vec![Some(50.0), Some(30.0), None]);
    }

    #[test]
    fn energy_counter_becomes_watts() {
        // 10 W for 4 s read every 2 s
        let r = [(ts(0), 0.0), (ts(2), 20.0), (ts(4), 40.0)];
        let s = resample(SampleKind::EnergyJoules, &r, Grid::new(0, 4), 0);
        assert_eq!(s.values(), vec![Some(10.0); 4]);
    }

    #[test]
    fn empty_input_is_all_missing() {
        let s = resample(SampleKind::Watts, &[], Grid::new(10, 15), 3);
        assert_eq!(s.values(), vec![None; 5]);
    }

    #[test]
    fn sub_second_readings_are_averaged() {
        let r = [
            (Timestamp::from_millis(0), 2.0),
            (Timestamp::from_millis(500), 4.0),
        ];
        let s = resample(SampleKind::Watts, &r, Grid::new(0, 1), 0);
        assert_eq!(s.values(), vec![Some(3.0)]);
    }

    #[test]
    fn reading_before_grid_seeds_fill() {
        let r = [(ts(-1), 7.0)];
        let s = resample(SampleKind::Watts, &r, Grid::new(0, 3), 2);
        assert_eq!(s.values(), vec![Some(7.0), Some(7.0), None]);
    }

    proptest! {
        // Piecewise-constant input with change points on whole seconds and
        // gaps no longer than the fill limit keeps its integral exactly.
        #[test]
        fn resampling_preserves_integral(
            steps in prop::collection::vec((1u64..=4, 0u32..1000), 1..40),
        ) {
            let max_gap_fill = 3;
            let mut readings = Vec::new();
            let mut t = 0i64;
            let mut exact = 0.0;
            for (hold, v) in &steps {
                let v = *v as f64 * 0.25;
                readings.push((ts(t), v));
                exact += v * *hold as f64;
                t += *hold as i64;
            }
            let s = resample(SampleKind::Watts, &readings, Grid::new(0, t), max_gap_fill);
            let integral: f64 = s.values().into_iter().map(|v| v.unwrap()).sum();
            prop_assert_eq!(integral, exact);
        }
    }
}
