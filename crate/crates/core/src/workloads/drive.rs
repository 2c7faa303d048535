use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{StopCondition, UserSchedule};
use super::{expand_path, Scenario};
use crate::model::{RequestRecord, Timestamp};

/// Outcome of driving one schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveResult {
    /// Sorted by start time.
    pub records: Vec<RequestRecord>,
    pub started: Timestamp,
    /// When the last request finished or the schedule ran out, whichever
    /// is later.
    pub ended: Timestamp,
    pub aborted: bool,
    /// Users allowed to issue requests, per schedule second.
    pub active_users: Vec<u32>,
}

/// A request handed to a virtual target. Times are absolute seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Submission {
    pub id: u64,
    pub method: String,
    pub endpoint: String,
    pub at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub id: u64,
    pub finished_at: f64,
    pub success: bool,
    pub status: u16,
}

pub enum Admission {
    Done(Completion),
    /// Reported later through [`VirtualTarget::begin_tick`].
    Queued,
}

/// A target that advances in lockstep with the driver's virtual clock.
///
/// Each second the driver calls `begin_tick`, submits every request whose
/// issue time falls in that second in time order, then calls `end_tick`.
pub trait VirtualTarget {
    /// Starts second `sec`; returns queued requests finished during it.
    fn begin_tick(&mut self, sec: i64) -> Vec<Completion>;
    fn submit(&mut self, req: &Submission) -> Admission;
    fn end_tick(&mut self, sec: i64);
    /// Requests admitted but not yet finished.
    fn pending(&self) -> usize;
}

/// Seconds the driver keeps ticking after the schedule to let queued
/// requests finish.
const MAX_DRAIN: i64 = 600;
/// Smallest gap between two requests of one user.
const MIN_GAP: f64 = 1e-3;

#[derive(Default)]
struct User {
    rng: Option<ChaCha8Rng>,
    scheduled: bool,
    in_flight: Option<(u64, f64, String, f64)>,
    iterations: u64,
}

/// Closed-loop virtual users against a [`VirtualTarget`], on the target's
/// clock, starting at absolute second `start`.
pub fn drive_virtual(
    schedule: &UserSchedule,
    target: &mut dyn VirtualTarget,
    scenario: &Scenario,
    start: i64,
) -> DriveResult {
    let mut users: Vec<User> = Vec::new();
    let mut events: BinaryHeap<Reverse<(OrdF64, usize)>> = BinaryHeap::new();
    let mut open: BTreeMap<u64, usize> = BTreeMap::new();
    let mut records = Vec::new();
    let mut active_users = Vec::with_capacity(schedule.target_users.len());
    let mut issued: u64 = 0;
    let mut next_id: u64 = 0;
    let mut last_finish = start as f64;
    let budget = match schedule.stop {
        StopCondition::RequestCount(n) => Some(n),
        StopCondition::Duration => None,
    };
    let mut seed_rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let end = start + schedule.duration() as i64;

    let mut sec = start;
    loop {
        let in_schedule = sec < end && budget.is_none_or(|b| issued < b);
        if !in_schedule && (target.pending() == 0 || sec >= end + MAX_DRAIN) {
            break;
        }
        for c in target.begin_tick(sec) {
            if let Some(u) = open.remove(&c.id) {
                let (_, at, ep, think) = users[u].in_flight.take().expect("open request");
                last_finish = last_finish.max(c.finished_at);
                records.push(RequestRecord {
                    start: Timestamp::from_secs_f64(at),
                    latency: (c.finished_at - at).max(0.0),
                    success: c.success,
                    endpoint: ep,
                    status: c.status,
                });
                let next = (c.finished_at + think).max(at + MIN_GAP);
                events.push(Reverse((OrdF64(next), u)));
                users[u].scheduled = true;
            }
        }
        let active = if in_schedule {
            schedule.users_at((sec - start) as usize) as usize
        } else {
            0
        };
        if sec < end {
            active_users.push(active as u32);
        }
        while users.len() < active {
            users.push(User {
                rng: Some(ChaCha8Rng::seed_from_u64(seed_rng.gen())),
                ..Default::default()
            });
        }
        for (u, user) in users.iter_mut().enumerate().take(active) {
            if !user.scheduled && user.in_flight.is_none() {
                let offset: f64 = user.rng.as_mut().expect("seeded").gen_range(0.0..1.0);
                events.push(Reverse((OrdF64(sec as f64 + offset), u)));
                user.scheduled = true;
            }
        }
        let horizon = (sec + 1) as f64;
        while let Some(Reverse((OrdF64(t), u))) = events.peek().copied() {
            if t >= horizon {
                break;
            }
            events.pop();
            users[u].scheduled = false;
            if u >= active || budget.is_some_and(|b| issued >= b) {
                continue;
            }
            let user = &mut users[u];
            let rng = user.rng.as_mut().expect("seeded");
            let step = scenario.pick(rng);
            let think = step
                .think_time
                .filter(|_| matches!(schedule.think, super::ThinkPolicy::Constant(_)))
                .unwrap_or_else(|| schedule.think.gap(user.iterations));
            let endpoint = expand_path(&step.path, u, user.iterations);
            user.iterations += 1;
            issued += 1;
            next_id += 1;
            let req = Submission {
                id: next_id,
                method: step.method.clone(),
                endpoint: endpoint.clone(),
                at: t,
            };
            match target.submit(&req) {
                Admission::Done(c) => {
                    last_finish = last_finish.max(c.finished_at);
                    records.push(RequestRecord {
                        start: Timestamp::from_secs_f64(t),
                        latency: (c.finished_at - t).max(0.0),
                        success: c.success,
                        endpoint,
                        status: c.status,
                    });
                    let next = (c.finished_at + think).max(t + MIN_GAP);
                    events.push(Reverse((OrdF64(next), u)));
                    user.scheduled = true;
                }
                Admission::Queued => {
                    user.in_flight = Some((next_id, t, endpoint, think));
                    open.insert(next_id, u);
                }
            }
        }
        target.end_tick(sec);
        sec += 1;
    }
    // anything still open after the drain limit is a client-side timeout
    for (_, u) in open {
        if let Some((_, at, ep, _)) = users[u].in_flight.take() {
            records.push(RequestRecord {
                start: Timestamp::from_secs_f64(at),
                latency: (sec as f64 - at).max(0.0),
                success: false,
                endpoint: ep,
                status: 0,
            });
        }
    }
    records.sort_by(|a, b| a.start.cmp(&b.start).then(a.latency.total_cmp(&b.latency)));
    let ended = (last_finish.ceil() as i64).max(end.min(sec));
    DriveResult {
        records,
        started: Timestamp::from_secs(start),
        ended: Timestamp::from_secs(ended),
        aborted: false,
        active_users,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
