use std::io::Read;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::drive::DriveResult;
use super::schedule::{StopCondition, UserSchedule};
use super::{expand_path, Scenario, ThinkPolicy};
use crate::model::{RequestRecord, Timestamp};

/// Status 0 means the target could not be reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub status: u16,
    pub success: bool,
}

pub trait RequestExecutor: Send + Sync {
    fn execute(&self, method: &str, path: &str) -> Outcome;
}

/// Plain HTTP/1.1 client. Latency covers connection setup and the full
/// response body.
pub struct HttpExecutor {
    base: String,
    agent: ureq::Agent,
}

impl HttpExecutor {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpExecutor {
            base: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl RequestExecutor for HttpExecutor {
    fn execute(&self, method: &str, path: &str) -> Outcome {
        let url = format!("{}{}", self.base, path);
        let resp = match self.agent.request(method, &url).call() {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(_)) => {
                return Outcome {
                    status: 0,
                    success: false,
                }
            }
        };
        let status = resp.status();
        let mut sink = Vec::new();
        let read_ok = resp.into_reader().read_to_end(&mut sink).is_ok();
        Outcome {
            status,
            success: read_ok && (200..400).contains(&status),
        }
    }
}

/// Seconds without a single reachable response before the drive aborts.
const UNREACHABLE_LIMIT: Duration = Duration::from_secs(30);

struct Shared {
    active: AtomicUsize,
    stop: AtomicBool,
    issued: AtomicU64,
    budget: Option<u64>,
    records: Mutex<Vec<RequestRecord>>,
    last_reachable: Mutex<Instant>,
    attempted: AtomicBool,
}

/// Runs the schedule in wall-clock time, one thread per virtual user.
pub fn drive_realtime(
    schedule: &UserSchedule,
    executor: Arc<dyn RequestExecutor>,
    scenario: &Scenario,
) -> DriveResult {
    let started_wall = Instant::now();
    let started = Timestamp::now();
    let shared = Arc::new(Shared {
        active: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        issued: AtomicU64::new(0),
        budget: match schedule.stop {
            StopCondition::RequestCount(n) => Some(n),
            StopCondition::Duration => None,
        },
        records: Mutex::new(Vec::new()),
        last_reachable: Mutex::new(started_wall),
        attempted: AtomicBool::new(false),
    });
    let max_users = schedule.target_users.iter().copied().max().unwrap_or(0) as usize;
    let mut seeds = ChaCha8Rng::seed_from_u64(schedule.seed);
    let handles: Vec<_> = (0..max_users)
        .map(|u| {
            let shared = Arc::clone(&shared);
            let exec = Arc::clone(&executor);
            let scenario = scenario.clone();
            let think = schedule.think;
            let seed: u64 = seeds.gen();
            thread::spawn(move || user_loop(u, seed, &shared, exec.as_ref(), &scenario, think))
        })
        .collect();

    let mut active_users = Vec::with_capacity(schedule.target_users.len());
    let mut aborted = false;
    for (s, users) in schedule.target_users.iter().enumerate() {
        shared.active.store(*users as usize, Ordering::SeqCst);
        active_users.push(*users);
        let tick_end = started_wall + Duration::from_secs(s as u64 + 1);
        while Instant::now() < tick_end {
            thread::sleep(Duration::from_millis(20).min(tick_end - Instant::now()));
            if shared.stop.load(Ordering::SeqCst) {
                break;
            }
        }
        if shared.attempted.load(Ordering::SeqCst)
            && shared.last_reachable.lock().expect("poisoned").elapsed() > UNREACHABLE_LIMIT
        {
            aborted = true;
        }
        let budget_used = shared
            .budget
            .is_some_and(|b| shared.issued.load(Ordering::SeqCst) >= b);
        if aborted || budget_used || shared.stop.load(Ordering::SeqCst) {
            break;
        }
    }
    shared.active.store(0, Ordering::SeqCst);
    shared.stop.store(true, Ordering::SeqCst);
    for h in handles {
        let _ = h.join();
    }
    let mut records = std::mem::take(&mut *shared.records.lock().expect("poisoned"));
    records.sort_by(|a, b| a.start.cmp(&b.start).then(a.latency.total_cmp(&b.latency)));
    DriveResult {
        records,
        started,
        ended: Timestamp::now(),
        aborted,
        active_users,
    }
}

fn user_loop(
    u: usize,
    seed: u64,
    shared: &Shared,
    exec: &dyn RequestExecutor,
    scenario: &Scenario,
    think: ThinkPolicy,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0u64;
    // spread first requests over the first second
    sleep_unless_stopped(shared, Duration::from_secs_f64(rng.gen_range(0.0..1.0)));
    while !shared.stop.load(Ordering::SeqCst) {
        if u >= shared.active.load(Ordering::SeqCst) {
            thread::sleep(Duration::from_millis(20));
            continue;
        }
        if let Some(b) = shared.budget {
            if shared.issued.fetch_add(1, Ordering::SeqCst) >= b {
                shared.stop.store(true, Ordering::SeqCst);
                break;
            }
        }
        let step = scenario.pick(&mut rng);
        let path = expand_path(&step.path, u, iterations);
        let pause = step
            .think_time
            .filter(|_| matches!(think, ThinkPolicy::Constant(_)))
            .unwrap_or_else(|| think.gap(iterations));
        iterations += 1;
        shared.attempted.store(true, Ordering::SeqCst);
        let start = Timestamp::now();
        let t0 = Instant::now();
        let out = exec.execute(&step.method, &path);
        let latency = t0.elapsed().as_secs_f64();
        if out.status != 0 {
            *shared.last_reachable.lock().expect("poisoned") = Instant::now();
        }
        shared.records.lock().expect("poisoned").push(RequestRecord {
            start,
            latency,
            success: out.success,
            endpoint: path,
            status: out.status,
        });
        sleep_unless_stopped(shared, Duration::from_secs_f64(pause));
    }
}

fn sleep_unless_stopped(shared: &Shared, d: Duration) {
    let until = Instant::now() + d;
    while !shared.stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= until {
            return;
        }
        thread::sleep((until - now).min(Duration::from_millis(50)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;

    struct Counter;

    impl RequestExecutor for Counter {
        fn execute(&self, _: &str, path: &str) -> Outcome {
            thread::sleep(Duration::from_millis(2));
            Outcome {
                status: if path == "/bad" { 500 } else { 200 },
                success: path != "/bad",
            }
        }
    }

    #[test]
    fn request_budget_in_real_time() {
        let s = UserSchedule {
            step: 1,
            target_users: vec![4; 10],
            stop: StopCondition::RequestCount(50),
            think: ThinkPolicy::Constant(0.0),
            seed: 9,
        };
        let r = drive_realtime(&s, Arc::new(Counter), &Scenario::default());
        assert_eq!(r.records.len(), 50);
        assert!(!r.aborted);
    }

    #[test]
    fn http_executor_reads_status() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            for (i, stream) in listener.incoming().take(2).enumerate() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let status = if i == 0 { "200 OK" } else { "503 Service Unavailable" };
                write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Length: 2\r\nConnection: close\r\n\r\nok"
                )
                .unwrap();
            }
        });
        let exec = HttpExecutor::new(&format!("http://{addr}/"), Duration::from_secs(5));
        assert_eq!(
            exec.execute("GET", "/x"),
            Outcome {
                status: 200,
                success: true
            }
        );
        assert_eq!(
            exec.execute("GET", "/x"),
            Outcome {
                status: 503,
                success: false
            }
        );
        server.join().unwrap();
        let dead = HttpExecutor::new(&format!("http://{addr}"), Duration::from_millis(200));
        assert_eq!(dead.execute("GET", "/").status, 0);
    }
}
