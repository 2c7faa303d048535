use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::topology::{SimService, SimTopology};
use super::trace::{InvocationRecord, ReplicaTrace, ScalingEvent, SimTrace};
use crate::model::{DeploymentKind, LayerTag};
use crate::workloads::{Admission, Completion, Submission, VirtualTarget};

/// Seconds of backlog a chain may queue before arrivals fail.
pub const BACKLOG_SECONDS: f64 = 10.0;
/// Idle seconds after which a function instance is reclaimed.
pub const FUNCTION_IDLE_TIMEOUT: u64 = 60;
/// Relative service-time jitter.
pub const JITTER: f64 = 0.1;
pub const SYSTEM_NAMESPACE: &str = "system-processes";

const STATUS_OK: u16 = 200;
const STATUS_NOT_FOUND: u16 = 404;
const STATUS_OVERLOADED: u16 = 503;

struct ServiceState {
    name: String,
    spec: SimService,
    up_since: Option<i64>,
    down_since: Option<i64>,
    next_k: u32,
}

struct Replica {
    service: usize,
    node: usize,
    ready: i64,
    terminated: Option<i64>,
    budget: f64,
    used: f64,
    served: u64,
    idle_secs: u64,
    warm: bool,
    trace: usize,
}

struct Pending {
    id: u64,
    at: f64,
}

struct Chain {
    services: Vec<usize>,
    queue: VecDeque<Pending>,
}

/// Totals over the whole simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RequestCounters {
    pub injected: u64,
    pub served: u64,
    pub failed: u64,
}

/// Result of a count-driven [`Cluster::step`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub served: u64,
    pub failed: u64,
    pub queued: u64,
}

/// The cluster model, advanced one second at a time.
pub struct Cluster {
    topo: SimTopology,
    node_ids: Vec<String>,
    node_alloc: Vec<(f64, u64)>,
    services: Vec<ServiceState>,
    service_index: BTreeMap<String, usize>,
    replicas: Vec<Replica>,
    chains: Vec<Chain>,
    chain_of_entry: BTreeMap<String, usize>,
    default_path: String,
    now: i64,
    in_tick: bool,
    rng: ChaCha8Rng,
    trace: SimTrace,
    counters: RequestCounters,
    next_id: u64,
}

impl Cluster {
    /// Deploys every service at second `start`.
    pub fn new(topo: SimTopology, seed: u64, start: i64) -> Self {
        let node_ids: Vec<String> = topo.nodes.keys().cloned().collect();
        let services: Vec<ServiceState> = topo
            .services
            .iter()
            .map(|(name, spec)| ServiceState {
                name: name.clone(),
                spec: spec.clone(),
                up_since: None,
                down_since: None,
                next_k: 0,
            })
            .collect();
        let service_index: BTreeMap<String, usize> = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        let mut chains = Vec::new();
        let mut chain_of_entry = BTreeMap::new();
        for s in &services {
            if s.spec.routes.is_empty() {
                continue;
            }
            let names = topo.chain(&s.name).expect("validated topology");
            chain_of_entry.insert(s.name.clone(), chains.len());
            chains.push(Chain {
                services: names.iter().map(|n| service_index[n]).collect(),
                queue: VecDeque::new(),
            });
        }
        let default_path = topo
            .services
            .values()
            .flat_map(|s| s.routes.iter())
            .min_by_key(|r| r.len())
            .cloned()
            .unwrap_or_else(|| "/".into());
        let mut c = Cluster {
            node_alloc: vec![(0.0, 0); node_ids.len()],
            trace: SimTrace::new(start, node_ids.clone()),
            node_ids,
            topo,
            services,
            service_index,
            replicas: Vec::new(),
            chains,
            chain_of_entry,
            default_path,
            now: start,
            in_tick: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counters: RequestCounters::default(),
            next_id: 0,
        };
        for node in c.node_ids.clone() {
            c.trace.replicas.push(ReplicaTrace {
                id: format!("{SYSTEM_NAMESPACE}/{node}"),
                service: SYSTEM_NAMESPACE.into(),
                namespace: SYSTEM_NAMESPACE.into(),
                pod: node.clone(),
                node,
                layer: LayerTag::Isolation,
                kind: DeploymentKind::Pod,
                limits: None,
                created: start,
                ready: start,
                terminated: None,
                cpu: Vec::new(),
                mem: Vec::new(),
                watts: Vec::new(),
            });
        }
        for i in 0..c.services.len() {
            let spec = &c.services[i].spec;
            let n = if spec.is_function() {
                0
            } else {
                spec.resources.replicas_min
            };
            for _ in 0..n {
                c.spawn(i, start);
            }
        }
        c
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn counters(&self) -> RequestCounters {
        self.counters
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SimTrace {
        self.trace
    }

    pub fn topology(&self) -> &SimTopology {
        &self.topo
    }

    /// Replicas of `service` provisioned right now.
    pub fn replica_count(&self, service: &str) -> usize {
        let Some(&i) = self.service_index.get(service) else {
            return 0;
        };
        self.replicas
            .iter()
            .filter(|r| r.service == i && r.terminated.is_none())
            .count()
    }

    /// Advances `secs` seconds without client traffic.
    pub fn idle(&mut self, secs: u64) {
        for _ in 0..secs {
            let s = self.now;
            self.begin_tick(s);
            self.end_tick(s);
        }
    }

    /// Injects `incoming` requests spread evenly over the next second.
    pub fn step(&mut self, incoming: u64) -> StepOutcome {
        let s = self.now;
        let before = self.counters;
        self.begin_tick(s);
        let path = self.default_path.clone();
        for i in 0..incoming {
            self.next_id += 1;
            let req = Submission {
                id: self.next_id,
                method: "GET".into(),
                endpoint: path.clone(),
                at: s as f64 + (i as f64 + 0.5) / incoming as f64,
            };
            self.submit(&req);
        }
        self.end_tick(s);
        StepOutcome {
            served: self.counters.served - before.served,
            failed: self.counters.failed - before.failed,
            queued: self.pending() as u64,
        }
    }

    fn spawn(&mut self, service: usize, at: i64) -> Option<usize> {
        let spec = &self.services[service].spec;
        let (cpu, mem) = (spec.resources.cpu_limit, spec.resources.mem_limit);
        let fits = |n: usize, alloc: &[(f64, u64)], topo: &SimTopology, ids: &[String]| {
            let node = &topo.nodes[&ids[n]];
            alloc[n].0 + cpu <= node.cpu_capacity + 1e-9 && alloc[n].1 + mem <= node.mem_capacity
        };
        let node = match &spec.node {
            Some(pin) => {
                let n = self.node_ids.iter().position(|x| x == pin)?;
                fits(n, &self.node_alloc, &self.topo, &self.node_ids).then_some(n)?
            }
            None => (0..self.node_ids.len())
                .find(|&n| fits(n, &self.node_alloc, &self.topo, &self.node_ids))?,
        };
        self.node_alloc[node].0 += cpu;
        self.node_alloc[node].1 += mem;
        let st = &mut self.services[service];
        let pod = format!("{}-{}", st.name, st.next_k);
        st.next_k += 1;
        let ready = if st.spec.is_function() {
            at
        } else {
            at + st.spec.startup as i64
        };
        let trace = self.trace.replicas.len();
        self.trace.replicas.push(ReplicaTrace {
            id: format!("{}/{}", st.spec.namespace, pod),
            service: st.name.clone(),
            namespace: st.spec.namespace.clone(),
            pod,
            node: self.node_ids[node].clone(),
            layer: st.spec.layer,
            kind: st.spec.kind,
            limits: Some(st.spec.resources.clone()),
            created: at,
            ready,
            terminated: None,
            cpu: Vec::new(),
            mem: Vec::new(),
            watts: Vec::new(),
        });
        let idle = st.spec.idle_cpu.min(cpu);
        let live_now = self.in_tick && at == self.now;
        self.replicas.push(Replica {
            service,
            node,
            ready,
            terminated: None,
            budget: if live_now && ready <= at { cpu - idle } else { 0.0 },
            used: if live_now { idle } else { 0.0 },
            served: 0,
            idle_secs: 0,
            warm: false,
            trace,
        });
        Some(self.replicas.len() - 1)
    }

    fn terminate(&mut self, r: usize, at: i64) {
        let rep = &mut self.replicas[r];
        if rep.terminated.is_some() {
            return;
        }
        rep.terminated = Some(at);
        self.trace.replicas[rep.trace].terminated = Some(at);
        let spec = &self.services[rep.service].spec;
        self.node_alloc[rep.node].0 -= spec.resources.cpu_limit;
        self.node_alloc[rep.node].1 -= spec.resources.mem_limit;
    }

    fn live_at(&self, r: usize, s: i64) -> bool {
        let rep = &self.replicas[r];
        self.trace.replicas[rep.trace].created <= s && rep.terminated.is_none_or(|t| s < t)
    }

    fn ready_at(&self, r: usize, s: i64) -> bool {
        self.live_at(r, s) && self.replicas[r].ready <= s
    }

    /// Requests per second the chain can serve with its current replicas,
    /// and with a single replica per service.
    fn chain_capacity(&self, chain: usize) -> (f64, f64) {
        let mut total = f64::INFINITY;
        let mut single = f64::INFINITY;
        for &svc in &self.chains[chain].services {
            let spec = &self.services[svc].spec;
            if spec.per_request_cpu_ms <= 0.0 {
                continue;
            }
            let per = (spec.resources.cpu_limit - spec.idle_cpu.min(spec.resources.cpu_limit))
                / spec.per_request_cpu_ms;
            let n = if spec.is_function() {
                spec.resources.replicas_max as usize
            } else {
                (0..self.replicas.len())
                    .filter(|&r| self.replicas[r].service == svc && self.ready_at(r, self.now))
                    .count()
            };
            total = total.min(per * n as f64);
            single = single.min(per);
        }
        (total, single)
    }

    fn backlog_limit(&self, chain: usize) -> f64 {
        let (total, single) = self.chain_capacity(chain);
        BACKLOG_SECONDS * total.max(single)
    }

    /// Reserves one request's CPU along the chain. Returns the time the
    /// request spends in the chain and the fraction of the second already
    /// used at the entry service.
    fn reserve(&mut self, chain: usize, s: i64, at: f64) -> Option<(f64, f64)> {
        let services = self.chains[chain].services.clone();
        let mut taken: Vec<(usize, f64)> = Vec::with_capacity(services.len());
        let mut offset = 0.0;
        for (pos, &svc) in services.iter().enumerate() {
            let cost = self.services[svc].spec.per_request_cpu_ms;
            let mut best: Option<usize> = None;
            for r in 0..self.replicas.len() {
                if self.replicas[r].service != svc || !self.ready_at(r, s) {
                    continue;
                }
                if self.replicas[r].budget + 1e-9 < cost {
                    continue;
                }
                if best.is_none_or(|b| self.replicas[r].budget > self.replicas[b].budget) {
                    best = Some(r);
                }
            }
            let spec = &self.services[svc].spec;
            if best.is_none() && spec.is_function() {
                let live = (0..self.replicas.len())
                    .filter(|&r| self.replicas[r].service == svc && self.replicas[r].terminated.is_none())
                    .count();
                if live < spec.resources.replicas_max as usize {
                    best = self.spawn(svc, s);
                    if let Some(r) = best {
                        let limit = self.services[svc].spec.resources.cpu_limit;
                        self.replicas[r].budget = limit - self.services[svc].spec.idle_cpu.min(limit);
                        self.replicas[r].used = self.services[svc].spec.idle_cpu.min(limit);
                        self.trace.scaling_events.push(ScalingEvent {
                            at: s,
                            service: self.services[svc].name.clone(),
                            from: live as u32,
                            to: live as u32 + 1,
                        });
                    }
                }
            }
            let Some(r) = best else {
                for (r, c) in taken {
                    self.replicas[r].budget += c;
                    self.replicas[r].used -= c;
                    self.replicas[r].served -= 1;
                }
                return None;
            };
            if pos == 0 {
                let limit = self.services[svc].spec.resources.cpu_limit;
                offset = (1.0 - self.replicas[r].budget / limit).clamp(0.0, 1.0);
            }
            let rep = &mut self.replicas[r];
            rep.budget -= cost;
            rep.used += cost;
            rep.served += 1;
            taken.push((r, cost));
        }
        let mut time = 0.0;
        for (r, _) in &taken {
            let svc = self.replicas[*r].service;
            let spec = &self.services[svc].spec;
            let jitter = 1.0 + self.rng.gen_range(-JITTER..=JITTER);
            let mut t = spec.service_time * jitter;
            if spec.is_function() {
                if !self.replicas[*r].warm {
                    t += spec.cold_start;
                    self.replicas[*r].warm = true;
                }
                self.trace.invocations.push(InvocationRecord {
                    at,
                    service: self.services[svc].name.clone(),
                    duration: t,
                    mem_bytes: spec.resources.mem_limit,
                });
            }
            time += t;
        }
        Some((time, offset))
    }

    fn record_outcome(&mut self, at: f64, success: bool) {
        let idx = (at.floor() as i64 - self.trace.start).max(0) as usize;
        let v = if success {
            self.counters.served += 1;
            &mut self.trace.served
        } else {
            self.counters.failed += 1;
            &mut self.trace.failed
        };
        if v.len() <= idx {
            v.resize(idx + 1, 0);
        }
        v[idx] += 1;
    }

    fn tick_open(&mut self, s: i64) -> Vec<Completion> {
        self.in_tick = true;
        for r in 0..self.replicas.len() {
            let live = self.live_at(r, s);
            let ready = self.ready_at(r, s);
            let spec = &self.services[self.replicas[r].service].spec;
            let limit = spec.resources.cpu_limit;
            let idle = spec.idle_cpu.min(limit);
            let rep = &mut self.replicas[r];
            rep.served = 0;
            rep.used = if live { idle } else { 0.0 };
            rep.budget = if ready { limit - idle } else { 0.0 };
        }
        let mut done = Vec::new();
        for chain in 0..self.chains.len() {
            while let Some(front) = self.chains[chain].queue.front() {
                let (id, at) = (front.id, front.at);
                let Some((time, offset)) = self.reserve(chain, s, at) else {
                    break;
                };
                self.chains[chain].queue.pop_front();
                self.record_outcome(at, true);
                done.push(Completion {
                    id,
                    finished_at: at.max(s as f64 + offset) + time,
                    success: true,
                    status: STATUS_OK,
                });
            }
        }
        done
    }

    fn tick_close(&mut self, s: i64) {
        let mut node_cpu = vec![0.0; self.node_ids.len()];
        for r in 0..self.replicas.len() {
            if self.live_at(r, s) {
                node_cpu[self.replicas[r].node] += self.replicas[r].used;
            }
        }
        let mut node_watts = Vec::with_capacity(self.node_ids.len());
        let mut attributed = vec![0.0; self.node_ids.len()];
        for (n, id) in self.node_ids.iter().enumerate() {
            let node = &self.topo.nodes[id];
            let frac = (node_cpu[n] / node.cpu_capacity).min(1.0);
            node_watts.push(node.p_idle + (node.p_max - node.p_idle) * frac);
        }
        for r in 0..self.replicas.len() {
            if !self.live_at(r, s) {
                continue;
            }
            let rep = &self.replicas[r];
            let spec = &self.services[rep.service].spec;
            let node = &self.topo.nodes[&self.node_ids[rep.node]];
            let cpu = rep.used;
            let mem = (spec.mem_floor + spec.mem_per_request * rep.served).min(spec.resources.mem_limit) as f64;
            let watts = node.p_idle * spec.resources.cpu_limit / node.cpu_capacity
                + (node.p_max - node.p_idle) * cpu / node.cpu_capacity;
            attributed[rep.node] += watts;
            let t = &mut self.trace.replicas[rep.trace];
            t.cpu.push(cpu);
            t.mem.push(mem);
            t.watts.push(watts);
        }
        for (n, w) in node_watts.iter().enumerate() {
            let sys = &mut self.trace.replicas[n];
            sys.cpu.push(0.0);
            sys.mem.push(0.0);
            sys.watts.push((w - attributed[n]).max(0.0));
        }
        self.trace.push_node_watts(&node_watts);
        self.autoscale(s);
        self.reclaim_functions(s);
        self.now = s + 1;
        self.trace.end = self.now;
        self.in_tick = false;
    }

    fn autoscale(&mut self, s: i64) {
        for svc in 0..self.services.len() {
            let spec = &self.services[svc].spec;
            let Some(auto) = spec.autoscaler.clone() else {
                continue;
            };
            if spec.is_function() {
                continue;
            }
            let (min, max) = (spec.resources.replicas_min, spec.resources.replicas_max);
            let limit = spec.resources.cpu_limit;
            let mut ready = 0usize;
            let mut used = 0.0;
            let mut total: Vec<usize> = Vec::new();
            for r in 0..self.replicas.len() {
                if self.replicas[r].service != svc || self.replicas[r].terminated.is_some() {
                    continue;
                }
                total.push(r);
                if self.ready_at(r, s) {
                    ready += 1;
                    used += self.replicas[r].used;
                }
            }
            if ready == 0 {
                continue;
            }
            let util = used / (limit * ready as f64);
            let desired = ((ready as f64 * util / auto.target_cpu_fraction) - 1e-9)
                .ceil()
                .max(0.0) as u32;
            let desired = desired.clamp(min, max);
            let current = total.len() as u32;
            let st = &mut self.services[svc];
            if desired > current {
                let since = *st.up_since.get_or_insert(s);
                if s - since + 1 >= auto.scale_up_delay as i64 {
                    st.up_since = None;
                    let mut added = 0;
                    for _ in current..desired {
                        if self.spawn(svc, s + 1).is_some() {
                            added += 1;
                        }
                    }
                    if added > 0 {
                        self.trace.scaling_events.push(ScalingEvent {
                            at: s + 1,
                            service: self.services[svc].name.clone(),
                            from: current,
                            to: current + added,
                        });
                    }
                }
            } else {
                st.up_since = None;
            }
            let st = &mut self.services[svc];
            if desired < current {
                let since = *st.down_since.get_or_insert(s);
                if s - since + 1 >= auto.scale_down_delay as i64 {
                    st.down_since = None;
                    for &r in total.iter().rev().take((current - desired) as usize) {
                        self.terminate(r, s + 1);
                    }
                    self.trace.scaling_events.push(ScalingEvent {
                        at: s + 1,
                        service: self.services[svc].name.clone(),
                        from: current,
                        to: desired,
                    });
                }
            } else {
                st.down_since = None;
            }
        }
    }

    fn reclaim_functions(&mut self, s: i64) {
        for r in 0..self.replicas.len() {
            let svc = self.replicas[r].service;
            if !self.services[svc].spec.is_function() || !self.live_at(r, s) {
                continue;
            }
            let rep = &mut self.replicas[r];
            if rep.served == 0 {
                rep.idle_secs += 1;
            } else {
                rep.idle_secs = 0;
            }
            if rep.idle_secs >= FUNCTION_IDLE_TIMEOUT {
                let live = self
                    .replicas
                    .iter()
                    .filter(|x| x.service == svc && x.terminated.is_none())
                    .count() as u32;
                self.terminate(r, s + 1);
                self.trace.scaling_events.push(ScalingEvent {
                    at: s + 1,
                    service: self.services[svc].name.clone(),
                    from: live,
                    to: live - 1,
                });
            }
        }
    }

    fn enqueue_or_fail(&mut self, chain: usize, req: &Submission) -> Admission {
        if self.chains[chain].queue.len() as f64 >= self.backlog_limit(chain) {
            self.record_outcome(req.at, false);
            return Admission::Done(Completion {
                id: req.id,
                finished_at: req.at,
                success: false,
                status: STATUS_OVERLOADED,
            });
        }
        self.chains[chain].queue.push_back(Pending {
            id: req.id,
            at: req.at,
        });
        Admission::Queued
    }
}

impl VirtualTarget for Cluster {
    fn begin_tick(&mut self, sec: i64) -> Vec<Completion> {
        while self.now < sec {
            let s = self.now;
            self.tick_open(s);
            self.tick_close(s);
        }
        self.tick_open(sec)
    }

    fn submit(&mut self, req: &Submission) -> Admission {
        self.counters.injected += 1;
        let s = self.now;
        let chain = self
            .topo
            .route(&req.endpoint)
            .and_then(|entry| self.chain_of_entry.get(entry).copied());
        let Some(chain) = chain else {
            self.record_outcome(req.at, false);
            return Admission::Done(Completion {
                id: req.id,
                finished_at: req.at,
                success: false,
                status: STATUS_NOT_FOUND,
            });
        };
        if !self.chains[chain].queue.is_empty() {
            return self.enqueue_or_fail(chain, req);
        }
        match self.reserve(chain, s, req.at) {
            Some((time, _)) => {
                self.record_outcome(req.at, true);
                Admission::Done(Completion {
                    id: req.id,
                    finished_at: req.at + time,
                    success: true,
                    status: STATUS_OK,
                })
            }
            None => self.enqueue_or_fail(chain, req),
        }
    }

    fn end_tick(&mut self, sec: i64) {
        debug_assert_eq!(sec, self.now);
        self.tick_close(sec);
    }

    fn pending(&self) -> usize {
        self.chains.iter().map(|c| c.queue.len()).sum()
    }
}
