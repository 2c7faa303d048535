use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_FILE: &str = "state.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pending,
    Building,
    Patching,
    Deploying,
    Settling,
    Loading,
    Collecting,
    TearingDown,
    Exporting,
    Done,
    Faulty,
    Retried,
}

const LINEAR: [Phase; 10] = [
    Phase::Pending,
    Phase::Building,
    Phase::Patching,
    Phase::Deploying,
    Phase::Settling,
    Phase::Loading,
    Phase::Collecting,
    Phase::TearingDown,
    Phase::Exporting,
    Phase::Done,
];

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pending => "pending",
            Phase::Building => "building",
            Phase::Patching => "patching",
            Phase::Deploying => "deploying",
            Phase::Settling => "settling",
            Phase::Loading => "loading",
            Phase::Collecting => "collecting",
            Phase::TearingDown => "tearing_down",
            Phase::Exporting => "exporting",
            Phase::Done => "done",
            Phase::Faulty => "faulty",
            Phase::Retried => "retried",
        }
    }

    /// No further transition within this attempt, except faulty → retried.
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Faulty | Phase::Retried)
    }

    /// Successor on the happy path.
    pub fn next(self) -> Option<Phase> {
        let i = LINEAR.iter().position(|p| *p == self)?;
        LINEAR.get(i + 1).copied()
    }

    pub fn can_become(self, to: Phase) -> bool {
        self.next() == Some(to)
            || (to == Phase::Faulty && !self.is_terminal())
            || (self == Phase::Faulty && to == Phase::Retried)
    }

    /// Whether a deployment may exist in this phase.
    pub fn holds_deployment(self) -> bool {
        (Phase::Deploying..=Phase::TearingDown).contains(&self)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        LINEAR
            .iter()
            .chain(&[Phase::Faulty, Phase::Retried])
            .find(|p| p.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

/// One (variant, workload, repetition) cell of the plan.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub variant: String,
    pub workload: String,
    pub repetition: u32,
}

impl CellId {
    pub fn new(variant: &str, workload: &str, repetition: u32) -> Self {
        CellId {
            variant: variant.into(),
            workload: workload.into(),
            repetition,
        }
    }

    /// `<variant>/<workload>/<rep>` below the run directory.
    pub fn dir(&self) -> PathBuf {
        PathBuf::from(&self.variant)
            .join(&self.workload)
            .join(self.repetition.to_string())
    }

    pub fn attempt_dir(&self, attempt: u32) -> PathBuf {
        self.dir().join(format!("attempt-{attempt}"))
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.variant, self.workload, self.repetition)
    }
}

/// One journal line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub cell: CellId,
    pub attempt: u32,
    pub phase: Phase,
    /// Wall-clock time, RFC 3339.
    pub at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("{cell} attempt {attempt}: illegal transition {from} → {to}")]
    Illegal {
        cell: CellId,
        attempt: u32,
        from: Phase,
        to: Phase,
    },
    #[error("{cell}: attempt {attempt} exceeds the limit of {max}")]
    TooManyAttempts { cell: CellId, attempt: u32, max: u32 },
}

/// State of one attempt of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub cell: CellId,
    pub phase: Phase,
    pub attempt: u32,
    pub timestamps: Vec<(Phase, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl RunState {
    fn fresh(cell: CellId, attempt: u32, at: String) -> Self {
        RunState {
            cell,
            phase: Phase::Pending,
            attempt,
            timestamps: vec![(Phase::Pending, at)],
            diagnostics: Vec::new(),
        }
    }

    fn apply(&mut self, t: &Transition) -> Result<(), StateError> {
        if !self.phase.can_become(t.phase) {
            return Err(StateError::Illegal {
                cell: self.cell.clone(),
                attempt: self.attempt,
                from: self.phase,
                to: t.phase,
            });
        }
        self.phase = t.phase;
        self.timestamps.push((t.phase, t.at.clone()));
        if let Some(d) = &t.diagnostic {
            self.diagnostics.push(d.clone());
        }
        Ok(())
    }
}

/// Every attempt of one cell, oldest first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellHistory {
    pub attempts: Vec<RunState>,
}

impl CellHistory {
    pub fn current(&self) -> Option<&RunState> {
        self.attempts.last()
    }

    pub fn done_attempt(&self) -> Option<u32> {
        self.attempts
            .iter()
            .find(|a| a.phase == Phase::Done)
            .map(|a| a.attempt)
    }
}

/// Journals every transition before the work of the new phase starts.
pub struct StateMachine {
    file: File,
    max_attempts: u32,
    histories: BTreeMap<CellId, CellHistory>,
}

impl StateMachine {
    /// Opens (or creates) `state.jsonl` in `run_dir` and replays it.
    pub fn open(run_dir: &Path, max_attempts: u32) -> io::Result<Self> {
        let path = run_dir.join(STATE_FILE);
        let transitions = read_transitions(&path)?;
        let histories = replay(&transitions)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(StateMachine {
            file,
            max_attempts,
            histories,
        })
    }

    pub fn histories(&self) -> &BTreeMap<CellId, CellHistory> {
        &self.histories
    }

    pub fn history(&self, cell: &CellId) -> Option<&CellHistory> {
        self.histories.get(cell)
    }

    /// Starts attempt `attempt` of `cell` in the pending phase.
    pub fn begin(&mut self, cell: &CellId, attempt: u32) -> Result<(), RunStateError> {
        if attempt > self.max_attempts {
            return Err(StateError::TooManyAttempts {
                cell: cell.clone(),
                attempt,
                max: self.max_attempts,
            }
            .into());
        }
        let h = self.histories.entry(cell.clone()).or_default();
        if let Some(prev) = h.current() {
            if prev.phase != Phase::Retried || prev.attempt + 1 != attempt {
                return Err(StateError::Illegal {
                    cell: cell.clone(),
                    attempt,
                    from: prev.phase,
                    to: Phase::Pending,
                }
                .into());
            }
        }
        let t = Transition {
            cell: cell.clone(),
            attempt,
            phase: Phase::Pending,
            at: now(),
            diagnostic: None,
        };
        write_line(&mut self.file, &t)?;
        h.attempts.push(RunState::fresh(cell.clone(), attempt, t.at));
        Ok(())
    }

    /// Moves the current attempt of `cell` to `to`, durably.
    pub fn advance(
        &mut self,
        cell: &CellId,
        to: Phase,
        diagnostic: Option<String>,
    ) -> Result<(), RunStateError> {
        let state = self
            .histories
            .get_mut(cell)
            .and_then(|h| h.attempts.last_mut())
            .ok_or_else(|| StateError::Illegal {
                cell: cell.clone(),
                attempt: 0,
                from: Phase::Pending,
                to,
            })?;
        let t = Transition {
            cell: cell.clone(),
            attempt: state.attempt,
            phase: to,
            at: now(),
            diagnostic,
        };
        if !state.phase.can_become(to) {
            return Err(StateError::Illegal {
                cell: cell.clone(),
                attempt: state.attempt,
                from: state.phase,
                to,
            }
            .into());
        }
        write_line(&mut self.file, &t)?;
        state.apply(&t)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunStateError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("state journal: {0}")]
    Io(#[from] io::Error),
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_line(file: &mut File, t: &Transition) -> io::Result<()> {
    let mut line = serde_json::to_string(t).expect("transitions serialize");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.sync_data()
}

/// Reads a state journal; a torn final line is ignored.
pub fn read_transitions(path: &Path) -> io::Result<Vec<Transition>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(t) => out.push(t),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} line {}: {e}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// Rebuilds per-cell histories, checking every transition.
pub fn replay(transitions: &[Transition]) -> Result<BTreeMap<CellId, CellHistory>, StateError> {
    let mut out: BTreeMap<CellId, CellHistory> = BTreeMap::new();
    for t in transitions {
        let h = out.entry(t.cell.clone()).or_default();
        if t.phase == Phase::Pending {
            let ok = match h.current() {
                None => true,
                Some(prev) => prev.phase == Phase::Retried && prev.attempt + 1 == t.attempt,
            };
            if !ok {
                let from = h.current().map_or(Phase::Pending, |p| p.phase);
                return Err(StateError::Illegal {
                    cell: t.cell.clone(),
                    attempt: t.attempt,
                    from,
                    to: Phase::Pending,
                });
            }
            h.attempts
                .push(RunState::fresh(t.cell.clone(), t.attempt, t.at.clone()));
            continue;
        }
        match h.attempts.last_mut() {
            Some(s) if s.attempt == t.attempt => s.apply(t)?,
            _ => {
                return Err(StateError::Illegal {
                    cell: t.cell.clone(),
                    attempt: t.attempt,
                    from: Phase::Pending,
                    to: t.phase,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell() -> CellId {
        CellId::new("v", "w", 1)
    }

    #[test]
    fn happy_path_is_linear() {
        let mut p = Phase::Pending;
        let mut n = 0;
        while let Some(next) = p.next() {
            assert!(p.can_become(next));
            p = next;
            n += 1;
        }
        assert_eq!(p, Phase::Done);
        assert_eq!(n, 9);
        assert!(!Phase::Done.can_become(Phase::Faulty));
        assert!(!Phase::Loading.can_become(Phase::Settling));
        assert!(Phase::Loading.can_become(Phase::Faulty));
        assert!(Phase::Faulty.can_become(Phase::Retried));
    }

    #[test]
    fn journal_survives_reopen_and_retries() {
        let dir = tempfile::tempdir().unwrap();
        let c = cell();
        {
            let mut sm = StateMachine::open(dir.path(), 3).unwrap();
            sm.begin(&c, 1).unwrap();
            sm.advance(&c, Phase::Building, None).unwrap();
            sm.advance(&c, Phase::Faulty, Some("build failed".into())).unwrap();
            sm.advance(&c, Phase::Retried, None).unwrap();
            sm.begin(&c, 2).unwrap();
            sm.advance(&c, Phase::Building, None).unwrap();
        }
        let sm = StateMachine::open(dir.path(), 3).unwrap();
        let h = sm.history(&c).unwrap();
        assert_eq!(h.attempts.len(), 2);
        assert_eq!(h.attempts[0].phase, Phase::Retried);
        assert_eq!(h.attempts[0].diagnostics, vec!["build failed"]);
        assert_eq!(h.current().unwrap().phase, Phase::Building);
    }

    #[test]
    fn illegal_moves_and_attempt_limit_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = cell();
        let mut sm = StateMachine::open(dir.path(), 1).unwrap();
        sm.begin(&c, 1).unwrap();
        assert!(sm.advance(&c, Phase::Loading, None).is_err());
        sm.advance(&c, Phase::Faulty, None).unwrap();
        sm.advance(&c, Phase::Retried, None).unwrap();
        assert!(matches!(
            sm.begin(&c, 2),
            Err(RunStateError::State(StateError::TooManyAttempts { .. }))
        ));
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let c = cell();
        {
            let mut sm = StateMachine::open(dir.path(), 3).unwrap();
            sm.begin(&c, 1).unwrap();
        }
        let path = dir.path().join(STATE_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"cell\":{\"vari").unwrap();
        assert_eq!(read_transitions(&path).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn replay_accepts_exactly_legal_sequences(steps in prop::collection::vec(0usize..12, 0..20)) {
            let all = [
                Phase::Pending, Phase::Building, Phase::Patching, Phase::Deploying,
                Phase::Settling, Phase::Loading, Phase::Collecting, Phase::TearingDown,
                Phase::Exporting, Phase::Done, Phase::Faulty, Phase::Retried,
            ];
            let mut ts = vec![Transition {
                cell: cell(), attempt: 1, phase: Phase::Pending, at: String::new(), diagnostic: None,
            }];
            let mut cur = Phase::Pending;
            let mut legal = true;
            for s in steps {
                let to = all[s];
                if to == Phase::Pending {
                    continue;
                }
                legal &= cur.can_become(to);
                cur = to;
                ts.push(Transition { cell: cell(), attempt: 1, phase: to, at: String::new(), diagnostic: None });
            }
            prop_assert_eq!(replay(&ts).is_ok(), legal);
        }
    }
}
