//! Post-run safety checks over a trace.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::sim::{parse_trace, TraceParseError, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    /// Every index applied by two nodes holds the same entry on both.
    PrefixEquality,
    /// No request id takes effect twice on one node.
    AtMostOnceApply,
    /// Acknowledged non-transactional requests are applied on every live
    /// node. Only judged for runs in which no leader crashed.
    AckedDurability,
    /// A (generation, index) pair is allocated to one request only.
    FutureIndexUniqueness,
    /// Every allocated index belongs to its allocator's residue class.
    ResidueInvariant,
    /// A closed window never reopens.
    WindowMonotonicity,
    /// Materialized entries carry the payload their data-leader allocated.
    SignalSoundness,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::PrefixEquality,
        Check::AtMostOnceApply,
        Check::AckedDurability,
        Check::FutureIndexUniqueness,
        Check::ResidueInvariant,
        Check::WindowMonotonicity,
        Check::SignalSoundness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Check::PrefixEquality => "prefix_equality",
            Check::AtMostOnceApply => "at_most_once_apply",
            Check::AckedDurability => "acked_durability",
            Check::FutureIndexUniqueness => "future_index_uniqueness",
            Check::ResidueInvariant => "residue_invariant",
            Check::WindowMonotonicity => "window_monotonicity",
            Check::SignalSoundness => "signal_soundness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    /// Set when the check was not applicable to this run.
    pub skipped: bool,
    /// First counterexample, as trace line text.
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictReport {
    pub results: Vec<CheckResult>,
}

impl VerdictReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn result(&self, check: Check) -> &CheckResult {
        self.results
            .iter()
            .find(|r| r.check == check)
            .expect("every check is reported")
    }
}

impl fmt::Display for VerdictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let status = match (r.passed, r.skipped) {
                (true, true) => "SKIP",
                (true, false) => "PASS",
                (false, _) => "FAIL",
            };
            write!(f, "{status} {}", r.check.as_str())?;
            if let Some(c) = &r.counterexample {
                write!(f, " at: {c}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub fn verify_trace_text(text: &str) -> Result<VerdictReport, TraceParseError> {
    Ok(verify_run(&parse_trace(text)?))
}

fn node_of(field: &str) -> Option<u64> {
    field.strip_prefix('n')?.parse().ok()
}

struct Outcome {
    failure: Option<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failure: None }
    }
    fn fail(&mut self, r: &TraceRecord) {
        if self.failure.is_none() {
            self.failure = Some(r.to_line());
        }
    }
}

pub fn verify_run(trace: &[TraceRecord]) -> VerdictReport {
    let mut prefix = Outcome::new();
    let mut once = Outcome::new();
    let mut durable = Outcome::new();
    let mut unique = Outcome::new();
    let mut residue = Outcome::new();
    let mut windows = Outcome::new();
    let mut signals = Outcome::new();

    // index -> (rid, digest, kind) as first applied anywhere.
    let mut applied_at: HashMap<u64, (String, String, String)> = HashMap::new();
    let mut applied_rids: HashMap<u64, HashSet<String>> = HashMap::new();
    let mut effective: HashMap<(u64, String), ()> = HashMap::new();
    let mut last_applied: HashMap<u64, u64> = HashMap::new();
    let mut allocations: HashMap<(u64, u64), String> = HashMap::new();
    let mut alloc_digest: HashMap<String, String> = HashMap::new();
    let mut window_state: HashMap<(u64, u64, u64), bool> = HashMap::new();
    let mut acked_nt: BTreeMap<String, usize> = BTreeMap::new();
    let mut leader_crashed = false;
    let mut alive_at_end: Vec<u64> = Vec::new();

    for (pos, r) in trace.iter().enumerate() {
        match r.event.as_str() {
            "apply" => {
                let Some(node) = node_of(&r.from) else {
                    continue;
                };
                let (Some(index), Some(rid), Some(digest)) =
                    (r.get_u64("index"), r.get("rid"), r.get("digest"))
                else {
                    prefix.fail(r);
                    continue;
                };
                let key = (rid.to_string(), digest.to_string(), r.msg_kind.clone());
                match applied_at.get(&index) {
                    Some(existing) if *existing != key => prefix.fail(r),
                    Some(_) => {}
                    None => {
                        applied_at.insert(index, key);
                    }
                }
                let prev = last_applied.insert(node, index).unwrap_or(0);
                if index != prev + 1 {
                    prefix.fail(r);
                }
                applied_rids
                    .entry(node)
                    .or_default()
                    .insert(rid.to_string());
                let counts = matches!(r.msg_kind.as_str(), "normal" | "future")
                    && r.get("outcome") != Some("duplicate");
                if counts && effective.insert((node, rid.to_string()), ()).is_some() {
                    once.fail(r);
                }
            }
            "alloc" => {
                let (Some(node), Some(index), Some(gen), Some(rid)) = (
                    node_of(&r.from),
                    r.get_u64("index"),
                    r.get_u64("gen"),
                    r.get("rid"),
                ) else {
                    unique.fail(r);
                    continue;
                };
                match allocations.get(&(gen, index)) {
                    Some(other) if other != rid => unique.fail(r),
                    _ => {
                        allocations.insert((gen, index), rid.to_string());
                    }
                }
                if gen == 0 || index % gen != node {
                    residue.fail(r);
                }
                if let Some(d) = r.get("digest") {
                    alloc_digest.insert(rid.to_string(), d.to_string());
                }
            }
            "materialize" => {
                let (Some(rid), Some(d)) = (r.get("rid"), r.get("digest")) else {
                    signals.fail(r);
                    continue;
                };
                if alloc_digest.get(rid).map(String::as_str) != Some(d) {
                    signals.fail(r);
                }
            }
            "window" => {
                let (Some(node), Some(gen), Some(start)) =
                    (node_of(&r.from), r.get_u64("gen"), r.get_u64("start"))
                else {
                    windows.fail(r);
                    continue;
                };
                let open = r.get("state") == Some("open");
                if let Some(false) = window_state.insert((node, gen, start), open) {
                    if open {
                        windows.fail(r);
                    }
                }
            }
            "client_ack" if r.msg_kind == "ntx" => {
                if let Some(rid) = r.get("rid") {
                    acked_nt.entry(rid.to_string()).or_insert(pos);
                }
            }
            "fault" if r.msg_kind == "crash" && r.get("leader") == Some("1") => {
                leader_crashed = true;
            }
            "final" if r.get("alive") == Some("1") => {
                if let Some(n) = node_of(&r.from) {
                    alive_at_end.push(n);
                }
            }
            _ => {}
        }
    }

    let durability_applies = !leader_crashed;
    if durability_applies {
        'outer: for (rid, pos) in &acked_nt {
            for n in &alive_at_end {
                let has = applied_rids.get(n).is_some_and(|s| s.contains(rid));
                if !has {
                    durable.failure =
                        Some(format!("{} (not applied on n{n})", trace[*pos].to_line()));
                    break 'outer;
                }
            }
        }
    }

    let result = |check, o: Outcome, skipped: bool| CheckResult {
        check,
        passed: o.failure.is_none(),
        skipped,
        counterexample: o.failure,
    };
    VerdictReport {
        results: vec![
            result(Check::PrefixEquality, prefix, false),
            result(Check::AtMostOnceApply, once, false),
            result(Check::AckedDurability, durable, !durability_applies),
            result(Check::FutureIndexUniqueness, unique, false),
            result(Check::ResidueInvariant, residue, false),
            result(Check::WindowMonotonicity, windows, false),
            result(Check::SignalSoundness, signals, false),
        ],
    }
}
