use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Destination of a logged record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dst {
    Rank(usize),
    /// One side of an all-to-all collective.
    All,
}

impl fmt::Display for Dst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dst::Rank(r) => write!(f, "{r}"),
            Dst::All => f.write_str("ALL"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageRecord {
    pub step: usize,
    pub scheme: &'static str,
    pub src: usize,
    pub dst: Dst,
    /// Real-valued elements moved; a complex sample counts as two.
    pub elements: u64,
}

impl fmt::Display for MessageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.step, self.scheme, self.src, self.dst, self.elements)
    }
}

/// How rank-local work inside a superstep is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Sequential,
    /// One OS thread per rank; ranks share nothing but the fabric.
    Threaded,
}

/// Payload addressed to (outgoing) or received from (incoming) `peer`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub peer: usize,
    pub data: Vec<f64>,
}

/// A simulated context-parallel rank group with a logging message fabric.
///
/// Execution is bulk-synchronous: ranks compute in a superstep, then one
/// exchange delivers every message posted during it. Records within a step
/// are ordered by `(src, dst)`, so logs do not depend on [`ExecMode`].
#[derive(Debug, Clone)]
pub struct SimGroup {
    n_ranks: usize,
    mode: ExecMode,
    step: usize,
    log: Vec<MessageRecord>,
    counters: BTreeMap<&'static str, u64>,
    resident_peak: Vec<usize>,
    filter_taps: Vec<usize>,
}

impl SimGroup {
    pub fn new(n_ranks: usize) -> Result<Self> {
        if !crate::fft::is_pow2(n_ranks) {
            return Err(Error::UnsupportedRanks {
                ranks: n_ranks,
                scheme: "any",
            });
        }
        Ok(Self {
            n_ranks,
            mode: ExecMode::Sequential,
            step: 0,
            log: Vec::new(),
            counters: BTreeMap::new(),
            resident_peak: vec![0; n_ranks],
            filter_taps: vec![0; n_ranks],
        })
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    /// Elements moved under `scheme`.
    pub fn counter(&self, scheme: &str) -> u64 {
        self.counters.get(scheme).copied().unwrap_or(0)
    }

    pub fn counters(&self) -> &BTreeMap<&'static str, u64> {
        &self.counters
    }

    pub fn total_elements(&self) -> u64 {
        self.counters.values().sum()
    }

    /// Number of logged records, optionally restricted to one scheme.
    pub fn messages(&self, scheme: Option<&str>) -> usize {
        self.log.iter().filter(|m| scheme.is_none_or(|s| m.scheme == s)).count()
    }

    /// Distinct exchange steps that logged traffic under `scheme`.
    pub fn rounds(&self, scheme: &str) -> usize {
        self.log
            .iter()
            .filter(|m| m.scheme == scheme)
            .map(|m| m.step)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Largest number of sequence samples per channel any rank held in its
    /// working buffers.
    pub fn resident_peak(&self) -> &[usize] {
        &self.resident_peak
    }

    /// Filter taps stored on each rank by the last scheme run.
    pub fn filter_storage(&self) -> &[usize] {
        &self.filter_taps
    }

    /// Clears the log, counters and storage accounting.
    pub fn reset(&mut self) {
        self.step = 0;
        self.log.clear();
        self.counters.clear();
        self.resident_peak.fill(0);
        self.filter_taps.fill(0);
    }

    /// Newline-delimited `step,scheme,src,dst,elements` records.
    pub fn export_log(&self) -> String {
        let mut out = String::from("step,scheme,src,dst,elements\n");
        for m in &self.log {
            out.push_str(&m.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_log(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.export_log())
    }

    /// Runs `f(rank)` for every rank as one compute superstep.
    pub(crate) fn run<T: Send>(&self, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
        match self.mode {
            ExecMode::Sequential => (0..self.n_ranks).map(f).collect(),
            ExecMode::Threaded => std::thread::scope(|s| {
                let f = &f;
                let handles: Vec<_> = (0..self.n_ranks).map(|r| s.spawn(move || f(r))).collect();
                handles.into_iter().map(|h| h.join().expect("rank thread panicked")).collect()
            }),
        }
    }

    /// Delivers point-to-point messages. `outbox[src]` lists envelopes
    /// addressed to peers; returns each rank's inbox ordered by source.
    pub(crate) fn exchange(&mut self, scheme: &'static str, outbox: Vec<Vec<Envelope>>) -> Vec<Vec<Envelope>> {
        self.deliver(scheme, outbox, false)
    }

    /// Delivers one all-to-all round. Self-addressed slabs stay local and
    /// are neither logged nor counted; each source logs one `ALL` record.
    pub(crate) fn all_to_all(&mut self, scheme: &'static str, outbox: Vec<Vec<Envelope>>) -> Vec<Vec<Envelope>> {
        self.deliver(scheme, outbox, true)
    }

    fn deliver(&mut self, scheme: &'static str, outbox: Vec<Vec<Envelope>>, collective: bool) -> Vec<Vec<Envelope>> {
        assert_eq!(outbox.len(), self.n_ranks, "one outbox per rank");
        let mut inbox: Vec<Vec<Envelope>> = vec![Vec::new(); self.n_ranks];
        let mut records = Vec::new();
        for (src, msgs) in outbox.into_iter().enumerate() {
            let mut off_rank = 0u64;
            for env in msgs {
                assert!(env.peer < self.n_ranks, "message to rank {} of {}", env.peer, self.n_ranks);
                let n = env.data.len() as u64;
                if env.peer != src {
                    if collective {
                        off_rank += n;
                    } else {
                        records.push(MessageRecord {
                            step: self.step,
                            scheme,
                            src,
                            dst: Dst::Rank(env.peer),
                            elements: n,
                        });
                    }
                } else {
                    assert!(collective, "point-to-point message to self on rank {src}");
                }
                inbox[env.peer].push(Envelope { peer: src, data: env.data });
            }
            if collective && off_rank > 0 {
                records.push(MessageRecord {
                    step: self.step,
                    scheme,
                    src,
                    dst: Dst::All,
                    elements: off_rank,
                });
            }
        }
        records.sort();
        for r in &records {
            *self.counters.entry(scheme).or_insert(0) += r.elements;
        }
        self.log.extend(records);
        for msgs in &mut inbox {
            msgs.sort_by_key(|e| e.peer);
        }
        self.step += 1;
        inbox
    }

    pub(crate) fn note_resident(&mut self, rank: usize, samples: usize) {
        let peak = &mut self.resident_peak[rank];
        *peak = (*peak).max(samples);
    }

    pub(crate) fn set_filter_storage(&mut self, taps: Vec<usize>) {
        assert_eq!(taps.len(), self.n_ranks);
        self.filter_taps = taps;
    }
}
