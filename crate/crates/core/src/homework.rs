//! Home/work anchor detection.
//!
//! A day supports the pair `(home, work)` when the worker flows that day
//! contain `home -> work` in the morning peak (T1 or T2), `work -> home` in
//! the evening peak (T6 or T7), and no `work -> home` flow in the
//! disqualifying window (T3-T5 by default). A midday return means the
//! morning trip was not a plain commute. Pairs supported on at least
//! `min_days` days are reported.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::OdStore;
use crate::model::{CalendarDay, HexId, Interval};

pub const MORNING_INTERVALS: [u8; 2] = [1, 2];
pub const EVENING_INTERVALS: [u8; 2] = [6, 7];
pub const DEFAULT_DISQUALIFIER: [u8; 3] = [3, 4, 5];
pub const DEFAULT_MIN_DAYS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionRule {
    pub min_days: usize,
    /// Intervals in which a reverse (work -> home) flow voids the day.
    pub disqualifier: Vec<u8>,
}

impl Default for DetectionRule {
    fn default() -> Self {
        DetectionRule {
            min_days: DEFAULT_MIN_DAYS,
            disqualifier: DEFAULT_DISQUALIFIER.to_vec(),
        }
    }
}

impl DetectionRule {
    pub fn with_min_days(min_days: usize) -> Self {
        DetectionRule {
            min_days,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_days < 1 {
            return Err(Error::Domain("min_days must be at least 1".into()));
        }
        for &iv in &self.disqualifier {
            Interval::new(iv)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HomeWorkPair {
    pub home: HexId,
    pub work: HexId,
    pub qualifying_days: BTreeSet<CalendarDay>,
}

fn has_edge(store: &OdStore, day: CalendarDay, intervals: &[u8], from: HexId, to: HexId) -> bool {
    intervals.iter().any(|&iv| {
        let iv = Interval::new(iv).expect("validated interval");
        store
            .flows_from(day, iv, from)
            .into_iter()
            .any(|row| store.destination_of(row) == to)
    })
}

/// Whether `day` supports `(home, work)` under the default disqualifier.
pub fn day_qualifies(store: &OdStore, home: HexId, work: HexId, day: CalendarDay) -> bool {
    day_qualifies_with(store, home, work, day, &DEFAULT_DISQUALIFIER)
}

pub fn day_qualifies_with(
    store: &OdStore,
    home: HexId,
    work: HexId,
    day: CalendarDay,
    disqualifier: &[u8],
) -> bool {
    home != work
        && has_edge(store, day, &MORNING_INTERVALS, home, work)
        && has_edge(store, day, &EVENING_INTERVALS, work, home)
        && !has_edge(store, day, disqualifier, work, home)
}

/// Detects pairs supported on at least `min_days` days, sorted by
/// `(home, work)`.
pub fn detect_home_work(store: &OdStore, min_days: usize) -> Result<Vec<HomeWorkPair>> {
    detect_with(store, &DetectionRule::with_min_days(min_days))
}

pub fn detect_with(store: &OdStore, rule: &DetectionRule) -> Result<Vec<HomeWorkPair>> {
    rule.validate()?;
    let edges_in = |day: CalendarDay, intervals: &[u8]| -> HashSet<(HexId, HexId)> {
        intervals
            .iter()
            .flat_map(|&iv| store.rows_on(day, Interval::new(iv).expect("validated interval")))
            .map(|row| (store.origin_of(row), store.destination_of(row)))
            .collect()
    };

    let per_day: Vec<(CalendarDay, Vec<(HexId, HexId)>)> = store
        .days_present()
        .into_par_iter()
        .map(|day| {
            let morning = edges_in(day, &MORNING_INTERVALS);
            let evening = edges_in(day, &EVENING_INTERVALS);
            let midday = edges_in(day, &rule.disqualifier);
            let hits = morning
                .into_iter()
                .filter(|&(h, w)| h != w && evening.contains(&(w, h)) && !midday.contains(&(w, h)))
                .collect();
            (day, hits)
        })
        .collect();

    let mut days_by_pair: BTreeMap<(HexId, HexId), BTreeSet<CalendarDay>> = BTreeMap::new();
    for (day, hits) in per_day {
        for pair in hits {
            days_by_pair.entry(pair).or_default().insert(day);
        }
    }
    Ok(days_by_pair
        .into_iter()
        .filter(|(_, days)| days.len() >= rule.min_days)
        .map(|((home, work), qualifying_days)| HomeWorkPair {
            home,
            work,
            qualifying_days,
        })
        .collect())
}

/// Detected pairs together with the flows along their edges.
///
/// `flows` holds every record on a detected edge in either direction.
/// Diary chaining starts from those edges but follows the day onwards
/// through `source`, the full store the pairs were detected from, since
/// secondary trips never lie on a home/work edge.
#[derive(Clone, Debug)]
pub struct HomeWorkMatrix {
    pub pairs: Vec<HomeWorkPair>,
    pub flows: OdStore,
    pub source: Arc<OdStore>,
}

impl HomeWorkMatrix {
    /// Every hex that is a home or a work place of some pair.
    pub fn anchors(&self) -> BTreeSet<HexId> {
        self.pairs.iter().flat_map(|p| [p.home, p.work]).collect()
    }

    pub fn homes(&self) -> BTreeSet<HexId> {
        self.pairs.iter().map(|p| p.home).collect()
    }

    pub fn contains(&self, hex: HexId) -> bool {
        self.pairs.iter().any(|p| p.home == hex || p.work == hex)
    }
}

pub fn build_homework_matrix(store: Arc<OdStore>, pairs: &[HomeWorkPair]) -> HomeWorkMatrix {
    let edges: HashSet<(HexId, HexId)> = pairs
        .iter()
        .flat_map(|p| [(p.home, p.work), (p.work, p.home)])
        .collect();
    let flows = store.filter(|r| edges.contains(&(r.origin, r.destination)));
    HomeWorkMatrix {
        pairs: pairs.to_vec(),
        flows,
        source: store,
    }
}

pub const PAIRS_HEADER: &str = "home_hex,work_hex,qualifying_days";

pub fn write_pairs_csv<W: Write>(pairs: &[HomeWorkPair], out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{PAIRS_HEADER}")?;
    for p in pairs {
        let days: Vec<String> = p.qualifying_days.iter().map(ToString::to_string).collect();
        writeln!(out, "{},{},{}", p.home, p.work, days.join(";"))?;
    }
    out.flush()
}

pub fn read_pairs_csv<R: BufRead>(input: R, source: &str) -> Result<Vec<HomeWorkPair>> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if row == 1 {
            if line != PAIRS_HEADER {
                return Err(Error::Header {
                    path: source.into(),
                    found: line.into(),
                    expected: PAIRS_HEADER.into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: source.into(),
            row,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(malformed(format!(
                "expected 3 fields, found {}",
                fields.len()
            )));
        }
        let home = fields[0]
            .parse()
            .map_err(|e: Error| malformed(e.to_string()))?;
        let work = fields[1]
            .parse()
            .map_err(|e: Error| malformed(e.to_string()))?;
        let qualifying_days = fields[2]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<CalendarDay>())
            .collect::<Result<BTreeSet<_>>>()
            .map_err(|e| malformed(e.to_string()))?;
        pairs.push(HomeWorkPair {
            home,
            work,
            qualifying_days,
        });
    }
    Ok(pairs)
}
