//! Artificial travel diaries for one anchor hexagon and weekday.
//!
//! Stage 1 holds the anchor's morning-peak (T1/T2) flows along its detected
//! home/work edges plus its intraflow. Each later stage `i` (2..=8) holds the
//! interval-`i` flows leaving any destination of stage `i - 1`. The full-day
//! interval never takes part. Flows inside each temporal regime are then
//! mined with Eclat, one transaction per calendar day of the weekday.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homework::HomeWorkMatrix;
use crate::ingest::{FootfallStore, OdStore};
use crate::mining::{eclat, FrequentItemset, Transaction};
use crate::model::{check_weekday, CalendarDay, HexId, Interval, Month, TemporalRegime, UserType};

/// A directed flow in one interval; the item type of diary mining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FlowItem {
    pub origin: HexId,
    pub destination: HexId,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageFlow {
    pub origin: HexId,
    pub destination: HexId,
    pub interval: Interval,
    /// Count summed over every day of the weekday.
    pub count: u64,
}

impl StageFlow {
    pub fn item(&self) -> FlowItem {
        FlowItem {
            origin: self.origin,
            destination: self.destination,
            interval: self.interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainStage {
    pub stage_index: u8,
    /// Sorted by `(interval, origin, destination)`.
    pub flows: Vec<StageFlow>,
}

impl ChainStage {
    pub fn destinations(&self) -> BTreeSet<HexId> {
        self.flows.iter().map(|f| f.destination).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AttributeBag {
    /// Mean daily footfall per user type.
    pub footfall_mean: BTreeMap<UserType, f64>,
    pub extra: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiaryPattern {
    pub anchor: HexId,
    pub weekday: u8,
    pub days: Vec<CalendarDay>,
    pub min_support: usize,
    pub stages: Vec<ChainStage>,
    pub regime_patterns: BTreeMap<TemporalRegime, Vec<FrequentItemset<FlowItem>>>,
    /// Anchor-to-anchor counts for intervals 1..=8.
    pub intraflow_series: [u64; 8],
    /// Counts arriving at the anchor from other hexes, intervals 1..=8.
    pub inflow_series: [u64; 8],
    pub enrichment: BTreeMap<HexId, AttributeBag>,
}

impl DiaryPattern {
    /// Hexes named by any mined pattern, plus the anchor.
    pub fn mentioned_hexes(&self) -> BTreeSet<HexId> {
        let mut out: BTreeSet<HexId> = self
            .regime_patterns
            .values()
            .flatten()
            .flat_map(|set| set.items.iter().flat_map(|i| [i.origin, i.destination]))
            .collect();
        out.insert(self.anchor);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `max(2, ceil(n / 2))` where `n` is how often the weekday occurs in the month.
pub fn default_min_support(month: Month, weekday: u8) -> usize {
    let n = month.days_with_weekday(weekday).len();
    n.div_ceil(2).max(2)
}

fn weekday_days(store: &OdStore, weekday: u8) -> Vec<CalendarDay> {
    store
        .month()
        .map(|m| m.days_with_weekday(weekday))
        .unwrap_or_default()
}

fn collect_stage(stage_index: u8, sums: BTreeMap<(Interval, HexId, HexId), u64>) -> ChainStage {
    ChainStage {
        stage_index,
        flows: sums
            .into_iter()
            .map(|((interval, origin, destination), count)| StageFlow {
                origin,
                destination,
                interval,
                count,
            })
            .collect(),
    }
}

/// Chains flows from `anchor` across intervals 1..=8 over every day of
/// `weekday`. Always returns eight stages; later ones may be empty.
pub fn chain_stages(m: &HomeWorkMatrix, anchor: HexId, weekday: u8) -> Result<Vec<ChainStage>> {
    check_weekday(weekday)?;
    if !m.contains(anchor) {
        return Err(Error::NotFound(format!(
            "anchor {anchor} is not part of any home/work pair"
        )));
    }
    let source = &*m.source;
    let days = weekday_days(source, weekday);
    let partners: HashSet<HexId> = m
        .pairs
        .iter()
        .filter_map(|p| {
            if p.home == anchor {
                Some(p.work)
            } else if p.work == anchor {
                Some(p.home)
            } else {
                None
            }
        })
        .collect();

    let mut stages = Vec::with_capacity(8);
    let mut first: BTreeMap<(Interval, HexId, HexId), u64> = BTreeMap::new();
    for iv in [1u8, 2] {
        let iv = Interval::new(iv)?;
        for &day in &days {
            for row in source.flows_from(day, iv, anchor) {
                let dest = source.destination_of(row);
                if dest == anchor || partners.contains(&dest) {
                    *first.entry((iv, anchor, dest)).or_default() += source.counts()[row] as u64;
                }
            }
        }
    }
    stages.push(collect_stage(1, first));

    for i in 2..=8u8 {
        let iv = Interval::new(i)?;
        let origins = stages
            .last()
            .map(ChainStage::destinations)
            .unwrap_or_default();
        let mut sums: BTreeMap<(Interval, HexId, HexId), u64> = BTreeMap::new();
        for &origin in &origins {
            for &day in &days {
                for row in source.flows_from(day, iv, origin) {
                    *sums
                        .entry((iv, origin, source.destination_of(row)))
                        .or_default() += source.counts()[row] as u64;
                }
            }
        }
        stages.push(collect_stage(i, sums));
    }
    Ok(stages)
}

fn present_on(store: &OdStore, day: CalendarDay, item: &FlowItem) -> bool {
    store
        .flows_from(day, item.interval, item.origin)
        .into_iter()
        .any(|row| store.destination_of(row) == item.destination)
}

/// Builds the diary for one anchor and weekday: chained stages, frequent
/// flow patterns per temporal regime, and the anchor's intraflow and inflow
/// series. Enrichment bags are created empty; see [`enrich`].
pub fn mine_diary(
    m: &HomeWorkMatrix,
    anchor: HexId,
    weekday: u8,
    min_support: usize,
) -> Result<DiaryPattern> {
    if min_support < 1 {
        return Err(Error::Domain("min_support must be at least 1".into()));
    }
    let stages = chain_stages(m, anchor, weekday)?;
    let source = &*m.source;
    let days = weekday_days(source, weekday);

    let chained: BTreeSet<FlowItem> = stages
        .iter()
        .flat_map(|s| s.flows.iter().map(StageFlow::item))
        .collect();
    let mut regime_patterns = BTreeMap::new();
    for regime in TemporalRegime::ALL {
        let candidates: Vec<&FlowItem> = chained
            .iter()
            .filter(|item| {
                regime
                    .sub_daily_intervals()
                    .contains(&item.interval.index())
            })
            .collect();
        let transactions: Vec<Transaction<CalendarDay, FlowItem>> = days
            .iter()
            .map(|&day| {
                Transaction::new(
                    day,
                    candidates
                        .iter()
                        .filter(|item| present_on(source, day, item))
                        .map(|&&item| item),
                )
            })
            .filter(|t| !t.items.is_empty())
            .collect();
        regime_patterns.insert(regime, eclat(&transactions, min_support)?);
    }

    let mut intraflow_series = [0u64; 8];
    let mut inflow_series = [0u64; 8];
    for iv in Interval::sub_daily() {
        let slot = iv.index() as usize - 1;
        for &day in &days {
            for row in source.flows_to(day, iv, anchor) {
                let count = source.counts()[row] as u64;
                if source.origin_of(row) == anchor {
                    intraflow_series[slot] += count;
                } else {
                    inflow_series[slot] += count;
                }
            }
        }
    }

    let mut pattern = DiaryPattern {
        anchor,
        weekday,
        days,
        min_support,
        stages,
        regime_patterns,
        intraflow_series,
        inflow_series,
        enrichment: BTreeMap::new(),
    };
    pattern.enrichment = pattern
        .mentioned_hexes()
        .into_iter()
        .map(|h| (h, AttributeBag::default()))
        .collect();
    Ok(pattern)
}

/// Free-form `key -> value` attributes per hex, e.g. points of interest.
pub type AttributeTable = BTreeMap<HexId, BTreeMap<String, String>>;

pub const ATTRIBUTES_HEADER: &str = "hex,key,value";

/// Reads `hex,key,value` rows; the header line is optional. Values may
/// contain commas. Repeated keys for one hex are joined with `"; "`.
pub fn read_attributes<R: BufRead>(input: R, source: &str) -> Result<AttributeTable> {
    let mut table = AttributeTable::new();
    for (i, line) in input.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || (row == 1 && line == ATTRIBUTES_HEADER) {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: source.into(),
            row,
            message,
        };
        let mut parts = line.splitn(3, ',');
        let (Some(hex), Some(key), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed("expected hex,key,value".into()));
        };
        let hex: HexId = hex.parse().map_err(|e: Error| malformed(e.to_string()))?;
        if key.is_empty() {
            return Err(malformed("empty attribute key".into()));
        }
        table
            .entry(hex)
            .or_default()
            .entry(key.to_string())
            .and_modify(|v| {
                v.push_str("; ");
                v.push_str(value);
            })
            .or_insert_with(|| value.to_string());
    }
    Ok(table)
}

pub fn load_attributes(path: impl AsRef<Path>) -> Result<AttributeTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_attributes(BufReader::new(file), &path.display().to_string())
}

/// Mean daily footfall per user type for one hex.
///
/// A day's value is its full-day row when present, otherwise the sum of its
/// sub-daily rows; the mean runs over the days that have rows for that type.
pub fn footfall_means(ff: &FootfallStore, hex: HexId) -> BTreeMap<UserType, f64> {
    // (user type, day) -> (full-day value, sub-daily sum)
    let mut daily: BTreeMap<(UserType, CalendarDay), (Option<u64>, u64)> = BTreeMap::new();
    for r in ff.records_for(hex) {
        let slot = daily.entry((r.user_type, r.day)).or_default();
        if r.interval.is_full_day() {
            slot.0 = Some(r.count as u64);
        } else {
            slot.1 += r.count as u64;
        }
    }
    let mut acc: BTreeMap<UserType, (u64, u64)> = BTreeMap::new();
    for ((ut, _), (full, partial)) in daily {
        let e = acc.entry(ut).or_default();
        e.0 += full.unwrap_or(partial);
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(ut, (sum, n))| (ut, sum as f64 / n as f64))
        .collect()
}

/// Fills the attribute bag of every mentioned hex from footfall and the
/// optional attribute table.
pub fn enrich(
    mut pattern: DiaryPattern,
    ff: &FootfallStore,
    attrs: Option<&AttributeTable>,
) -> DiaryPattern {
    for hex in pattern.mentioned_hexes() {
        let bag = AttributeBag {
            footfall_mean: footfall_means(ff, hex),
            extra: attrs.and_then(|a| a.get(&hex)).cloned().unwrap_or_default(),
        };
        pattern.enrichment.insert(hex, bag);
    }
    pattern
}
