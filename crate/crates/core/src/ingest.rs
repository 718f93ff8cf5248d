//! CSV ingest into dictionary-encoded columnar stores.
//!
//! Hex ids are interned into a sorted dictionary so the per-record columns
//! hold 32-bit codes whose order matches the id order. OD rows are kept
//! sorted by `(day, interval, origin, destination, user_type)`, which makes
//! that ordering the origin index; a permutation provides the destination
//! index. Footfall rows are sorted by `(hex, day, interval, user_type)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CalendarDay, FlowRecord, FootfallRecord, HexId, Interval, Month, UserType};

pub const OD_HEADER: &str = "origin_hex,destination_hex,date,interval,user_type,count";
pub const FOOTFALL_HEADER: &str = "hex,date,interval,user_type,count";

/// Returns the range of `0..len` whose keys equal `key`, given keys sorted
/// ascending.
fn equal_range<K: Ord>(len: usize, key_at: impl Fn(usize) -> K, key: &K) -> Range<usize> {
    let mut lo = 0;
    let mut hi = len;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if key_at(mid) < *key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let start = lo;
    hi = len;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if key_at(mid) <= *key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    start..lo
}

fn intern(ids: impl Iterator<Item = HexId>) -> Vec<HexId> {
    let mut dict: Vec<HexId> = ids.collect();
    dict.par_sort_unstable();
    dict.dedup();
    dict
}

fn code_of(dict: &[HexId], hex: HexId) -> u32 {
    dict.binary_search(&hex).expect("hex interned") as u32
}

/// Checks that every day falls in one month and returns it.
fn single_month<'a>(
    days: impl Iterator<Item = (usize, &'a CalendarDay)>,
    source: &str,
) -> Result<Option<Month>> {
    let mut month = None;
    for (row, day) in days {
        match month {
            None => month = Some(day.month()),
            Some(m) if m != day.month() => {
                return Err(Error::Malformed {
                    path: source.to_string(),
                    row,
                    message: format!("date {day} is outside month {m}; files must cover one month"),
                })
            }
            Some(_) => {}
        }
    }
    Ok(month)
}

/// Validated, indexed OD flow counts for one calendar month.
#[derive(Clone, Debug, Default)]
pub struct OdStore {
    month: Option<Month>,
    hexes: Vec<HexId>,
    origin: Vec<u32>,
    destination: Vec<u32>,
    day: Vec<u8>,
    interval: Vec<u8>,
    user_type: Vec<UserType>,
    count: Vec<u32>,
    by_destination: Vec<u32>,
}

impl OdStore {
    /// Builds a store from in-memory records. Errors name the 1-based
    /// position of the offending record.
    pub fn from_records(records: Vec<FlowRecord>) -> Result<Self> {
        let numbered = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect();
        Self::build(numbered, "records")
    }

    fn build(rows: Vec<(usize, FlowRecord)>, source: &str) -> Result<Self> {
        for (row, r) in &rows {
            if r.count == 0 {
                return Err(Error::Malformed {
                    path: source.to_string(),
                    row: *row,
                    message: "count must be at least 1; zero flows are absent from OD data".into(),
                });
            }
            if !r.user_type.valid_for_od() {
                return Err(Error::Malformed {
                    path: source.to_string(),
                    row: *row,
                    message: format!("user type {} not allowed in OD data", r.user_type),
                });
            }
        }
        let month = single_month(rows.iter().map(|(row, r)| (*row, &r.day)), source)?;
        let hexes = intern(rows.iter().flat_map(|(_, r)| [r.origin, r.destination]));

        struct Row {
            line: usize,
            day: u8,
            interval: u8,
            origin: u32,
            destination: u32,
            user_type: UserType,
            count: u32,
        }
        let mut encoded: Vec<Row> = rows
            .into_par_iter()
            .map(|(line, r)| Row {
                line,
                day: r.day.day_of_month() as u8,
                interval: r.interval.index(),
                origin: code_of(&hexes, r.origin),
                destination: code_of(&hexes, r.destination),
                user_type: r.user_type,
                count: r.count,
            })
            .collect();
        encoded.par_sort_unstable_by_key(|r| {
            (
                r.day,
                r.interval,
                r.origin,
                r.destination,
                r.user_type,
                r.line,
            )
        });
        let key = |r: &Row| (r.day, r.interval, r.origin, r.destination, r.user_type);
        for pair in encoded.windows(2) {
            if key(&pair[0]) == key(&pair[1]) {
                let (first, second) = (
                    pair[0].line.min(pair[1].line),
                    pair[0].line.max(pair[1].line),
                );
                return Err(Error::Malformed {
                    path: source.to_string(),
                    row: second,
                    message: format!("duplicate key (origin, destination, date, interval, user_type) first seen at row {first}"),
                });
            }
        }

        let n = encoded.len();
        let mut store = OdStore {
            month,
            hexes,
            origin: Vec::with_capacity(n),
            destination: Vec::with_capacity(n),
            day: Vec::with_capacity(n),
            interval: Vec::with_capacity(n),
            user_type: Vec::with_capacity(n),
            count: Vec::with_capacity(n),
            by_destination: Vec::new(),
        };
        for r in encoded {
            store.origin.push(r.origin);
            store.destination.push(r.destination);
            store.day.push(r.day);
            store.interval.push(r.interval);
            store.user_type.push(r.user_type);
            store.count.push(r.count);
        }
        store.index_destinations();
        Ok(store)
    }

    fn index_destinations(&mut self) {
        let mut perm: Vec<u32> = (0..self.len() as u32).collect();
        perm.par_sort_unstable_by_key(|&i| {
            let i = i as usize;
            (
                self.day[i],
                self.interval[i],
                self.destination[i],
                self.origin[i],
                self.user_type[i],
            )
        });
        self.by_destination = perm;
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    /// The month covered, `None` for an empty store.
    pub fn month(&self) -> Option<Month> {
        self.month
    }

    /// All distinct hexes appearing as origin or destination, sorted.
    pub fn hexes(&self) -> &[HexId] {
        &self.hexes
    }

    fn calendar_day(&self, dom: u8) -> CalendarDay {
        let m = self.month.expect("non-empty store has a month");
        CalendarDay::from_ymd(m.year, m.month, dom as u32).expect("stored day is valid")
    }

    pub fn record(&self, row: usize) -> FlowRecord {
        FlowRecord {
            origin: self.hexes[self.origin[row] as usize],
            destination: self.hexes[self.destination[row] as usize],
            day: self.calendar_day(self.day[row]),
            interval: Interval::new(self.interval[row]).expect("stored interval is valid"),
            user_type: self.user_type[row],
            count: self.count[row],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = FlowRecord> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    pub fn counts(&self) -> &[u32] {
        &self.count
    }

    pub fn user_types(&self) -> &[UserType] {
        &self.user_type
    }

    pub fn interval_indices(&self) -> &[u8] {
        &self.interval
    }

    pub fn origin_of(&self, row: usize) -> HexId {
        self.hexes[self.origin[row] as usize]
    }

    pub fn destination_of(&self, row: usize) -> HexId {
        self.hexes[self.destination[row] as usize]
    }

    /// Day of month of a row.
    pub fn day_of_month(&self, row: usize) -> u8 {
        self.day[row]
    }

    pub fn day_of(&self, row: usize) -> CalendarDay {
        self.calendar_day(self.day[row])
    }

    /// Calendar days that have at least one record, ascending.
    pub fn days_present(&self) -> Vec<CalendarDay> {
        let mut doms: Vec<u8> = self.day.clone();
        doms.dedup();
        doms.into_iter().map(|d| self.calendar_day(d)).collect()
    }

    /// Rows whose key starts with `(day, interval)`; rows are stored sorted so
    /// this is a contiguous range.
    pub fn rows_on(&self, day: CalendarDay, interval: Interval) -> Range<usize> {
        if self.month != Some(day.month()) {
            return 0..0;
        }
        let key = (day.day_of_month() as u8, interval.index());
        equal_range(self.len(), |i| (self.day[i], self.interval[i]), &key)
    }

    /// Rows leaving `origin` on `day` during `interval`.
    pub fn flows_from(&self, day: CalendarDay, interval: Interval, origin: HexId) -> Vec<usize> {
        let Ok(code) = self.hexes.binary_search(&origin) else {
            return Vec::new();
        };
        if self.month != Some(day.month()) {
            return Vec::new();
        }
        let key = (day.day_of_month() as u8, interval.index(), code as u32);
        equal_range(
            self.len(),
            |i| (self.day[i], self.interval[i], self.origin[i]),
            &key,
        )
        .collect()
    }

    /// Rows arriving at `destination` on `day` during `interval`.
    pub fn flows_to(&self, day: CalendarDay, interval: Interval, destination: HexId) -> Vec<usize> {
        let Ok(code) = self.hexes.binary_search(&destination) else {
            return Vec::new();
        };
        if self.month != Some(day.month()) {
            return Vec::new();
        }
        let key = (day.day_of_month() as u8, interval.index(), code as u32);
        let perm = &self.by_destination;
        let range = equal_range(
            perm.len(),
            |j| {
                let i = perm[j] as usize;
                (self.day[i], self.interval[i], self.destination[i])
            },
            &key,
        );
        perm[range].iter().map(|&i| i as usize).collect()
    }

    /// Keeps the rows for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&FlowRecord) -> bool) -> OdStore {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.record(i))).collect();
        self.select(&rows)
    }

    /// Keeps the listed rows; `rows` must be ascending.
    fn select(&self, rows: &[usize]) -> OdStore {
        let hexes = intern(
            rows.iter()
                .flat_map(|&i| [self.origin_of(i), self.destination_of(i)]),
        );
        let recode = |code: u32| code_of(&hexes, self.hexes[code as usize]);
        let mut out = OdStore {
            month: if rows.is_empty() { None } else { self.month },
            origin: rows.iter().map(|&i| recode(self.origin[i])).collect(),
            destination: rows.iter().map(|&i| recode(self.destination[i])).collect(),
            day: rows.iter().map(|&i| self.day[i]).collect(),
            interval: rows.iter().map(|&i| self.interval[i]).collect(),
            user_type: rows.iter().map(|&i| self.user_type[i]).collect(),
            count: rows.iter().map(|&i| self.count[i]).collect(),
            by_destination: Vec::new(),
            hexes,
        };
        out.index_destinations();
        out
    }

    pub fn with_user_type(&self, user_type: UserType) -> OdStore {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| self.user_type[i] == user_type)
            .collect();
        self.select(&rows)
    }

    /// Sum of counts, optionally including full-day rows.
    pub fn total_count(&self, include_full_day: bool) -> u64 {
        self.count
            .iter()
            .zip(&self.interval)
            .filter(|(_, &iv)| include_full_day || iv != 9)
            .map(|(&c, _)| c as u64)
            .sum()
    }

    /// Writes the store in the canonical OD CSV layout.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_od_csv(self.iter(), out)
    }
}

pub fn write_od_csv<W: Write>(
    records: impl IntoIterator<Item = FlowRecord>,
    out: W,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{OD_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.origin, r.destination, r.day, r.interval, r.user_type, r.count
        )?;
    }
    out.flush()
}

pub fn write_footfall_csv<W: Write>(
    records: impl IntoIterator<Item = FootfallRecord>,
    out: W,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{FOOTFALL_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.hex, r.day, r.interval, r.user_type, r.count
        )?;
    }
    out.flush()
}

/// Parses CSV text whose first line must equal `header`, handing each data
/// row's fields and line number to `parse_row`.
fn read_rows<T, R: Read>(
    input: R,
    source: &str,
    header: &str,
    mut parse_row: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<(usize, T)>> {
    let expected_fields = header.split(',').count();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(input);
    let mut out = Vec::new();
    let mut saw_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| Error::Malformed {
            path: source.to_string(),
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if !saw_header {
            let found = record.iter().collect::<Vec<_>>().join(",");
            let found = found.trim_start_matches('\u{feff}');
            if found != header {
                return Err(Error::Header {
                    path: source.to_string(),
                    found: found.to_string(),
                    expected: header.to_string(),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != expected_fields {
            return Err(Error::Malformed {
                path: source.to_string(),
                row,
                message: format!("expected {expected_fields} fields, found {}", record.len()),
            });
        }
        let value = parse_row(&record).map_err(|message| Error::Malformed {
            path: source.to_string(),
            row,
            message,
        })?;
        out.push((row, value));
    }
    if !saw_header {
        return Err(Error::Header {
            path: source.to_string(),
            found: String::new(),
            expected: header.to_string(),
        });
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(value: &str, name: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{name}: {e}"))
}

fn count_field(value: &str) -> std::result::Result<u32, String> {
    value
        .parse::<u32>()
        .map_err(|_| format!("count: {value:?} is not a non-negative integer"))
}

fn interval_field(value: &str) -> std::result::Result<Interval, String> {
    let idx: u8 = value
        .parse()
        .map_err(|_| format!("interval: unknown interval index {value:?}"))?;
    Interval::new(idx).map_err(|_| format!("interval: unknown interval index {value:?}"))
}

fn parse_od_row(rec: &csv::StringRecord) -> std::result::Result<FlowRecord, String> {
    let user_type: UserType = field(&rec[4], "user_type")?;
    if !user_type.valid_for_od() {
        return Err(format!(
            "user_type: {user_type} is not valid in OD data (all|worker)"
        ));
    }
    Ok(FlowRecord {
        origin: field(&rec[0], "origin_hex")?,
        destination: field(&rec[1], "destination_hex")?,
        day: field(&rec[2], "date")?,
        interval: interval_field(&rec[3])?,
        user_type,
        count: count_field(&rec[5])?,
    })
}

fn parse_footfall_row(rec: &csv::StringRecord) -> std::result::Result<FootfallRecord, String> {
    Ok(FootfallRecord {
        hex: field(&rec[0], "hex")?,
        day: field(&rec[1], "date")?,
        interval: interval_field(&rec[2])?,
        user_type: field(&rec[3], "user_type")?,
        count: count_field(&rec[4])?,
    })
}

/// Reads OD CSV from any reader. `source` labels error messages.
pub fn read_od<R: Read>(
    input: R,
    source: &str,
    user_type_filter: Option<UserType>,
) -> Result<OdStore> {
    let rows = read_rows(input, source, OD_HEADER, parse_od_row)?;
    let rows = match user_type_filter {
        Some(ut) => rows
            .into_iter()
            .filter(|(_, r)| r.user_type == ut)
            .collect(),
        None => rows,
    };
    OdStore::build(rows, source)
}

pub fn load_od(path: impl AsRef<Path>, user_type_filter: Option<UserType>) -> Result<OdStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_od(file, &path.display().to_string(), user_type_filter)
}

/// Footfall counts for one month, grouped by hex.
#[derive(Clone, Debug, Default)]
pub struct FootfallStore {
    month: Option<Month>,
    hexes: Vec<HexId>,
    hex: Vec<u32>,
    day: Vec<u8>,
    interval: Vec<u8>,
    user_type: Vec<UserType>,
    count: Vec<u32>,
}

impl FootfallStore {
    pub fn from_records(records: Vec<FootfallRecord>) -> Result<Self> {
        let numbered = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect();
        Self::build(numbered, "records")
    }

    fn build(rows: Vec<(usize, FootfallRecord)>, source: &str) -> Result<Self> {
        let month = single_month(rows.iter().map(|(row, r)| (*row, &r.day)), source)?;
        let hexes = intern(rows.iter().map(|(_, r)| r.hex));
        let mut encoded: Vec<(u32, u8, u8, UserType, usize, u32)> = rows
            .into_iter()
            .map(|(line, r)| {
                (
                    code_of(&hexes, r.hex),
                    r.day.day_of_month() as u8,
                    r.interval.index(),
                    r.user_type,
                    line,
                    r.count,
                )
            })
            .collect();
        encoded.par_sort_unstable();
        for pair in encoded.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (a.0, a.1, a.2, a.3) == (b.0, b.1, b.2, b.3) {
                return Err(Error::Malformed {
                    path: source.to_string(),
                    row: a.4.max(b.4),
                    message: format!(
                        "duplicate key (hex, date, interval, user_type) first seen at row {}",
                        a.4.min(b.4)
                    ),
                });
            }
        }
        Ok(FootfallStore {
            month,
            hexes,
            hex: encoded.iter().map(|r| r.0).collect(),
            day: encoded.iter().map(|r| r.1).collect(),
            interval: encoded.iter().map(|r| r.2).collect(),
            user_type: encoded.iter().map(|r| r.3).collect(),
            count: encoded.iter().map(|r| r.5).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    pub fn month(&self) -> Option<Month> {
        self.month
    }

    pub fn hexes(&self) -> &[HexId] {
        &self.hexes
    }

    pub fn record(&self, row: usize) -> FootfallRecord {
        let m = self.month.expect("non-empty store has a month");
        FootfallRecord {
            hex: self.hexes[self.hex[row] as usize],
            day: CalendarDay::from_ymd(m.year, m.month, self.day[row] as u32).expect("valid day"),
            interval: Interval::new(self.interval[row]).expect("valid interval"),
            user_type: self.user_type[row],
            count: self.count[row],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = FootfallRecord> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    /// All rows for one hex, in `(day, interval, user_type)` order.
    pub fn records_for(&self, hex: HexId) -> impl Iterator<Item = FootfallRecord> + '_ {
        let range = match self.hexes.binary_search(&hex) {
            Ok(code) => equal_range(self.len(), |i| self.hex[i], &(code as u32)),
            Err(_) => 0..0,
        };
        range.map(move |i| self.record(i))
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_footfall_csv(self.iter(), out)
    }
}

pub fn read_footfall<R: Read>(input: R, source: &str) -> Result<FootfallStore> {
    let rows = read_rows(input, source, FOOTFALL_HEADER, parse_footfall_row)?;
    FootfallStore::build(rows, source)
}

pub fn load_footfall(path: impl AsRef<Path>) -> Result<FootfallStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_footfall(file, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatsSummary {
    pub count: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: u32,
    pub max: u32,
}

impl StatsSummary {
    /// Summary of a sequence of counts, or `None` when it is empty.
    ///
    /// Sums are accumulated exactly in 128-bit integers, so the only rounding
    /// happens in the final divisions.
    pub fn of_counts(counts: impl IntoIterator<Item = u32>) -> Option<Self> {
        let mut n: u128 = 0;
        let mut sum: u128 = 0;
        let mut sum_sq: u128 = 0;
        let mut min = u32::MAX;
        let mut max = 0;
        for c in counts {
            let c128 = c as u128;
            n += 1;
            sum += c128;
            sum_sq += c128 * c128;
            min = min.min(c);
            max = max.max(c);
        }
        if n == 0 {
            return None;
        }
        let mean = sum as f64 / n as f64;
        // n * sum_sq - sum^2 is n^2 times the population variance, and never negative
        let scaled_var = n * sum_sq - sum * sum;
        let std = ((scaled_var as f64) / (n as f64 * n as f64)).sqrt();
        Some(StatsSummary {
            count: n as u64,
            mean,
            std,
            min,
            max,
        })
    }
}

/// Count/mean/std/min/max of record counts for one user type.
pub fn descriptive_stats(store: &OdStore, user_type: UserType) -> Result<StatsSummary> {
    let counts = store
        .counts()
        .iter()
        .zip(store.user_types())
        .filter(|(_, &ut)| ut == user_type)
        .map(|(&c, _)| c);
    StatsSummary::of_counts(counts)
        .ok_or_else(|| Error::EmptySelection(format!("no OD records with user type {user_type}")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdAggregate {
    pub totals: BTreeMap<(HexId, HexId), u64>,
    /// Mean of the per-pair totals.
    pub mean: f64,
    /// Share of pairs whose total is strictly below `mean`.
    pub below_mean_share: f64,
}

/// Month totals per (origin, destination) pair.
pub fn monthly_od_aggregate(store: &OdStore, include_full_day: bool) -> Result<OdAggregate> {
    let mut totals: BTreeMap<(HexId, HexId), u64> = BTreeMap::new();
    for i in 0..store.len() {
        if !include_full_day && store.interval_indices()[i] == 9 {
            continue;
        }
        *totals
            .entry((store.origin_of(i), store.destination_of(i)))
            .or_default() += store.counts()[i] as u64;
    }
    if totals.is_empty() {
        return Err(Error::EmptySelection("no OD records to aggregate".into()));
    }
    let n = totals.len() as f64;
    let mean = totals.values().map(|&t| t as u128).sum::<u128>() as f64 / n;
    let below = totals.values().filter(|&&t| (t as f64) < mean).count();
    Ok(OdAggregate {
        totals,
        mean,
        below_mean_share: below as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "origin_hex,destination_hex,date,interval,user_type,count
8a195da43687fff,8a195da4368ffff,2022-06-02,1,worker,30
8a195da4368ffff,8a195da43687fff,2022-06-02,6,worker,25
8a195da43687fff,8a195da43687fff,2022-06-02,1,worker,120
8a195da43687fff,8a195da4368ffff,2022-06-03,2,worker,22
8a195da43687fff,8a195da4368ffff,2022-06-03,2,all,40
";

    fn hex(s: &str) -> HexId {
        HexId::parse(s).unwrap()
    }

    #[test]
    fn loads_well_formed_fixture() {
        let store = read_od(FIXTURE.as_bytes(), "fixture", None).unwrap();
        assert_eq!(store.len(), 5);
        assert_eq!(store.month(), Some(Month::new(2022, 6).unwrap()));
        assert_eq!(store.total_count(true), 237);
        let workers = read_od(FIXTURE.as_bytes(), "fixture", Some(UserType::Worker)).unwrap();
        assert_eq!(workers.len(), 4);
    }

    #[test]
    fn accepts_crlf() {
        let crlf = FIXTURE.replace('\n', "\r\n");
        let store = read_od(crlf.as_bytes(), "fixture", None).unwrap();
        assert_eq!(store.len(), 5);
    }

    #[test]
    fn rejects_duplicate_key_naming_row() {
        let dup = format!("{FIXTURE}8a195da43687fff,8a195da4368ffff,2022-06-02,1,worker,31\n");
        let err = read_od(dup.as_bytes(), "fixture", None).unwrap_err();
        match err {
            Error::Malformed { row, message, .. } => {
                assert_eq!(row, 7);
                assert!(message.contains("row 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        let cases = [
            (
                "8a195da43687ff,8a195da4368ffff,2022-06-02,1,worker,30",
                "origin_hex",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-06-02,10,worker,30",
                "interval",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-07-02,1,worker,30",
                "month",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-06-02,1,resident,30",
                "user_type",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-06-02,1,worker,-3",
                "count",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-06-02,1,worker",
                "fields",
            ),
            (
                "8a195da43687fff,8a195da4368ffff,2022-06-31,1,worker,3",
                "date",
            ),
        ];
        for (line, what) in cases {
            let text = format!("{FIXTURE}{line}\n");
            let err = read_od(text.as_bytes(), "fixture", None).unwrap_err();
            match err {
                Error::Malformed { row, message, .. } => {
                    assert_eq!(row, 7, "{what}");
                    assert!(message.contains(what), "{what}: {message}");
                }
                other => panic!("{what}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_bad_header_and_missing_file() {
        let err = read_od("a,b,c\n".as_bytes(), "x", None).unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
        let err = load_od("/definitely/not/here.csv", None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn index_lookups_match_scan() {
        let store = read_od(FIXTURE.as_bytes(), "fixture", None).unwrap();
        for day in store.days_present() {
            for iv in Interval::all() {
                for &h in store.hexes() {
                    let from: Vec<usize> = store.flows_from(day, iv, h);
                    let scan: Vec<usize> = (0..store.len())
                        .filter(|&i| {
                            let r = store.record(i);
                            r.day == day && r.interval == iv && r.origin == h
                        })
                        .collect();
                    assert_eq!(from, scan);
                    let mut to = store.flows_to(day, iv, h);
                    to.sort_unstable();
                    let scan: Vec<usize> = (0..store.len())
                        .filter(|&i| {
                            let r = store.record(i);
                            r.day == day && r.interval == iv && r.destination == h
                        })
                        .collect();
                    assert_eq!(to, scan);
                }
            }
        }
        let day = CalendarDay::from_ymd(2022, 6, 2).unwrap();
        let rows = store.flows_from(day, Interval::new(1).unwrap(), hex("8a195da43687fff"));
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn footfall_fixture_and_errors() {
        let text = "hex,date,interval,user_type,count
8a195da43687fff,2022-06-01,9,worker,10
8a195da43687fff,2022-06-02,9,worker,0
8a195da4368ffff,2022-06-01,3,transient,7
";
        let ff = read_footfall(text.as_bytes(), "ff").unwrap();
        assert_eq!(ff.len(), 3);
        assert_eq!(ff.records_for(hex("8a195da43687fff")).count(), 2);
        assert_eq!(ff.records_for(hex("000000000000000")).count(), 0);

        let neg = format!("{text}8a195da4368ffff,2022-06-01,4,transient,-1\n");
        let err = read_footfall(neg.as_bytes(), "ff").unwrap_err();
        assert!(matches!(err, Error::Malformed { row: 5, .. }), "{err}");

        let dup = format!("{text}8a195da4368ffff,2022-06-01,3,transient,9\n");
        assert!(read_footfall(dup.as_bytes(), "ff").is_err());
    }

    // Two-pass reference written independently of the integer-sum route.
    fn two_pass(counts: &[u32]) -> (f64, f64) {
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    #[test]
    fn stats_examples() {
        let s = StatsSummary::of_counts([22, 30, 50]).unwrap();
        let (mean, std) = two_pass(&[22, 30, 50]);
        assert_eq!(s.count, 3);
        assert_eq!(s.mean, 34.0);
        assert_eq!(mean, 34.0);
        assert!((s.std - std).abs() < 1e-12);
        // sqrt(((12)^2 + 4^2 + 16^2) / 3) = sqrt(416/3)
        assert!((s.std - (416.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!((s.min, s.max), (22, 50));

        let one = StatsSummary::of_counts([22]).unwrap();
        assert_eq!(
            (one.count, one.mean, one.std, one.min, one.max),
            (1, 22.0, 0.0, 22, 22)
        );
        assert!(StatsSummary::of_counts([]).is_none());
    }

    #[test]
    fn descriptive_stats_empty_selection_errors() {
        let store = read_od(FIXTURE.as_bytes(), "fixture", Some(UserType::Worker)).unwrap();
        assert!(matches!(
            descriptive_stats(&store, UserType::All),
            Err(Error::EmptySelection(_))
        ));
        let s = descriptive_stats(&store, UserType::Worker).unwrap();
        assert_eq!(s.count, 4);
    }

    fn pair_fixture(totals: &[u32]) -> OdStore {
        let day = CalendarDay::from_ymd(2022, 6, 1).unwrap();
        let records = totals
            .iter()
            .enumerate()
            .map(|(i, &c)| FlowRecord {
                origin: HexId::from_u64(i as u64),
                destination: HexId::from_u64(100 + i as u64),
                day,
                interval: Interval::new(1).unwrap(),
                user_type: UserType::Worker,
                count: c,
            })
            .collect();
        OdStore::from_records(records).unwrap()
    }

    #[test]
    fn monthly_aggregate_examples() {
        let agg = monthly_od_aggregate(&pair_fixture(&[10]), false).unwrap();
        assert_eq!((agg.mean, agg.below_mean_share), (10.0, 0.0));
        let agg = monthly_od_aggregate(&pair_fixture(&[100, 10, 10, 10]), false).unwrap();
        assert_eq!((agg.mean, agg.below_mean_share), (32.5, 0.75));
        assert!(monthly_od_aggregate(&OdStore::default(), false).is_err());
    }

    #[test]
    fn monthly_aggregate_skips_full_day_rows_by_default() {
        let store = read_od(FIXTURE.as_bytes(), "fixture", None).unwrap();
        let day = CalendarDay::from_ymd(2022, 6, 2).unwrap();
        let mut recs: Vec<FlowRecord> = store.iter().collect();
        recs.push(FlowRecord {
            interval: Interval::FULL_DAY,
            day,
            count: 1000,
            ..recs[0]
        });
        let with_nine = OdStore::from_records(recs).unwrap();
        let a = monthly_od_aggregate(&with_nine, false).unwrap();
        let b = monthly_od_aggregate(&store, false).unwrap();
        assert_eq!(a.totals, b.totals);
        let c = monthly_od_aggregate(&with_nine, true).unwrap();
        assert_ne!(c.totals, b.totals);
    }
}
