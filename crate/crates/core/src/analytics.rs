//! Aggregate analytics over an OD store. Everything here ignores the
//! full-day interval so each trip is counted once.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::OdStore;
use crate::model::{check_weekday, CalendarDay, HexId, Role};

fn hex_for(store: &OdStore, row: usize, role: Role) -> HexId {
    match role {
        Role::Origin => store.origin_of(row),
        Role::Destination => store.destination_of(row),
    }
}

fn sub_daily_rows(store: &OdStore) -> impl Iterator<Item = usize> + '_ {
    (0..store.len()).filter(|&i| store.interval_indices()[i] != 9)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TemporalProfile {
    pub hex: HexId,
    pub role: Role,
    /// Month totals for intervals 1..=8.
    pub counts: [u64; 8],
}

pub fn temporal_profile(store: &OdStore, hex: HexId, role: Role) -> TemporalProfile {
    let mut counts = [0u64; 8];
    for row in sub_daily_rows(store) {
        if hex_for(store, row, role) == hex {
            counts[store.interval_indices()[row] as usize - 1] += store.counts()[row] as u64;
        }
    }
    TemporalProfile { hex, role, counts }
}

/// Profiles of every hex in one pass.
pub fn all_profiles(store: &OdStore, role: Role) -> BTreeMap<HexId, [u64; 8]> {
    let mut out: BTreeMap<HexId, [u64; 8]> = BTreeMap::new();
    for row in sub_daily_rows(store) {
        let slot = store.interval_indices()[row] as usize - 1;
        out.entry(hex_for(store, row, role)).or_default()[slot] += store.counts()[row] as u64;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DayOfWeekDistribution {
    pub role: Role,
    /// Weekday (1 = Monday) to the daily totals of each of its dates.
    pub per_weekday: BTreeMap<u8, Vec<(CalendarDay, u64)>>,
}

impl DayOfWeekDistribution {
    pub fn totals(&self, weekday: u8) -> Vec<u64> {
        self.per_weekday
            .get(&weekday)
            .map(|v| v.iter().map(|&(_, t)| t).collect())
            .unwrap_or_default()
    }

    pub fn summary(&self, weekday: u8) -> Option<BoxStats> {
        box_stats(&self.totals(weekday))
    }
}

/// Daily totals over all hexes, one entry per calendar day of the month
/// (zero for days without records).
pub fn day_of_week_totals(store: &OdStore, role: Role) -> DayOfWeekDistribution {
    let mut per_weekday: BTreeMap<u8, Vec<(CalendarDay, u64)>> =
        (1..=7).map(|d| (d, Vec::new())).collect();
    if let Some(month) = store.month() {
        let mut by_dom = [0u64; 32];
        for row in sub_daily_rows(store) {
            by_dom[store.day_of_month(row) as usize] += store.counts()[row] as u64;
        }
        for day in month.days() {
            per_weekday
                .get_mut(&day.weekday())
                .expect("weekday in 1..=7")
                .push((day, by_dom[day.day_of_month() as usize]));
        }
    }
    DayOfWeekDistribution { role, per_weekday }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary using linear interpolation between order statistics.
pub fn box_stats(values: &[u64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(BoxStats {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DayDifferenceLayer {
    pub day_a: u8,
    pub day_b: u8,
    pub role: Role,
    /// Mean daily count on `day_a` minus mean daily count on `day_b`.
    pub values: BTreeMap<HexId, f64>,
}

/// Destination-role difference layer between two weekdays.
pub fn day_difference(store: &OdStore, day_a: u8, day_b: u8) -> Result<DayDifferenceLayer> {
    day_difference_for(store, day_a, day_b, Role::Destination)
}

/// Per-hex difference of mean daily counts. Means divide by how often each
/// weekday occurs in the month, so 4- and 5-occurrence weekdays compare
/// fairly. Hexes without records on either weekday are left out.
pub fn day_difference_for(
    store: &OdStore,
    day_a: u8,
    day_b: u8,
    role: Role,
) -> Result<DayDifferenceLayer> {
    check_weekday(day_a)?;
    check_weekday(day_b)?;
    if day_a == day_b {
        return Err(Error::Domain(format!("day_a and day_b are both {day_a}")));
    }
    let mut values = BTreeMap::new();
    if let Some(month) = store.month() {
        let n_a = month.days_with_weekday(day_a).len() as f64;
        let n_b = month.days_with_weekday(day_b).len() as f64;
        let mut sums: BTreeMap<HexId, (u64, u64)> = BTreeMap::new();
        for row in sub_daily_rows(store) {
            let wd = store.day_of(row).weekday();
            if wd != day_a && wd != day_b {
                continue;
            }
            let slot = sums.entry(hex_for(store, row, role)).or_default();
            let c = store.counts()[row] as u64;
            if wd == day_a {
                slot.0 += c;
            } else {
                slot.1 += c;
            }
        }
        values = sums
            .into_iter()
            .map(|(hex, (a, b))| (hex, a as f64 / n_a - b as f64 / n_b))
            .collect();
    }
    Ok(DayDifferenceLayer {
        day_a,
        day_b,
        role,
        values,
    })
}

/// The `k` hexes with the largest month totals for `role`, ties broken by
/// ascending id.
pub fn top_k(store: &OdStore, role: Role, k: usize) -> Result<Vec<(HexId, u64)>> {
    if k < 1 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let mut totals: BTreeMap<HexId, u64> = BTreeMap::new();
    for row in sub_daily_rows(store) {
        *totals.entry(hex_for(store, row, role)).or_default() += store.counts()[row] as u64;
    }
    let mut ranked: Vec<(HexId, u64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

pub fn write_profiles_csv<W: Write>(
    profiles: &BTreeMap<HexId, [u64; 8]>,
    out: W,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "hex,interval,count")?;
    for (hex, counts) in profiles {
        for (i, c) in counts.iter().enumerate() {
            writeln!(out, "{hex},{},{c}", i + 1)?;
        }
    }
    out.flush()
}

pub fn write_dow_csv<W: Write>(dist: &DayOfWeekDistribution, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "weekday,date,total")?;
    for (wd, days) in &dist.per_weekday {
        for (day, total) in days {
            writeln!(out, "{wd},{day},{total}")?;
        }
    }
    out.flush()
}

pub fn write_dow_summary_csv<W: Write>(dist: &DayOfWeekDistribution, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "weekday,days,min,q1,median,q3,max")?;
    for wd in 1..=7u8 {
        let n = dist.totals(wd).len();
        if let Some(s) = dist.summary(wd) {
            writeln!(
                out,
                "{wd},{n},{},{},{},{},{}",
                s.min, s.q1, s.median, s.q3, s.max
            )?;
        }
    }
    out.flush()
}

pub fn write_diff_csv<W: Write>(layer: &DayDifferenceLayer, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "hex,diff")?;
    for (hex, v) in &layer.values {
        writeln!(out, "{hex},{v}")?;
    }
    out.flush()
}

pub fn write_topk_csv<W: Write>(ranked: &[(HexId, u64)], out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "rank,hex,total")?;
    for (i, (hex, total)) in ranked.iter().enumerate() {
        writeln!(out, "{},{hex},{total}", i + 1)?;
    }
    out.flush()
}
