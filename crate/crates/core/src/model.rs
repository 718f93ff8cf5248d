//! Domain types shared by every stage of the pipeline: hexagon ids, the nine
//! reporting intervals, temporal regimes, user types and calendar days.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Length of a hexagon cell id in characters.
pub const HEX_ID_LEN: usize = 15;

/// Opaque 15-character lowercase hexadecimal cell identifier.
///
/// Stored inline so that ids are `Copy` and cheap to hash; the derived
/// ordering on the raw bytes is the lexicographic order of the string form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HexId([u8; HEX_ID_LEN]);

impl HexId {
    pub fn parse(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != HEX_ID_LEN {
            return Err(Error::InvalidHexId(s.to_string()));
        }
        let mut out = [0u8; HEX_ID_LEN];
        for (slot, &b) in out.iter_mut().zip(bytes) {
            if !matches!(b, b'0'..=b'9' | b'a'..=b'f') {
                return Err(Error::InvalidHexId(s.to_string()));
            }
            *slot = b;
        }
        Ok(HexId(out))
    }

    /// Builds an id from the low 60 bits of `value`, zero padded.
    pub fn from_u64(value: u64) -> Self {
        let s = format!("{:015x}", value & 0x0fff_ffff_ffff_ffff);
        // always valid: 15 lowercase hex digits
        HexId::parse(&s).expect("formatted id is valid")
    }

    pub fn as_str(&self) -> &str {
        // only ASCII hex digits are ever stored
        std::str::from_utf8(&self.0).expect("hex id is ascii")
    }

    /// Last three characters, the short form used when labelling maps.
    pub fn short(&self) -> &str {
        &self.as_str()[HEX_ID_LEN - 3..]
    }
}

impl FromStr for HexId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HexId::parse(s)
    }
}

impl fmt::Display for HexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for HexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HexId({})", self.as_str())
    }
}

impl Serialize for HexId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for HexId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        HexId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One of the nine reporting intervals. Index 9 is the full-day aggregate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Interval(u8);

/// `(start, end)` minutes from midnight, end inclusive, for intervals 1..=9.
///
/// Interval 2 is taken to run until 09:59 so that 1..=8 tile 04:00-23:59.
const INTERVAL_BOUNDS: [(u16, u16); 9] = [
    (4 * 60, 8 * 60 - 1),
    (8 * 60, 10 * 60 - 1),
    (10 * 60, 12 * 60 - 1),
    (12 * 60, 14 * 60 - 1),
    (14 * 60, 16 * 60 - 1),
    (16 * 60, 18 * 60 - 1),
    (18 * 60, 20 * 60 - 1),
    (20 * 60, 24 * 60 - 1),
    (0, 24 * 60 - 1),
];

impl Interval {
    pub const FULL_DAY: Interval = Interval(9);

    pub fn new(index: u8) -> Result<Self> {
        if (1..=9).contains(&index) {
            Ok(Interval(index))
        } else {
            Err(Error::Domain(format!(
                "interval index {index} outside 1..=9"
            )))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Intervals 1..=8 in order, i.e. everything except the full-day row.
    pub fn sub_daily() -> impl Iterator<Item = Interval> {
        (1..=8).map(Interval)
    }

    pub fn all() -> impl Iterator<Item = Interval> {
        (1..=9).map(Interval)
    }

    pub fn is_full_day(self) -> bool {
        self.0 == 9
    }

    pub fn start_minute(self) -> u16 {
        INTERVAL_BOUNDS[self.0 as usize - 1].0
    }

    /// Inclusive last minute.
    pub fn end_minute(self) -> u16 {
        INTERVAL_BOUNDS[self.0 as usize - 1].1
    }

    pub fn contains_minute(self, minute: u16) -> bool {
        self.start_minute() <= minute && minute <= self.end_minute()
    }

    pub fn regime(self) -> TemporalRegime {
        match self.0 {
            1 | 2 => TemporalRegime::MorningPeak,
            3..=5 => TemporalRegime::Midday,
            6 | 7 => TemporalRegime::EveningPeak,
            _ => TemporalRegime::Night,
        }
    }
}

impl TryFrom<u8> for Interval {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Interval::new(value)
    }
}

impl From<Interval> for u8 {
    fn from(value: Interval) -> u8 {
        value.0
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Every interval whose span contains the given minute of the day.
///
/// The full-day interval always matches; 00:00-03:59 matches nothing else.
pub fn interval_of(minute: u16) -> Result<Vec<Interval>> {
    if minute >= 24 * 60 {
        return Err(Error::Domain(format!("minute {minute} outside 0..=1439")));
    }
    Ok(Interval::all()
        .filter(|iv| iv.contains_minute(minute))
        .collect())
}

pub fn regime_of(interval_index: u8) -> Result<TemporalRegime> {
    Ok(Interval::new(interval_index)?.regime())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRegime {
    MorningPeak,
    Midday,
    EveningPeak,
    Night,
}

impl TemporalRegime {
    pub const ALL: [TemporalRegime; 4] = [
        TemporalRegime::MorningPeak,
        TemporalRegime::Midday,
        TemporalRegime::EveningPeak,
        TemporalRegime::Night,
    ];

    /// Member intervals, including the full-day interval for `Night`.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            TemporalRegime::MorningPeak => &[1, 2],
            TemporalRegime::Midday => &[3, 4, 5],
            TemporalRegime::EveningPeak => &[6, 7],
            TemporalRegime::Night => &[8, 9],
        }
    }

    /// Member intervals with the full-day row removed; what diaries mine over.
    pub fn sub_daily_intervals(self) -> &'static [u8] {
        match self {
            TemporalRegime::Night => &[8],
            other => other.intervals(),
        }
    }

    pub fn contains(self, interval: Interval) -> bool {
        self.intervals().contains(&interval.index())
    }
}

impl fmt::Display for TemporalRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalRegime::MorningPeak => "morning_peak",
            TemporalRegime::Midday => "midday",
            TemporalRegime::EveningPeak => "evening_peak",
            TemporalRegime::Night => "night",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserType {
    All,
    Worker,
    Resident,
    Transient,
}

impl UserType {
    pub fn as_str(self) -> &'static str {
        match self {
            UserType::All => "all",
            UserType::Worker => "worker",
            UserType::Resident => "resident",
            UserType::Transient => "transient",
        }
    }

    /// OD files only ever carry `all` and `worker`.
    pub fn valid_for_od(self) -> bool {
        matches!(self, UserType::All | UserType::Worker)
    }
}

impl FromStr for UserType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(UserType::All),
            "worker" => Ok(UserType::Worker),
            "resident" => Ok(UserType::Resident),
            "transient" => Ok(UserType::Transient),
            other => Err(Error::Domain(format!("unknown user type {other:?}"))),
        }
    }
}

impl fmt::Display for UserType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A calendar date; its ISO weekday (1 = Monday) is derived from the date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalendarDay(NaiveDate);

impl CalendarDay {
    pub fn new(date: NaiveDate) -> Self {
        CalendarDay(date)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(CalendarDay)
            .ok_or_else(|| Error::Domain(format!("invalid date {year:04}-{month:02}-{day:02}")))
    }

    pub fn date(self) -> NaiveDate {
        self.0
    }

    pub fn weekday(self) -> u8 {
        self.0.weekday().number_from_monday() as u8
    }

    pub fn month(self) -> Month {
        Month {
            year: self.0.year(),
            month: self.0.month(),
        }
    }

    pub fn day_of_month(self) -> u32 {
        self.0.day()
    }
}

impl FromStr for CalendarDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(CalendarDay)
            .map_err(|_| Error::Domain(format!("invalid date {s:?}, expected YYYY-MM-DD")))
    }
}

impl fmt::Display for CalendarDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} outside 1..=12")));
        }
        Ok(Month { year, month })
    }

    pub fn days(self) -> Vec<CalendarDay> {
        (1..=31)
            .filter_map(|d| NaiveDate::from_ymd_opt(self.year, self.month, d))
            .map(CalendarDay)
            .collect()
    }

    pub fn days_with_weekday(self, weekday: u8) -> Vec<CalendarDay> {
        self.days()
            .into_iter()
            .filter(|d| d.weekday() == weekday)
            .collect()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("invalid month {s:?}, expected YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        Month::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

pub fn check_weekday(weekday: u8) -> Result<u8> {
    if (1..=7).contains(&weekday) {
        Ok(weekday)
    } else {
        Err(Error::Domain(format!("weekday {weekday} outside 1..=7")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlowRecord {
    pub origin: HexId,
    pub destination: HexId,
    pub day: CalendarDay,
    pub interval: Interval,
    pub user_type: UserType,
    pub count: u32,
}

impl FlowRecord {
    pub fn is_intraflow(&self) -> bool {
        self.origin == self.destination
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FootfallRecord {
    pub hex: HexId,
    pub day: CalendarDay,
    pub interval: Interval,
    pub user_type: UserType,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Origin,
    Destination,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "origin" => Ok(Role::Origin),
            "destination" => Ok(Role::Destination),
            other => Err(Error::Domain(format!("unknown role {other:?}"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Origin => "origin",
            Role::Destination => "destination",
        })
    }
}
