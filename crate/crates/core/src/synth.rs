//! Deterministic synthetic world: OD and footfall files in the ingest schema
//! plus a ground-truth ledger that every downstream result can be checked
//! against.
//!
//! Workers are grouped into cohorts. A cohort owns four hexes (home, work,
//! lunch, night) that no other cohort touches, so the only flows between a
//! cohort's home and work come from that cohort. Non-workers live in their
//! own hexes; each group of them shares one shop hex. Every agent that leaves home on a
//! day emits one flow per interval 1..=8, stays included as self-loops; an
//! agent that stays home emits nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    read_footfall, read_od, write_footfall_csv, write_od_csv, FootfallStore, OdStore,
};
use crate::model::{CalendarDay, FlowRecord, FootfallRecord, HexId, Interval, Month, UserType};

pub const OD_FILE: &str = "od.csv";
pub const FOOTFALL_FILE: &str = "footfall.csv";
pub const LEDGER_FILE: &str = "ledger.json";
pub const BOUNDARIES_FILE: &str = "boundaries.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_hexes: usize,
    pub n_agents: usize,
    pub month: Month,
    /// Multiplier on the office-day probability for Thursdays.
    pub thursday_weight: f64,
    /// Multiplier on the office-day probability for Saturdays and Sundays.
    pub weekend_worker_fraction: f64,
    /// Chance that a cohort lunches out (or goes out at night) on a given
    /// weekday.
    pub secondary_activity_rate: f64,
    /// OD records with a smaller count are withheld from the file.
    pub suppression_threshold: u32,
    pub office_rate: f64,
    /// Per agent-day chance of swapping T1/T2 departure and T6/T7 return.
    /// Zero gives deterministic schedules.
    pub schedule_jitter: f64,
    pub resident_fraction: f64,
    /// Daily chance that a non-worker goes out to the group's shop.
    pub resident_outing_rate: f64,
    pub cohort_size: usize,
    /// Share of cohorts that come in on only 8..=12 days of the month.
    pub hybrid_fraction: f64,
    /// Per cohort-day chance that one attendee goes home at T4.
    pub midday_return_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_hexes: 500,
            n_agents: 5000,
            month: Month::new(2022, 6).expect("valid month"),
            thursday_weight: 1.3,
            weekend_worker_fraction: 0.3,
            secondary_activity_rate: 0.3,
            suppression_threshold: 22,
            office_rate: 0.7,
            schedule_jitter: 0.0,
            resident_fraction: 0.2,
            resident_outing_rate: 0.6,
            cohort_size: 50,
            hybrid_fraction: 0.1,
            midday_return_rate: 0.05,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be within 0..=1, got {v}"
        )))
    }
}

impl SynthConfig {
    pub fn n_workers(&self) -> usize {
        self.n_agents - self.n_residents()
    }

    pub fn n_residents(&self) -> usize {
        (self.n_agents as f64 * self.resident_fraction).round() as usize
    }

    pub fn n_cohorts(&self) -> usize {
        self.n_workers().div_ceil(self.cohort_size.max(1))
    }

    pub fn n_resident_groups(&self) -> usize {
        self.n_residents().div_ceil(self.cohort_size.max(1))
    }

    /// Hexes the role layout needs: four per cohort, one per resident group
    /// and at least one shop when there are residents.
    pub fn hexes_required(&self) -> usize {
        4 * self.n_cohorts() + self.n_resident_groups() + usize::from(self.n_residents() > 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Domain("n_agents must be at least 1".into()));
        }
        if self.cohort_size == 0 {
            return Err(Error::Domain("cohort_size must be at least 1".into()));
        }
        if self.suppression_threshold == 0 {
            return Err(Error::Domain(
                "suppression_threshold must be at least 1".into(),
            ));
        }
        if !(self.thursday_weight.is_finite() && self.thursday_weight >= 0.0) {
            return Err(Error::Domain(format!(
                "thursday_weight must be >= 0, got {}",
                self.thursday_weight
            )));
        }
        check_unit("weekend_worker_fraction", self.weekend_worker_fraction)?;
        check_unit("secondary_activity_rate", self.secondary_activity_rate)?;
        check_unit("office_rate", self.office_rate)?;
        check_unit("schedule_jitter", self.schedule_jitter)?;
        check_unit("resident_fraction", self.resident_fraction)?;
        check_unit("resident_outing_rate", self.resident_outing_rate)?;
        check_unit("hybrid_fraction", self.hybrid_fraction)?;
        check_unit("midday_return_rate", self.midday_return_rate)?;
        if self.n_hexes < self.hexes_required() {
            return Err(Error::Domain(format!(
                "n_hexes = {} is too small: {} agents in cohorts of {} need {}",
                self.n_hexes,
                self.n_agents,
                self.cohort_size,
                self.hexes_required()
            )));
        }
        Ok(())
    }

    /// Office-day probability of a regular cohort member, clamped to 1.
    pub fn attendance(&self, weekday: u8) -> f64 {
        let w = match weekday {
            4 => self.thursday_weight,
            6 | 7 => self.weekend_worker_fraction,
            _ => 1.0,
        };
        (self.office_rate * w).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HexRole {
    Home,
    Work,
    Lunch,
    Night,
    ResidentHome,
    Shop,
    Spare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub id: usize,
    pub home: HexId,
    pub work: HexId,
    pub lunch: HexId,
    pub night: HexId,
    /// Agent ids `first_agent..first_agent + size`.
    pub first_agent: usize,
    pub size: usize,
    pub hybrid: bool,
    pub depart: u8,
    pub ret: u8,
    pub lunch_out: u8,
    pub lunch_weekdays: Vec<u8>,
    pub night_weekdays: Vec<u8>,
    /// Planned location string for an office day, keyed by weekday.
    pub templates: BTreeMap<u8, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidentGroup {
    pub id: usize,
    pub home: HexId,
    pub shop: HexId,
    pub first_agent: usize,
    pub size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Worker,
    Resident,
}

/// One agent's month. `days[d]` is `-` for a day spent at home, otherwise
/// eight letters giving the agent's place at the end of intervals 1..=8
/// (`H` home, `W` work, `L` lunch, `N` night, `S` shop). Every day starts
/// at `H`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLedger {
    pub id: usize,
    pub kind: AgentKind,
    pub group: usize,
    pub places: BTreeMap<char, HexId>,
    pub days: Vec<String>,
}

impl AgentLedger {
    pub fn home(&self) -> HexId {
        self.places[&'H']
    }

    /// Locations before interval 1 and after each of 1..=8.
    pub fn locations(&self, day_index: usize) -> [HexId; 9] {
        let home = self.home();
        let mut out = [home; 9];
        let plan = self.days[day_index].as_bytes();
        if plan.len() == 8 {
            for (i, &c) in plan.iter().enumerate() {
                out[i + 1] = self.places[&(c as char)];
            }
        }
        out
    }

    /// `(origin, destination, interval)` moves of the day; empty at home.
    pub fn moves(&self, day_index: usize) -> Vec<(HexId, HexId, u8)> {
        if self.days[day_index].len() != 8 {
            return Vec::new();
        }
        let loc = self.locations(day_index);
        (1..=8).map(|i| (loc[i - 1], loc[i], i as u8)).collect()
    }
}

/// Per-day flags of a planted pair, one character per calendar day:
/// `Q` qualifies, `D` commute both ways but a midday return, `F` forward
/// only, `R` reverse only, `.` neither.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub cohort: usize,
    pub home: HexId,
    pub work: HexId,
    pub day_flags: String,
    pub qualifying_days: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerOdRecord {
    pub origin: HexId,
    pub destination: HexId,
    pub day: CalendarDay,
    pub interval: Interval,
    pub user_type: UserType,
    /// True count, before suppression.
    pub count: u32,
    pub emitted: bool,
}

impl LedgerOdRecord {
    fn key(&self) -> OdKey {
        (
            self.day,
            self.interval,
            self.origin,
            self.destination,
            self.user_type,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HexIntervalTotal {
    pub hex: HexId,
    pub interval: Interval,
    pub user_type: UserType,
    pub origin: u64,
    pub destination: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FootfallTotal {
    pub hex: HexId,
    pub interval: Interval,
    pub user_type: UserType,
    pub total: u64,
}

/// Month totals over intervals 1..=8 and all user types.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayTotal {
    pub day: CalendarDay,
    pub true_total: u64,
    pub emitted_total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub config: SynthConfig,
    pub hex_roles: BTreeMap<HexId, HexRole>,
    pub cohorts: Vec<Cohort>,
    pub resident_groups: Vec<ResidentGroup>,
    pub agents: Vec<AgentLedger>,
    pub planted_pairs: Vec<PlantedPair>,
    pub od_records: Vec<LedgerOdRecord>,
    pub suppressed_records: usize,
    pub suppressed_mass: u64,
    /// Post-suppression totals per hex and interval (1..=9).
    pub od_hex_totals: Vec<HexIntervalTotal>,
    /// Footfall summed over the month per hex, interval and user type.
    pub footfall_totals: Vec<FootfallTotal>,
    pub day_totals: Vec<DayTotal>,
    /// No two days whose expected true totals are equal differ by more than
    /// this, whatever the draws.
    pub day_total_noise_bound: u64,
}

impl GroundTruthLedger {
    pub fn days(&self) -> Vec<CalendarDay> {
        self.config.month.days()
    }

    /// Planted pairs with at least `min_days` qualifying days.
    pub fn expected_pairs(&self, min_days: usize) -> BTreeSet<(HexId, HexId)> {
        self.planted_pairs
            .iter()
            .filter(|p| p.qualifying_days >= min_days)
            .map(|p| (p.home, p.work))
            .collect()
    }

    pub fn emitted_records(&self) -> impl Iterator<Item = &LedgerOdRecord> {
        self.od_records.iter().filter(|r| r.emitted)
    }

    /// Distinct moves made by a cohort's members on one day.
    pub fn cohort_moves(&self, cohort: usize, day_index: usize) -> BTreeSet<(HexId, HexId, u8)> {
        let c = &self.cohorts[cohort];
        self.agents[c.first_agent..c.first_agent + c.size]
            .iter()
            .flat_map(|a| a.moves(day_index))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct World {
    pub od_csv: Vec<u8>,
    pub footfall_csv: Vec<u8>,
    pub boundaries_csv: Vec<u8>,
    pub ledger: GroundTruthLedger,
}

impl World {
    /// Writes the four artefacts under their fixed names.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ledger = self.ledger.to_json()?;
        for (name, bytes) in [
            (OD_FILE, &self.od_csv[..]),
            (FOOTFALL_FILE, &self.footfall_csv[..]),
            (BOUNDARIES_FILE, &self.boundaries_csv[..]),
            (LEDGER_FILE, ledger.as_bytes()),
        ] {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

type OdKey = (CalendarDay, Interval, HexId, HexId, UserType);
type FfKey = (HexId, CalendarDay, Interval, UserType);

fn stochastic_round(x: f64, rng: &mut ChaCha8Rng) -> usize {
    let base = x.floor();
    let frac = x - base;
    base as usize + usize::from(frac > 0.0 && rng.gen::<f64>() < frac)
}

fn weekday_mask(rate: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (1..=7u8).filter(|_| rng.gen_bool(rate)).collect()
}

fn worker_plan(
    depart: u8,
    ret: u8,
    lunch_out: Option<u8>,
    night: bool,
    midday_return: bool,
) -> String {
    let mut p = [b'W'; 8];
    for i in 1..=8u8 {
        let slot = &mut p[i as usize - 1];
        if i < depart || i >= ret || (midday_return && i >= 4) {
            *slot = b'H';
        }
        if !midday_return && lunch_out == Some(i) {
            *slot = b'L';
        }
    }
    if night {
        p[7] = b'N';
    }
    String::from_utf8(p.to_vec()).expect("ascii")
}

const RESIDENT_PLAN: &str = "HHSSHHHH";

fn fresh_hex_ids(n: usize, rng: &mut ChaCha8Rng) -> Vec<HexId> {
    let mut seen = BTreeSet::new();
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        let raw = (0x8a_u64 << 52) | (rng.gen::<u64>() & ((1 << 52) - 1));
        let id = HexId::from_u64(raw);
        if seen.insert(id) {
            ids.push(id);
        }
    }
    ids
}

/// Pseudo-grid boundary lookup: one closed counter-clockwise hexagon per id.
pub fn boundary_csv(hexes: &[HexId]) -> Vec<u8> {
    let cols = (hexes.len() as f64).sqrt().ceil().max(1.0) as usize;
    let mut out = String::from("hex,ring\n");
    for (i, hex) in hexes.iter().enumerate() {
        let (row, col) = (i / cols, i % cols);
        let cx = -0.2 + col as f64 * 0.0021 + if row % 2 == 1 { 0.00105 } else { 0.0 };
        let cy = 51.45 + row as f64 * 0.0018;
        let ring: Vec<String> = (0..=6)
            .map(|k| {
                let a = (30.0 + 60.0 * (k % 6) as f64).to_radians();
                format!("{:.6} {:.6}", cx + 0.0012 * a.cos(), cy + 0.0012 * a.sin())
            })
            .collect();
        out.push_str(&format!("{hex},{}\n", ring.join(";")));
    }
    out.into_bytes()
}

/// Builds a world from `config`. The emitted files are re-read and checked
/// against the ledger before returning.
pub fn generate(config: &SynthConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let days = config.month.days();
    let n_cohorts = config.n_cohorts();
    let n_groups = config.n_resident_groups();

    let ids = fresh_hex_ids(config.n_hexes, &mut rng);
    let mut hex_roles = BTreeMap::new();
    let mut shops = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let role = if i < 4 * n_cohorts {
            [HexRole::Home, HexRole::Work, HexRole::Lunch, HexRole::Night][i % 4]
        } else if i < 4 * n_cohorts + n_groups {
            HexRole::ResidentHome
        } else if config.n_residents() > 0 {
            shops.push(id);
            HexRole::Shop
        } else {
            HexRole::Spare
        };
        hex_roles.insert(id, role);
    }

    // sizes as even as possible
    let split = |total: usize, parts: usize| -> Vec<usize> {
        (0..parts)
            .map(|i| total / parts + usize::from(i < total % parts))
            .collect()
    };

    let hybrid_count = (n_cohorts as f64 * config.hybrid_fraction).round() as usize;
    let hybrid: BTreeSet<usize> = sample(&mut rng, n_cohorts, hybrid_count)
        .into_iter()
        .collect();
    let mut cohorts = Vec::with_capacity(n_cohorts);
    let mut next_agent = 0;
    for (c, size) in split(config.n_workers(), n_cohorts).into_iter().enumerate() {
        let depart = rng.gen_range(1..=2u8);
        let ret = rng.gen_range(6..=7u8);
        let lunch_out = rng.gen_range(3..=4u8);
        let lunch_weekdays = weekday_mask(config.secondary_activity_rate, &mut rng);
        let night_weekdays = weekday_mask(config.secondary_activity_rate, &mut rng);
        let templates = (1..=7u8)
            .map(|wd| {
                let lunch = lunch_weekdays.contains(&wd).then_some(lunch_out);
                (
                    wd,
                    worker_plan(depart, ret, lunch, night_weekdays.contains(&wd), false),
                )
            })
            .collect();
        cohorts.push(Cohort {
            id: c,
            home: ids[4 * c],
            work: ids[4 * c + 1],
            lunch: ids[4 * c + 2],
            night: ids[4 * c + 3],
            first_agent: next_agent,
            size,
            hybrid: hybrid.contains(&c),
            depart,
            ret,
            lunch_out,
            lunch_weekdays,
            night_weekdays,
            templates,
        });
        next_agent += size;
    }
    let mut resident_groups = Vec::with_capacity(n_groups);
    for (g, size) in split(config.n_residents(), n_groups)
        .into_iter()
        .enumerate()
    {
        resident_groups.push(ResidentGroup {
            id: g,
            home: ids[4 * n_cohorts + g],
            shop: shops[g % shops.len()],
            first_agent: next_agent,
            size,
        });
        next_agent += size;
    }

    let mut agents = Vec::with_capacity(config.n_agents);
    for c in &cohorts {
        let places = BTreeMap::from([('H', c.home), ('W', c.work), ('L', c.lunch), ('N', c.night)]);
        for id in c.first_agent..c.first_agent + c.size {
            agents.push(AgentLedger {
                id,
                kind: AgentKind::Worker,
                group: c.id,
                places: places.clone(),
                days: Vec::with_capacity(days.len()),
            });
        }
    }
    for g in &resident_groups {
        for id in g.first_agent..g.first_agent + g.size {
            agents.push(AgentLedger {
                id,
                kind: AgentKind::Resident,
                group: g.id,
                places: BTreeMap::from([('H', g.home), ('S', g.shop)]),
                days: Vec::with_capacity(days.len()),
            });
        }
    }

    // hybrid cohorts come in on a fixed number of the days they could work
    let hybrid_days: BTreeMap<usize, BTreeSet<usize>> = hybrid
        .iter()
        .map(|&c| {
            let eligible: Vec<usize> = (0..days.len())
                .filter(|&d| config.attendance(days[d].weekday()) > 0.0)
                .collect();
            let want = rng.gen_range(8..=12usize).min(eligible.len());
            let chosen = sample(&mut rng, eligible.len(), want)
                .into_iter()
                .map(|i| eligible[i])
                .collect();
            (c, chosen)
        })
        .collect();

    let mut noise_bound = 0u64;
    for c in &cohorts {
        noise_bound += if c.hybrid { 8 * c.size as u64 } else { 8 };
    }
    noise_bound += 8 * resident_groups.len() as u64;
    // two days each within the per-day bound of the same expectation
    noise_bound *= 2;

    for (d, day) in days.iter().enumerate() {
        let wd = day.weekday();
        for c in &cohorts {
            let attendees: Vec<usize> = if c.hybrid {
                if hybrid_days[&c.id].contains(&d) {
                    (0..c.size).collect()
                } else {
                    Vec::new()
                }
            } else {
                let k =
                    stochastic_round(c.size as f64 * config.attendance(wd), &mut rng).min(c.size);
                let mut v = sample(&mut rng, c.size, k).into_vec();
                v.sort_unstable();
                v
            };
            let returner = (!attendees.is_empty() && rng.gen_bool(config.midday_return_rate))
                .then(|| attendees[rng.gen_range(0..attendees.len())]);
            let lunch = c.lunch_weekdays.contains(&wd).then_some(c.lunch_out);
            let night = c.night_weekdays.contains(&wd);
            let mut a = 0;
            for member in 0..c.size {
                let plan = if attendees.get(a) == Some(&member) {
                    a += 1;
                    let depart = if rng.gen_bool(config.schedule_jitter) {
                        3 - c.depart
                    } else {
                        c.depart
                    };
                    let ret = if rng.gen_bool(config.schedule_jitter) {
                        13 - c.ret
                    } else {
                        c.ret
                    };
                    worker_plan(depart, ret, lunch, night, returner == Some(member))
                } else {
                    "-".to_string()
                };
                agents[c.first_agent + member].days.push(plan);
            }
        }
        for g in &resident_groups {
            let k =
                stochastic_round(g.size as f64 * config.resident_outing_rate, &mut rng).min(g.size);
            let out: BTreeSet<usize> = sample(&mut rng, g.size, k).into_iter().collect();
            for member in 0..g.size {
                let plan = if out.contains(&member) {
                    RESIDENT_PLAN
                } else {
                    "-"
                };
                agents[g.first_agent + member].days.push(plan.to_string());
            }
        }
    }

    let planted_pairs = cohorts
        .iter()
        .map(|c| {
            let members = &agents[c.first_agent..c.first_agent + c.size];
            let flags: String = (0..days.len())
                .map(|d| {
                    let (mut fwd, mut rev, mut disq) = (false, false, false);
                    for a in members {
                        for (o, dst, iv) in a.moves(d) {
                            if o == c.home && dst == c.work && iv <= 2 {
                                fwd = true;
                            }
                            if o == c.work && dst == c.home {
                                match iv {
                                    3..=5 => disq = true,
                                    6 | 7 => rev = true,
                                    _ => {}
                                }
                            }
                        }
                    }
                    match (fwd, rev, disq) {
                        (true, true, false) => 'Q',
                        (true, true, true) => 'D',
                        (true, false, _) => 'F',
                        (false, true, _) => 'R',
                        (false, false, _) => '.',
                    }
                })
                .collect();
            PlantedPair {
                cohort: c.id,
                home: c.home,
                work: c.work,
                qualifying_days: flags.chars().filter(|&f| f == 'Q').count(),
                day_flags: flags,
            }
        })
        .collect();

    let mut od: BTreeMap<OdKey, u32> = BTreeMap::new();
    let mut ff: BTreeMap<FfKey, u32> = BTreeMap::new();
    let full_day = Interval::FULL_DAY;
    for agent in &agents {
        let ut = match agent.kind {
            AgentKind::Worker => UserType::Worker,
            AgentKind::Resident => UserType::All,
        };
        let work = agent.places.get(&'W').copied();
        let relation = |hex: HexId| {
            if hex == agent.home() {
                UserType::Resident
            } else if Some(hex) == work {
                UserType::Worker
            } else {
                UserType::Transient
            }
        };
        for (d, &day) in days.iter().enumerate() {
            for (o, dst, iv) in agent.moves(d) {
                *od.entry((day, Interval::new(iv)?, o, dst, ut)).or_default() += 1;
                *od.entry((day, full_day, o, dst, ut)).or_default() += 1;
            }
            let loc = agent.locations(d);
            for (i, &hex) in loc.iter().enumerate().skip(1) {
                *ff.entry((hex, day, Interval::new(i as u8)?, relation(hex)))
                    .or_default() += 1;
            }
            for hex in loc.iter().collect::<BTreeSet<_>>() {
                *ff.entry((*hex, day, full_day, relation(*hex))).or_default() += 1;
            }
        }
    }
    // `all` footfall is residents plus transients
    let mut all_rows: BTreeMap<FfKey, u32> = BTreeMap::new();
    for (&(hex, day, iv, ut), &count) in &ff {
        if matches!(ut, UserType::Resident | UserType::Transient) {
            *all_rows.entry((hex, day, iv, UserType::All)).or_default() += count;
        }
    }
    ff.extend(all_rows);

    let threshold = config.suppression_threshold;
    let od_records: Vec<LedgerOdRecord> = od
        .into_iter()
        .map(
            |((day, interval, origin, destination, user_type), count)| LedgerOdRecord {
                origin,
                destination,
                day,
                interval,
                user_type,
                count,
                emitted: count >= threshold,
            },
        )
        .collect();
    let suppressed_records = od_records.iter().filter(|r| !r.emitted).count();
    let suppressed_mass = od_records
        .iter()
        .filter(|r| !r.emitted)
        .map(|r| r.count as u64)
        .sum();

    let mut hex_totals: BTreeMap<(HexId, Interval, UserType), (u64, u64)> = BTreeMap::new();
    let mut day_sums: BTreeMap<CalendarDay, (u64, u64)> =
        days.iter().map(|&d| (d, (0, 0))).collect();
    for r in &od_records {
        if r.emitted {
            hex_totals
                .entry((r.origin, r.interval, r.user_type))
                .or_default()
                .0 += r.count as u64;
            hex_totals
                .entry((r.destination, r.interval, r.user_type))
                .or_default()
                .1 += r.count as u64;
        }
        if !r.interval.is_full_day() {
            let slot = day_sums.get_mut(&r.day).expect("day of month");
            slot.0 += r.count as u64;
            if r.emitted {
                slot.1 += r.count as u64;
            }
        }
    }
    let mut ff_totals: BTreeMap<(HexId, Interval, UserType), u64> = BTreeMap::new();
    for (&(hex, _, iv, ut), &count) in &ff {
        *ff_totals.entry((hex, iv, ut)).or_default() += count as u64;
    }

    let ledger = GroundTruthLedger {
        config: config.clone(),
        hex_roles,
        cohorts,
        resident_groups,
        agents,
        planted_pairs,
        suppressed_records,
        suppressed_mass,
        od_hex_totals: hex_totals
            .into_iter()
            .map(
                |((hex, interval, user_type), (origin, destination))| HexIntervalTotal {
                    hex,
                    interval,
                    user_type,
                    origin,
                    destination,
                },
            )
            .collect(),
        footfall_totals: ff_totals
            .into_iter()
            .map(|((hex, interval, user_type), total)| FootfallTotal {
                hex,
                interval,
                user_type,
                total,
            })
            .collect(),
        day_totals: day_sums
            .into_iter()
            .map(|(day, (true_total, emitted_total))| DayTotal {
                day,
                true_total,
                emitted_total,
            })
            .collect(),
        day_total_noise_bound: noise_bound,
        od_records,
    };

    let mut od_csv = Vec::new();
    write_od_csv(
        ledger.emitted_records().map(|r| FlowRecord {
            origin: r.origin,
            destination: r.destination,
            day: r.day,
            interval: r.interval,
            user_type: r.user_type,
            count: r.count,
        }),
        &mut od_csv,
    )
    .map_err(|e| Error::io("<od buffer>", e))?;
    let mut footfall_csv = Vec::new();
    write_footfall_csv(
        ff.into_iter()
            .map(|((hex, day, interval, user_type), count)| FootfallRecord {
                hex,
                day,
                interval,
                user_type,
                count,
            }),
        &mut footfall_csv,
    )
    .map_err(|e| Error::io("<footfall buffer>", e))?;

    let od_store = read_od(&od_csv[..], "<generated od>", None)?;
    let ff_store = read_footfall(&footfall_csv[..], "<generated footfall>")?;
    let report = verify_ledger(&ledger, &od_store, &ff_store);
    if !report.is_clean() {
        return Err(Error::Domain(format!(
            "generated files disagree with the ledger: {}",
            report.mismatches[0]
        )));
    }

    Ok(World {
        od_csv,
        footfall_csv,
        boundaries_csv: boundary_csv(&ids),
        ledger,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    OdRecord,
    FootfallTotal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub kind: MismatchKind,
    /// The differing record or total, in CSV field order.
    pub key: String,
    pub expected: u64,
    pub found: u64,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            MismatchKind::OdRecord => "od record",
            MismatchKind::FootfallTotal => "footfall total",
        };
        write!(
            f,
            "{kind} {}: ledger {} file {}",
            self.key, self.expected, self.found
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub od_records_checked: usize,
    pub footfall_totals_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn diff_maps<K: Ord + Copy>(
    expected: &BTreeMap<K, u64>,
    found: &BTreeMap<K, u64>,
    kind: MismatchKind,
    label: impl Fn(&K) -> String,
    out: &mut Vec<Mismatch>,
) {
    let keys: BTreeSet<&K> = expected.keys().chain(found.keys()).collect();
    for k in keys {
        let e = expected.get(k).copied().unwrap_or(0);
        let f = found.get(k).copied().unwrap_or(0);
        if e != f {
            out.push(Mismatch {
                kind,
                key: label(k),
                expected: e,
                found: f,
            });
        }
    }
}

/// Compares every emitted OD record and every footfall month total with
/// the stores. A changed, missing or extra OD row is one mismatch; a
/// changed or missing footfall row is one mismatch on its total.
pub fn verify_ledger(ledger: &GroundTruthLedger, od: &OdStore, ff: &FootfallStore) -> VerifyReport {
    let mut report = VerifyReport::default();
    let expected_od: BTreeMap<OdKey, u64> = ledger
        .emitted_records()
        .map(|r| (r.key(), r.count as u64))
        .collect();
    let found_od: BTreeMap<OdKey, u64> = od
        .iter()
        .map(|r| {
            (
                (r.day, r.interval, r.origin, r.destination, r.user_type),
                r.count as u64,
            )
        })
        .collect();
    report.od_records_checked = expected_od.len();
    diff_maps(
        &expected_od,
        &found_od,
        MismatchKind::OdRecord,
        |(day, iv, o, d, ut)| format!("{o},{d},{day},{},{}", iv.index(), ut.as_str()),
        &mut report.mismatches,
    );

    let expected_ff: BTreeMap<(HexId, Interval, UserType), u64> = ledger
        .footfall_totals
        .iter()
        .map(|t| ((t.hex, t.interval, t.user_type), t.total))
        .collect();
    let mut found_ff: BTreeMap<(HexId, Interval, UserType), u64> = BTreeMap::new();
    for r in ff.iter() {
        *found_ff
            .entry((r.hex, r.interval, r.user_type))
            .or_default() += r.count as u64;
    }
    report.footfall_totals_checked = expected_ff.len();
    diff_maps(
        &expected_ff,
        &found_ff,
        MismatchKind::FootfallTotal,
        |(hex, iv, ut)| format!("{hex},{},{}", iv.index(), ut.as_str()),
        &mut report.mismatches,
    );
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homework::detect_home_work;

    fn small() -> SynthConfig {
        SynthConfig {
            n_hexes: 100,
            n_agents: 600,
            cohort_size: 30,
            ..SynthConfig::default()
        }
    }

    fn commuters_100() -> SynthConfig {
        SynthConfig {
            n_hexes: 4,
            n_agents: 100,
            cohort_size: 100,
            resident_fraction: 0.0,
            office_rate: 1.0,
            thursday_weight: 1.0,
            weekend_worker_fraction: 0.0,
            secondary_activity_rate: 0.0,
            hybrid_fraction: 0.0,
            midday_return_rate: 0.0,
            suppression_threshold: 1,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn plan_strings() {
        assert_eq!(worker_plan(1, 6, None, false, false), "WWWWWHHH");
        assert_eq!(worker_plan(2, 7, Some(3), true, false), "HWLWWWHN");
        assert_eq!(worker_plan(2, 7, Some(4), false, false), "HWWLWWHH");
        assert_eq!(worker_plan(1, 7, Some(3), false, true), "WWWHHHHH");
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.od_csv, b.od_csv);
        assert_eq!(a.footfall_csv, b.footfall_csv);
        assert_eq!(a.boundaries_csv, b.boundaries_csv);
        assert_eq!(a.ledger.to_json().unwrap(), b.ledger.to_json().unwrap());
        let c = generate(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.od_csv, c.od_csv);
    }

    #[test]
    fn suppression_floor_holds_and_mass_is_recorded() {
        let w = generate(&small()).unwrap();
        let od = read_od(&w.od_csv[..], "od", None).unwrap();
        assert!(od.counts().iter().all(|&c| c >= 22));
        assert!(w.ledger.suppressed_records > 0);
        let dropped: u64 = w
            .ledger
            .od_records
            .iter()
            .filter(|r| r.count < 22)
            .map(|r| r.count as u64)
            .sum();
        assert_eq!(w.ledger.suppressed_mass, dropped);
    }

    #[test]
    fn hundred_commuters_qualify_on_every_working_day() {
        let w = generate(&commuters_100()).unwrap();
        let pair = &w.ledger.planted_pairs[0];
        assert_eq!(w.ledger.planted_pairs.len(), 1);
        assert_eq!(pair.qualifying_days, 22);
        // independent recount from the emitted file
        let od = read_od(&w.od_csv[..], "od", None).unwrap();
        let mut days = BTreeSet::new();
        for r in od.iter() {
            if r.origin == pair.home && r.destination == pair.work && r.count == 100 {
                days.insert(r.day);
            }
        }
        assert_eq!(days.len(), 22);
        assert!(days.iter().all(|d| d.weekday() <= 5));
        let detected = detect_home_work(&od, 10).unwrap();
        assert_eq!(detected.len(), 1);
        assert_eq!(detected[0].qualifying_days.len(), 22);
    }

    #[test]
    fn full_day_rows_cover_the_sub_daily_sum() {
        let w = generate(&SynthConfig {
            suppression_threshold: 5,
            ..small()
        })
        .unwrap();
        let od = read_od(&w.od_csv[..], "od", None).unwrap();
        let mut sub: BTreeMap<(HexId, HexId, CalendarDay, UserType), u64> = BTreeMap::new();
        let mut full = BTreeMap::new();
        for r in od.iter() {
            let k = (r.origin, r.destination, r.day, r.user_type);
            if r.interval.is_full_day() {
                full.insert(k, r.count as u64);
            } else {
                *sub.entry(k).or_default() += r.count as u64;
            }
        }
        for (k, s) in sub {
            assert!(full.get(&k).is_some_and(|&f| f >= s), "{k:?}");
        }
    }

    #[test]
    fn fault_injection_is_reported_once() {
        let w = generate(&small()).unwrap();
        let od_text = String::from_utf8(w.od_csv.clone()).unwrap();
        let ff_text = String::from_utf8(w.footfall_csv.clone()).unwrap();
        let od = read_od(od_text.as_bytes(), "od", None).unwrap();
        let ff = read_footfall(ff_text.as_bytes(), "ff").unwrap();
        assert!(verify_ledger(&w.ledger, &od, &ff).is_clean());

        let mut lines: Vec<&str> = od_text.lines().collect();
        let target = lines[5].to_string();
        let (head, count) = target.rsplit_once(',').unwrap();
        let mutated = format!("{head},{}", count.parse::<u32>().unwrap() + 1);
        lines[5] = &mutated;
        let od_bad = read_od(lines.join("\n").as_bytes(), "od", None).unwrap();
        let report = verify_ledger(&w.ledger, &od_bad, &ff);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].kind, MismatchKind::OdRecord);
        assert_eq!(format!("{},{count}", report.mismatches[0].key), target);

        let mut lines: Vec<&str> = ff_text.lines().collect();
        lines.remove(10);
        let ff_bad = read_footfall(lines.join("\n").as_bytes(), "ff").unwrap();
        let report = verify_ledger(&w.ledger, &od, &ff_bad);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].kind, MismatchKind::FootfallTotal);
    }

    #[test]
    fn planted_pairs_are_recovered_without_suppression() {
        let cfg = SynthConfig {
            suppression_threshold: 1,
            hybrid_fraction: 0.3,
            ..small()
        };
        let w = generate(&cfg).unwrap();
        let od = read_od(&w.od_csv[..], "od", Some(UserType::Worker)).unwrap();
        let detected: BTreeSet<(HexId, HexId)> = detect_home_work(&od, 10)
            .unwrap()
            .into_iter()
            .map(|p| (p.home, p.work))
            .collect();
        assert_eq!(detected, w.ledger.expected_pairs(10));
        // hybrids fall below the threshold
        assert!(w.ledger.expected_pairs(10).len() < w.ledger.planted_pairs.len());
    }

    #[test]
    fn config_errors() {
        for bad in [
            SynthConfig {
                n_agents: 0,
                ..small()
            },
            SynthConfig {
                n_hexes: 10,
                ..small()
            },
            SynthConfig {
                office_rate: 1.5,
                ..small()
            },
            SynthConfig {
                thursday_weight: -1.0,
                ..small()
            },
            SynthConfig {
                suppression_threshold: 0,
                ..small()
            },
        ] {
            assert!(matches!(generate(&bad), Err(Error::Domain(_))), "{bad:?}");
        }
    }

    #[test]
    fn ledger_round_trips_through_json() {
        let w = generate(&commuters_100()).unwrap();
        let back: GroundTruthLedger = serde_json::from_str(&w.ledger.to_json().unwrap()).unwrap();
        assert_eq!(back, w.ledger);
    }
}
