use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use hexdiary::analytics::{all_profiles, day_of_week_totals};
use hexdiary::diary::{default_min_support, mine_diary, FlowItem};
use hexdiary::homework::{build_homework_matrix, detect_home_work};
use hexdiary::ingest::{
    descriptive_stats, read_footfall, read_od, FootfallStore, OdStore, StatsSummary,
};
use hexdiary::synth::{generate, GroundTruthLedger, SynthConfig};
use hexdiary::{HexId, Interval, Role, TemporalRegime, UserType};

fn world(cfg: &SynthConfig) -> (GroundTruthLedger, OdStore, FootfallStore) {
    let w = generate(cfg).unwrap();
    let od = read_od(&w.od_csv[..], "od", None).unwrap();
    let ff = read_footfall(&w.footfall_csv[..], "ff").unwrap();
    (w.ledger, od, ff)
}

fn medium() -> SynthConfig {
    SynthConfig {
        n_hexes: 200,
        n_agents: 2000,
        suppression_threshold: 1,
        hybrid_fraction: 0.25,
        ..SynthConfig::default()
    }
}

#[test]
fn ingested_day_totals_match_the_ledger() {
    let (ledger, od, _) = world(&SynthConfig {
        n_hexes: 200,
        n_agents: 2000,
        ..SynthConfig::default()
    });
    let dist = day_of_week_totals(&od, Role::Origin);
    let from_store: BTreeMap<_, _> = dist.per_weekday.values().flatten().copied().collect();
    for t in &ledger.day_totals {
        assert_eq!(from_store[&t.day], t.emitted_total, "{}", t.day);
        assert!(t.emitted_total <= t.true_total);
    }
}

#[test]
fn stats_match_the_ledger() {
    let (ledger, od, _) = world(&SynthConfig {
        n_hexes: 200,
        n_agents: 2000,
        ..SynthConfig::default()
    });
    for ut in [UserType::Worker, UserType::All] {
        let counts: Vec<u32> = ledger
            .emitted_records()
            .filter(|r| r.user_type == ut)
            .map(|r| r.count)
            .collect();
        let got = descriptive_stats(&od, ut).unwrap();
        let n = counts.len() as u64;
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        assert_eq!(got.count, n);
        assert_eq!(got.min, *counts.iter().min().unwrap());
        assert_eq!(got.max, *counts.iter().max().unwrap());
        assert_eq!(got.mean, sum as f64 / n as f64);
        assert_eq!(Some(got), StatsSummary::of_counts(counts));
        assert!(got.min >= 22);
    }
}

#[test]
fn profiles_conserve_flow() {
    let (_, od, _) = world(&medium());
    let total = od.total_count(false);
    let o: u64 = all_profiles(&od, Role::Origin).values().flatten().sum();
    let d: u64 = all_profiles(&od, Role::Destination)
        .values()
        .flatten()
        .sum();
    assert_eq!((o, d), (total, total));
}

/// Chain items of a location plan, grouped by regime.
fn planned_items(
    plan: &str,
    places: &BTreeMap<char, HexId>,
) -> BTreeMap<TemporalRegime, Vec<FlowItem>> {
    let mut loc = vec![places[&'H']];
    loc.extend(plan.chars().map(|c| places[&c]));
    let mut out: BTreeMap<TemporalRegime, Vec<FlowItem>> = BTreeMap::new();
    for i in 1..=8usize {
        let interval = Interval::new(i as u8).unwrap();
        out.entry(interval.regime()).or_default().push(FlowItem {
            origin: loc[i - 1],
            destination: loc[i],
            interval,
        });
    }
    for items in out.values_mut() {
        items.sort();
    }
    out
}

#[test]
fn planted_pairs_and_chains_are_recovered() {
    let (ledger, od, _) = world(&medium());
    let workers = Arc::new(od.with_user_type(UserType::Worker));
    let detected = detect_home_work(&workers, 10).unwrap();
    let got: BTreeSet<(HexId, HexId)> = detected.iter().map(|p| (p.home, p.work)).collect();
    let expected = ledger.expected_pairs(10);
    assert_eq!(got, expected);
    assert!(
        expected.len() < ledger.planted_pairs.len(),
        "some hybrids should miss the threshold"
    );

    let matrix = build_homework_matrix(workers, &detected);
    let days = ledger.days();
    let mut checked = 0;
    for cohort in ledger
        .cohorts
        .iter()
        .filter(|c| expected.contains(&(c.home, c.work)))
    {
        let places = BTreeMap::from([
            ('H', cohort.home),
            ('W', cohort.work),
            ('L', cohort.lunch),
            ('N', cohort.night),
        ]);
        for weekday in 1..=7u8 {
            let min_support = default_min_support(ledger.config.month, weekday);
            let pattern = mine_diary(&matrix, cohort.home, weekday, min_support).unwrap();
            let day_moves: Vec<BTreeSet<(HexId, HexId, u8)>> = (0..days.len())
                .filter(|&d| days[d].weekday() == weekday)
                .map(|d| ledger.cohort_moves(cohort.id, d))
                .collect();
            for (regime, items) in planned_items(&cohort.templates[&weekday], &places) {
                let support = day_moves
                    .iter()
                    .filter(|m| {
                        items
                            .iter()
                            .all(|it| m.contains(&(it.origin, it.destination, it.interval.index())))
                    })
                    .count();
                let mined = pattern.regime_patterns[&regime]
                    .iter()
                    .find(|s| s.items == items);
                if support >= min_support {
                    assert_eq!(
                        mined.map(|s| s.support),
                        Some(support),
                        "cohort {} weekday {weekday} {regime}",
                        cohort.id
                    );
                    checked += 1;
                } else {
                    assert!(mined.is_none());
                }
            }
        }
    }
    assert!(checked > 100, "only {checked} chains checked");
}
