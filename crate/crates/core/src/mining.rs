//! Frequent itemset mining with Eclat: vertical tid-lists, depth-first
//! prefix extension and tid-list intersection.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::Hash;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction<Id, I> {
    pub id: Id,
    pub items: BTreeSet<I>,
}

impl<Id, I: Ord> Transaction<Id, I> {
    pub fn new(id: Id, items: impl IntoIterator<Item = I>) -> Self {
        Transaction {
            id,
            items: items.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FrequentItemset<I> {
    /// Items in ascending order.
    pub items: Vec<I>,
    pub support: usize,
}

impl<I> FrequentItemset<I> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

type TidList = Vec<u32>;

fn intersect(a: &[u32], b: &[u32]) -> TidList {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Extends `prefix` with every member of `class` in turn, emitting each
/// extension and recursing into the class of its frequent successors.
fn extend(
    prefix: &mut Vec<u32>,
    class: &[(u32, TidList)],
    min_support: usize,
    out: &mut Vec<(Vec<u32>, usize)>,
) {
    for (i, (item, tids)) in class.iter().enumerate() {
        prefix.push(*item);
        out.push((prefix.clone(), tids.len()));
        let next: Vec<(u32, TidList)> = class[i + 1..]
            .iter()
            .filter_map(|(other, other_tids)| {
                let joint = intersect(tids, other_tids);
                (joint.len() >= min_support).then_some((*other, joint))
            })
            .collect();
        if !next.is_empty() {
            extend(prefix, &next, min_support, out);
        }
        prefix.pop();
    }
}

/// All itemsets with support of at least `min_support` transactions, sorted
/// by `(size, items)`.
///
/// Items are ranked by their `Ord` before the search, which fixes both the
/// traversal and the order of items inside each itemset.
pub fn eclat<Id, I>(
    transactions: &[Transaction<Id, I>],
    min_support: usize,
) -> Result<Vec<FrequentItemset<I>>>
where
    Id: Eq + Hash,
    I: Ord + Clone + Send + Sync,
{
    if min_support < 1 {
        return Err(Error::Domain("min_support must be at least 1".into()));
    }
    let mut ids = HashSet::with_capacity(transactions.len());
    if !transactions.iter().all(|t| ids.insert(&t.id)) {
        return Err(Error::Domain("transaction ids must be unique".into()));
    }

    // vertical layout: item -> ascending transaction positions
    let mut vertical: BTreeMap<&I, TidList> = BTreeMap::new();
    for (tid, t) in transactions.iter().enumerate() {
        for item in &t.items {
            vertical.entry(item).or_default().push(tid as u32);
        }
    }
    let universe: Vec<&I> = vertical.keys().copied().collect();
    let roots: Vec<(u32, TidList)> = vertical
        .into_values()
        .enumerate()
        .filter(|(_, tids)| tids.len() >= min_support)
        .map(|(rank, tids)| (rank as u32, tids))
        .collect();

    let mut found: Vec<(Vec<u32>, usize)> = (0..roots.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (item, tids) = &roots[i];
            let next: Vec<(u32, TidList)> = roots[i + 1..]
                .iter()
                .filter_map(|(other, other_tids)| {
                    let joint = intersect(tids, other_tids);
                    (joint.len() >= min_support).then_some((*other, joint))
                })
                .collect();
            let mut out = vec![(vec![*item], tids.len())];
            extend(&mut vec![*item], &next, min_support, &mut out);
            out
        })
        .collect();

    found.par_sort_unstable_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    Ok(found
        .into_iter()
        .map(|(ranks, support)| FrequentItemset {
            items: ranks
                .into_iter()
                .map(|r| universe[r as usize].clone())
                .collect(),
            support,
        })
        .collect())
}

/// Number of transactions containing every item of `itemset`.
pub fn support_of<Id, I: Ord>(transactions: &[Transaction<Id, I>], itemset: &[I]) -> usize {
    transactions
        .iter()
        .filter(|t| itemset.iter().all(|item| t.items.contains(item)))
        .count()
}

/// Reads one transaction per line, items separated by whitespace. Blank
/// lines are skipped; ids are the 1-based line numbers.
pub fn read_transactions<R: BufRead>(input: R) -> io::Result<Vec<Transaction<usize, String>>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let items: BTreeSet<String> = line.split_whitespace().map(str::to_string).collect();
        if !items.is_empty() {
            out.push(Transaction { id: i + 1, items });
        }
    }
    Ok(out)
}

/// Writes `item item ...<TAB>support` lines.
pub fn write_itemsets<W: Write, I: std::fmt::Display>(
    itemsets: &[FrequentItemset<I>],
    out: W,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    for set in itemsets {
        let items: Vec<String> = set.items.iter().map(ToString::to_string).collect();
        writeln!(out, "{}\t{}", items.join(" "), set.support)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(rows: &[&[&'static str]]) -> Vec<Transaction<usize, &'static str>> {
        rows.iter()
            .enumerate()
            .map(|(i, items)| Transaction::new(i, items.iter().copied()))
            .collect()
    }

    /// Enumerates every non-empty subset of the item universe.
    fn brute_force<I: Ord + Clone>(
        transactions: &[Transaction<usize, I>],
        min_support: usize,
    ) -> Vec<FrequentItemset<I>> {
        let universe: Vec<I> = transactions
            .iter()
            .flat_map(|t| t.items.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut out = Vec::new();
        for mask in 1u64..(1u64 << universe.len()) {
            let items: Vec<I> = (0..universe.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| universe[b].clone())
                .collect();
            let support = transactions
                .iter()
                .filter(|t| items.iter().all(|i| t.items.contains(i)))
                .count();
            if support >= min_support {
                out.push(FrequentItemset { items, support });
            }
        }
        out.sort_by(|a, b| {
            a.items
                .len()
                .cmp(&b.items.len())
                .then_with(|| a.items.cmp(&b.items))
        });
        out
    }

    #[test]
    fn small_examples() {
        let t = db(&[&["A", "B"], &["A", "B"], &["A"]]);
        let got = eclat(&t, 2).unwrap();
        let expect = vec![
            FrequentItemset {
                items: vec!["A"],
                support: 3,
            },
            FrequentItemset {
                items: vec!["B"],
                support: 2,
            },
            FrequentItemset {
                items: vec!["A", "B"],
                support: 2,
            },
        ];
        assert_eq!(got, expect);
        assert_eq!(brute_force(&t, 2), expect);

        let empty: Vec<Transaction<usize, &str>> = Vec::new();
        assert!(eclat(&empty, 1).unwrap().is_empty());

        let one = db(&[&["X"]]);
        assert_eq!(
            eclat(&one, 1).unwrap(),
            vec![FrequentItemset {
                items: vec!["X"],
                support: 1
            }]
        );
        assert!(eclat(&one, 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let t = vec![Transaction::new(1, ["a"]), Transaction::new(1, ["b"])];
        assert!(eclat(&t, 1).is_err());
    }

    #[test]
    fn support_of_examples() {
        let t = db(&[&["A", "B"], &["A"]]);
        assert_eq!(support_of(&t, &[]), 2);
        assert_eq!(support_of(&t, &["A", "B"]), 1);
        assert_eq!(support_of(&t, &["Z"]), 0);
    }

    #[test]
    fn transaction_file_round_trip() {
        let text = "a b c\n\nb c\nc  a\n";
        let t = read_transactions(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        let sets = eclat(&t, 2).unwrap();
        let mut buf = Vec::new();
        write_itemsets(&sets, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "a\t2\nb\t2\nc\t3\na c\t2\nb c\t2\n");
    }

    fn random_db() -> impl Strategy<Value = (Vec<Transaction<usize, u8>>, usize)> {
        (
            prop::collection::vec(prop::collection::btree_set(0u8..12, 0..8), 0..=16),
            1usize..=5,
        )
            .prop_map(|(rows, ms)| {
                let t = rows
                    .into_iter()
                    .enumerate()
                    .filter(|(_, r)| !r.is_empty())
                    .map(|(i, items)| Transaction { id: i, items })
                    .collect();
                (t, ms)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn matches_brute_force((t, ms) in random_db()) {
            prop_assert_eq!(eclat(&t, ms).unwrap(), brute_force(&t, ms));
        }

        #[test]
        fn downward_closed_and_exact((t, ms) in random_db()) {
            let sets = eclat(&t, ms).unwrap();
            let index: BTreeMap<Vec<u8>, usize> = sets.iter().map(|s| (s.items.clone(), s.support)).collect();
            for s in &sets {
                prop_assert!(s.support >= ms);
                prop_assert_eq!(s.support, support_of(&t, &s.items));
                for skip in 0..s.items.len() {
                    if s.items.len() == 1 { break; }
                    let mut sub = s.items.clone();
                    sub.remove(skip);
                    let sub_support = index.get(&sub).copied();
                    prop_assert!(sub_support.is_some_and(|x| x >= s.support));
                }
            }
        }

        #[test]
        fn independent_of_transaction_order((t, ms) in random_db(), seed in any::<u64>()) {
            let mut shuffled = t.clone();
            // cheap deterministic shuffle
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            prop_assert_eq!(eclat(&t, ms).unwrap(), eclat(&shuffled, ms).unwrap());
        }
    }
}
