//! Benchmark splits, vocabularies, the filtered-candidate index and
//! relation-type statistics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interned names with first-appearance indices.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&idx) = self.index.get(name) {
            return idx;
        }
        let idx = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), idx);
        idx
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One `(head, relation, tail)` statement, by vocabulary index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Which split a triple belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }
}

/// Non-fatal observations made while loading.
#[derive(Debug, Clone, Default)]
pub struct LoadWarnings {
    /// Exact duplicate lines dropped, per split (train, valid, test).
    pub duplicates: [usize; 3],
    /// Entities or relations that appear in valid/test but never in train.
    pub unseen_in_train: Vec<String>,
}

/// A query against the filtered-candidate index.
#[derive(Debug, Clone, Copy)]
pub enum Query {
    /// All true tails of `(head, relation, ·)`.
    Tails { head: usize, relation: usize },
    /// All true heads of `(·, relation, tail)`.
    Heads { tail: usize, relation: usize },
}

/// Vocabularies, split triples and the filtered-candidate index.
///
/// Immutable after construction; scoring workers may share it freely.
#[derive(Debug, Clone)]
pub struct TripleStore {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    tails_of: HashMap<(usize, usize), Vec<usize>>,
    heads_of: HashMap<(usize, usize), Vec<usize>>,
    pub warnings: LoadWarnings,
}

impl TripleStore {
    /// Build a store from named triples, interning vocabularies in first
    /// appearance order (train, then valid, then test) and dropping exact
    /// duplicate statements within each split.
    pub fn from_named_triples(
        splits: [&[(String, String, String)]; 3],
    ) -> Self {
        let mut entities = Vocab::default();
        let mut relations = Vocab::default();
        let mut warnings = LoadWarnings::default();
        let mut out: [Vec<Triple>; 3] = [Vec::new(), Vec::new(), Vec::new()];

        for (split_idx, rows) in splits.iter().enumerate() {
            let mut seen: HashSet<Triple> = HashSet::new();
            for (h, r, t) in rows.iter() {
                let triple = Triple {
                    head: entities.intern(h),
                    relation: relations.intern(r),
                    tail: entities.intern(t),
                };
                if seen.insert(triple) {
                    out[split_idx].push(triple);
                } else {
                    warnings.duplicates[split_idx] += 1;
                }
            }
        }

        let [train, valid, test] = out;
        let train_entities: HashSet<usize> =
            train.iter().flat_map(|t| [t.head, t.tail]).collect();
        let train_relations: HashSet<usize> = train.iter().map(|t| t.relation).collect();
        for triple in valid.iter().chain(&test) {
            for e in [triple.head, triple.tail] {
                if !train_entities.contains(&e) {
                    warnings
                        .unseen_in_train
                        .push(format!("entity {}", entities.name(e)));
                }
            }
            if !train_relations.contains(&triple.relation) {
                warnings
                    .unseen_in_train
                    .push(format!("relation {}", relations.name(triple.relation)));
            }
        }
        warnings.unseen_in_train.sort();
        warnings.unseen_in_train.dedup();

        let mut tails_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut heads_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for triple in train.iter().chain(&valid).chain(&test) {
            tails_of
                .entry((triple.head, triple.relation))
                .or_default()
                .push(triple.tail);
            heads_of
                .entry((triple.tail, triple.relation))
                .or_default()
                .push(triple.head);
        }
        for list in tails_of.values_mut().chain(heads_of.values_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        TripleStore {
            entities,
            relations,
            train,
            valid,
            test,
            tails_of,
            heads_of,
            warnings,
        }
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// All entities completing the query to a triple present in any split,
    /// sorted ascending.
    pub fn filtered_candidates(&self, query: Query) -> Result<&[usize]> {
        let (entity, relation, map) = match query {
            Query::Tails { head, relation } => (head, relation, &self.tails_of),
            Query::Heads { tail, relation } => (tail, relation, &self.heads_of),
        };
        if entity >= self.num_entities() {
            return Err(Error::argument(format!("entity index {entity} out of range")));
        }
        if relation >= self.num_relations() {
            return Err(Error::argument(format!("relation index {relation} out of range")));
        }
        Ok(map
            .get(&(entity, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    /// Is the triple present in any split?
    pub fn contains(&self, triple: Triple) -> bool {
        self.tails_of
            .get(&(triple.head, triple.relation))
            .is_some_and(|tails| tails.binary_search(&triple.tail).is_ok())
    }
}

fn read_split(path: &Path) -> Result<Vec<(String, String, String)>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Load {
        path: path.to_owned(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Load {
            path: path.to_owned(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                rows.push((h.to_owned(), r.to_owned(), t.to_owned()));
            }
            _ => {
                return Err(Error::DataParse {
                    file: path.to_owned(),
                    line: line_no + 1,
                    message: "expected head<TAB>relation<TAB>tail".to_owned(),
                });
            }
        }
    }
    Ok(rows)
}

/// Write the store's splits back out as `train.txt` / `valid.txt` /
/// `test.txt` in the loader's format.
pub fn write_splits(store: &TripleStore, dir: &Path) -> Result<()> {
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let mut text = String::new();
        for triple in store.split(split) {
            text.push_str(store.entities.name(triple.head));
            text.push('\t');
            text.push_str(store.relations.name(triple.relation));
            text.push('\t');
            text.push_str(store.entities.name(triple.tail));
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|source| Error::Load { path, source })?;
    }
    Ok(())
}

/// Load `train.txt`, `valid.txt` and `test.txt` from a directory.
pub fn load_dataset(dir: &Path) -> Result<TripleStore> {
    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        splits.push(read_split(&dir.join(split.file_name()))?);
    }
    let store =
        TripleStore::from_named_triples([&splits[0], &splits[1], &splits[2]]);
    let dups: usize = store.warnings.duplicates.iter().sum();
    if dups > 0 {
        log::warn!("{dups} duplicate lines dropped while loading {}", dir.display());
    }
    if !store.warnings.unseen_in_train.is_empty() {
        log::warn!(
            "{} vocabulary entries appear only in valid/test of {}",
            store.warnings.unseen_in_train.len(),
            dir.display()
        );
    }
    Ok(store)
}

/// Relation-type classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationClass {
    Symmetric,
    AntiSymmetric,
    Inverse { partner: usize },
    General,
}

impl RelationClass {
    pub fn label(&self) -> &'static str {
        match self {
            RelationClass::Symmetric => "symmetric",
            RelationClass::AntiSymmetric => "anti-symmetric",
            RelationClass::Inverse { .. } => "inverse",
            RelationClass::General => "general-asymmetric",
        }
    }
}

impl fmt::Display for RelationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Classification thresholds; the defaults reproduce the reference counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatsThresholds {
    /// Fraction of reversed (or partner-reversed) pairs that makes a
    /// relation symmetric or half of an inverse pair.
    pub reverse_ratio: f64,
    /// Minimum head/tail overlap fraction for the anti-symmetric class.
    pub overlap_ratio: f64,
}

impl Default for StatsThresholds {
    fn default() -> Self {
        StatsThresholds {
            reverse_ratio: 0.9,
            overlap_ratio: 0.1,
        }
    }
}

/// Per-relation statistics over the union of all splits.
#[derive(Debug, Clone)]
pub struct RelationStat {
    pub relation: usize,
    pub n: usize,
    pub class: RelationClass,
}

/// Summary counts per class, in the order symmetric / anti-symmetric /
/// inverse / general.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub symmetric: usize,
    pub anti_symmetric: usize,
    pub inverse: usize,
    pub general: usize,
}

/// Classify every relation by four rules applied in order: (i) symmetric if
/// more than `reverse_ratio * n_r` of its pairs appear reversed under the
/// same relation; (ii) anti-symmetric if none do and heads and tails overlap
/// in at least `overlap_ratio * n_r` entities; (iii) inverse if some other
/// relation reproduces at least `reverse_ratio * n_r` pairs reversed;
/// (iv) general otherwise. The first matching rule wins. Relations with no
/// triples are general with `n = 0`.
pub fn relation_stats(store: &TripleStore, thresholds: &StatsThresholds) -> Vec<RelationStat> {
    let nr = store.num_relations();
    let mut pairs: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); nr];
    for triple in store.train.iter().chain(&store.valid).chain(&store.test) {
        pairs[triple.relation].insert((triple.head, triple.tail));
    }

    // Global reverse index: (h, t) -> relations containing (t, h).
    let mut reversed_in: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (r, set) in pairs.iter().enumerate() {
        for &(h, t) in set {
            reversed_in.entry((t, h)).or_default().push(r);
        }
    }

    let mut stats = Vec::with_capacity(nr);
    for r in 0..nr {
        let n = pairs[r].len();
        if n == 0 {
            stats.push(RelationStat {
                relation: r,
                n: 0,
                class: RelationClass::General,
            });
            continue;
        }

        let mut reversed_counts: HashMap<usize, usize> = HashMap::new();
        for &(h, t) in &pairs[r] {
            if let Some(rels) = reversed_in.get(&(h, t)) {
                for &other in rels {
                    *reversed_counts.entry(other).or_default() += 1;
                }
            }
        }
        let self_reversed = reversed_counts.get(&r).copied().unwrap_or(0);

        let class = if (self_reversed as f64) > thresholds.reverse_ratio * n as f64 {
            RelationClass::Symmetric
        } else if self_reversed == 0 && {
            let heads: HashSet<usize> = pairs[r].iter().map(|&(h, _)| h).collect();
            let tails: HashSet<usize> = pairs[r].iter().map(|&(_, t)| t).collect();
            let overlap = heads.intersection(&tails).count();
            overlap as f64 >= thresholds.overlap_ratio * n as f64
        } {
            RelationClass::AntiSymmetric
        } else {
            // Best distinct partner; ties go to the smallest index.
            let partner = reversed_counts
                .iter()
                .filter(|&(&other, _)| other != r)
                .max_by_key(|&(&other, &count)| (count, std::cmp::Reverse(other)))
                .filter(|&(_, &count)| count as f64 >= thresholds.reverse_ratio * n as f64)
                .map(|(&other, _)| other);
            match partner {
                Some(partner) => RelationClass::Inverse { partner },
                None => RelationClass::General,
            }
        };
        stats.push(RelationStat { relation: r, n, class });
    }
    stats
}

/// Aggregate per-class counts.
pub fn class_counts(stats: &[RelationStat]) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for stat in stats {
        match stat.class {
            RelationClass::Symmetric => counts.symmetric += 1,
            RelationClass::AntiSymmetric => counts.anti_symmetric += 1,
            RelationClass::Inverse { .. } => counts.inverse += 1,
            RelationClass::General => counts.general += 1,
        }
    }
    counts
}

/// JSON row of the stats report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationStatJson {
    pub relation: String,
    pub n: usize,
    pub class: String,
    pub inverse_partner: Option<String>,
}

pub fn stats_to_json(store: &TripleStore, stats: &[RelationStat]) -> Vec<RelationStatJson> {
    stats
        .iter()
        .map(|stat| RelationStatJson {
            relation: store.relations.name(stat.relation).to_owned(),
            n: stat.n,
            class: stat.class.label().to_owned(),
            inverse_partner: match stat.class {
                RelationClass::Inverse { partner } => {
                    Some(store.relations.name(partner).to_owned())
                }
                _ => None,
            },
        })
        .collect()
}
