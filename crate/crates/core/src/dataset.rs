//! Methods plus labeled pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexcat::{CategorizedMethod, TokenStream};

/// BigCloneBench-style clone types. Type-3/4 subtypes are similarity bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CloneType {
    T1,
    T2,
    VST3,
    ST3,
    MT3,
    WT3T4,
    NONCLONE,
}

impl CloneType {
    pub const ALL: [CloneType; 7] = [
        CloneType::T1,
        CloneType::T2,
        CloneType::VST3,
        CloneType::ST3,
        CloneType::MT3,
        CloneType::WT3T4,
        CloneType::NONCLONE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CloneType::T1 => "T1",
            CloneType::T2 => "T2",
            CloneType::VST3 => "VST3",
            CloneType::ST3 => "ST3",
            CloneType::MT3 => "MT3",
            CloneType::WT3T4 => "WT3T4",
            CloneType::NONCLONE => "NONCLONE",
        }
    }

    /// Half-open similarity band `[lo, hi)` of the Type-3/4 subtypes.
    pub fn band(self) -> Option<(f64, f64)> {
        match self {
            CloneType::VST3 => Some((0.9, 1.0)),
            CloneType::ST3 => Some((0.7, 0.9)),
            CloneType::MT3 => Some((0.5, 0.7)),
            CloneType::WT3T4 => Some((0.0, 0.5)),
            _ => None,
        }
    }

    /// Band containing `similarity`; 1.0 is folded into VST3.
    pub fn from_similarity(similarity: f64) -> CloneType {
        if similarity >= 0.9 {
            CloneType::VST3
        } else if similarity >= 0.7 {
            CloneType::ST3
        } else if similarity >= 0.5 {
            CloneType::MT3
        } else {
            CloneType::WT3T4
        }
    }
}

impl fmt::Display for CloneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CloneType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '/'], "");
        CloneType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == norm)
            .ok_or_else(|| format!("unknown clone type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClonePair {
    pub id1: String,
    pub id2: String,
    pub label: u8,
    pub clone_type: CloneType,
}

impl ClonePair {
    pub fn is_clone(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone)]
pub struct DatasetMethod {
    pub id: String,
    pub source: String,
    pub tokens: TokenStream,
    pub categorized: CategorizedMethod,
}

/// Methods keyed by id plus the labeled pair list.
#[derive(Debug, Clone, Default)]
pub struct PairDataset {
    methods: Vec<DatasetMethod>,
    index: BTreeMap<String, usize>,
    pub pairs: Vec<ClonePair>,
}

impl PairDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a method; returns its index.
    pub fn add_method(&mut self, method: DatasetMethod) -> usize {
        if let Some(&i) = self.index.get(&method.id) {
            self.methods[i] = method;
            return i;
        }
        let i = self.methods.len();
        self.index.insert(method.id.clone(), i);
        self.methods.push(method);
        i
    }

    pub fn methods(&self) -> &[DatasetMethod] {
        &self.methods
    }

    pub fn method_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn method(&self, id: &str) -> Option<&DatasetMethod> {
        self.method_index(id).map(|i| &self.methods[i])
    }

    /// Method indices of pair `p`. Panics if an id is unknown; datasets
    /// built by the loaders always resolve.
    pub fn pair_indices(&self, p: usize) -> (usize, usize) {
        let pair = &self.pairs[p];
        (
            self.method_index(&pair.id1).expect("pair ids resolve"),
            self.method_index(&pair.id2).expect("pair ids resolve"),
        )
    }

    pub fn token_streams(&self) -> Vec<TokenStream> {
        self.methods.iter().map(|m| m.tokens.clone()).collect()
    }
}

/// Connected components of the positive-pair graph restricted to
/// `pair_subset`. Only components with at least two methods are returned,
/// each sorted, ordered by their smallest member.
pub fn clone_classes(dataset: &PairDataset, pair_subset: &[usize]) -> Vec<Vec<usize>> {
    let n = dataset.methods().len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &p in pair_subset {
        if !dataset.pairs[p].is_clone() {
            continue;
        }
        let (a, b) = dataset.pair_indices(p);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() >= 2).collect()
}
