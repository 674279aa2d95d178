//! Synthetic clone classes built from textual edits of base methods.
//!
//! The statement swap used for Type-3-like variants is a textual heuristic:
//! it does not prove that the two statements are independent.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::dataset::{ClonePair, CloneType, DatasetMethod, PairDataset};
use crate::detect::overlap_similarity;
use crate::lexcat::{categorize, tokenize, tokenize_with_id, CategorizedMethod, Token, TokenCategory, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// Whitespace and comment edits.
    Layout,
    /// Consistent identifier renaming.
    Rename,
    /// Adjacent independent statements swapped.
    Swap,
    /// Renaming plus literal substitution.
    RenameLiterals,
    /// Swap, then rename.
    SwapRename,
}

/// Rotation used to assign kinds to the variants of a base.
pub const VARIANT_ROTATION: [VariantKind; 5] = [
    VariantKind::Layout,
    VariantKind::Rename,
    VariantKind::Swap,
    VariantKind::RenameLiterals,
    VariantKind::SwapRename,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Variants per base; each class has `variants + 1` methods.
    pub variants: usize,
    /// Negative pairs per positive pair.
    pub negative_ratio: f64,
    /// Allow literal substitution in renaming variants.
    pub literal_substitution: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            variants: 9,
            negative_ratio: 1.0,
            literal_substitution: true,
            seed: 0,
        }
    }
}

const NAME_POOL: [&str; 48] = [
    "acc", "alpha", "beta", "buf", "cell", "cnt", "cur", "data", "delta", "elem", "entry", "flag", "gamma", "head",
    "idx", "input", "item", "jdx", "key", "last", "left2", "len", "lim", "mark", "node", "num", "obj", "pos", "prev",
    "ptr", "qty", "ref", "res", "ret", "right2", "slot", "src", "step", "tail", "tally", "temp", "tmp", "total2",
    "unit", "val", "value", "work", "xs",
];

const WORD_POOL: [&str; 8] = ["alpha", "done", "value", "text", "ok", "result", "note", "item"];

/// Re-emit `src` with random whitespace and inserted comments. The token
/// sequence is unchanged.
pub fn layout_variant(src: &str, rng: &mut impl Rng) -> Result<String, BenchError> {
    let ts = tokenize(src).map_err(|e| BenchError::Lex("base".into(), e))?;
    Ok(render(&ts.tokens, rng, true))
}

fn render(tokens: &[Token], rng: &mut impl Rng, comments: bool) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            let gap = match rng.gen_range(0..10) {
                0..=5 => " ",
                6 => "  ",
                7 => "\n    ",
                8 => "\t",
                _ => "\n",
            };
            out.push_str(gap);
            if comments && rng.gen_bool(0.05) {
                if rng.gen_bool(0.5) {
                    out.push_str("/* edited */ ");
                } else {
                    out.push_str("// note\n");
                }
            }
        }
        out.push_str(&t.lexeme);
    }
    out
}

fn renamable(tokens: &[Token], i: usize) -> bool {
    let t = &tokens[i];
    t.category == TokenCategory::Identifier
        && t.lexeme.chars().next().map_or(false, |c| c.is_ascii_lowercase())
        && (i == 0 || tokens[i - 1].lexeme != ".")
        && tokens.get(i + 1).map_or(true, |n| n.lexeme != "(")
}

/// Consistently rename local-looking identifiers (lowercase start, not a
/// member access, not a call). At least one name changes when possible.
pub fn rename_variant(src: &str, rng: &mut impl Rng, literals: bool) -> Result<String, BenchError> {
    let ts = tokenize(src).map_err(|e| BenchError::Lex("base".into(), e))?;
    let mut tokens = ts.tokens;
    let existing: HashSet<String> = tokens.iter().map(|t| t.lexeme.clone()).collect();
    let candidates: BTreeSet<String> = (0..tokens.len())
        .filter(|&i| renamable(&tokens, i))
        .map(|i| tokens[i].lexeme.clone())
        .collect();
    let mut pool: Vec<&str> = NAME_POOL.iter().copied().filter(|n| !existing.contains(*n)).collect();
    pool.shuffle(rng);
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (k, name) in candidates.iter().enumerate() {
        if (k == 0 || rng.gen_bool(0.7)) && !pool.is_empty() {
            map.insert(name.clone(), pool.pop().expect("non-empty").to_string());
        }
    }
    for i in 0..tokens.len() {
        if renamable(&tokens, i) {
            if let Some(new) = map.get(&tokens[i].lexeme) {
                tokens[i].lexeme = new.clone();
            }
        }
    }
    if literals {
        for t in tokens.iter_mut() {
            if t.category == TokenCategory::DecimalInteger && rng.gen_bool(0.5) {
                let digits: String = t.lexeme.chars().take_while(char::is_ascii_digit).collect();
                let suffix = &t.lexeme[digits.len()..];
                if let Ok(v) = digits.parse::<u64>() {
                    t.lexeme = format!("{}{}", v + rng.gen_range(1..=9), suffix);
                }
            } else if t.lexeme.starts_with('"') && !t.lexeme.starts_with("\"\"\"") && rng.gen_bool(0.7) {
                t.lexeme = format!("\"{}\"", WORD_POOL.choose(rng).expect("non-empty"));
            }
        }
    }
    Ok(render(&tokens, rng, false))
}

fn line_identifiers(line: &str) -> Option<(Vec<String>, BTreeSet<String>)> {
    let ts = tokenize(line).ok()?;
    let ids: BTreeSet<String> = ts
        .tokens
        .iter()
        .filter(|t| t.category == TokenCategory::Identifier)
        .map(|t| t.lexeme.clone())
        .collect();
    let mut defs = Vec::new();
    for (i, t) in ts.tokens.iter().enumerate() {
        let assigns = t.category == TokenCategory::Operator && t.lexeme.ends_with('=') && !["==", "!=", "<=", ">="].contains(&t.lexeme.as_str());
        let incdec = t.lexeme == "++" || t.lexeme == "--";
        if assigns && i > 0 && ts.tokens[i - 1].category == TokenCategory::Identifier {
            defs.push(ts.tokens[i - 1].lexeme.clone());
        }
        if incdec {
            for j in [i.wrapping_sub(1), i + 1] {
                if let Some(n) = ts.tokens.get(j) {
                    if n.category == TokenCategory::Identifier {
                        defs.push(n.lexeme.clone());
                    }
                }
            }
        }
    }
    Some((defs, ids))
}

fn simple_statement(line: &str) -> bool {
    let t = line.trim();
    t.ends_with(';')
        && !t.contains('{')
        && !t.contains('}')
        && !["return", "break", "continue", "throw"].iter().any(|k| t.starts_with(k))
}

/// Indices `i` such that lines `i` and `i+1` look like independent simple
/// statements.
pub fn swappable_lines(src: &str) -> Vec<usize> {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = Vec::new();
    for i in 0..lines.len().saturating_sub(1) {
        let (a, b) = (lines[i], lines[i + 1]);
        if !simple_statement(a) || !simple_statement(b) || a.trim() == b.trim() {
            continue;
        }
        let (Some((def_a, use_a)), Some((def_b, use_b))) = (line_identifiers(a), line_identifiers(b)) else {
            continue;
        };
        let clash = def_a.iter().any(|d| use_b.contains(d)) || def_b.iter().any(|d| use_a.contains(d));
        let io = |s: &str| s.contains("close") || s.contains("print") || s.contains("write");
        if !clash && !(io(a) && io(b)) {
            out.push(i);
        }
    }
    out
}

/// Swap one random pair of adjacent independent statements. Returns the
/// source unchanged if none exists.
pub fn swap_variant(src: &str, rng: &mut impl Rng) -> String {
    let candidates = swappable_lines(src);
    let Some(&i) = candidates.choose(rng) else {
        return src.to_string();
    };
    let mut lines: Vec<&str> = src.lines().collect();
    lines.swap(i, i + 1);
    lines.join("\n")
}

pub fn make_variant(src: &str, kind: VariantKind, rng: &mut impl Rng, literals: bool) -> Result<String, BenchError> {
    match kind {
        VariantKind::Layout => layout_variant(src, rng),
        VariantKind::Rename => rename_variant(src, rng, false),
        VariantKind::Swap => Ok(swap_variant(src, rng)),
        VariantKind::RenameLiterals => rename_variant(src, rng, literals),
        VariantKind::SwapRename => rename_variant(&swap_variant(src, rng), rng, false),
    }
}

fn normalized(ts: &TokenStream) -> Vec<String> {
    ts.tokens
        .iter()
        .map(|t| {
            if t.category == TokenCategory::Identifier {
                "$id".to_string()
            } else if t.category.is_literal() || t.lexeme.starts_with('"') || t.lexeme.starts_with('\'') {
                "$lit".to_string()
            } else {
                t.lexeme.clone()
            }
        })
        .collect()
}

/// Type of a clone pair from its token streams: identical lexemes → T1;
/// identical after abstracting identifiers and literals → T2; otherwise
/// the overlap similarity band.
pub fn classify_pair(t1: &TokenStream, t2: &TokenStream, c1: &CategorizedMethod, c2: &CategorizedMethod) -> CloneType {
    if t1.lexemes().eq(t2.lexemes()) {
        CloneType::T1
    } else if normalized(t1) == normalized(t2) {
        CloneType::T2
    } else {
        CloneType::from_similarity(overlap_similarity(c1, c2))
    }
}

pub(crate) fn dataset_method(id: &str, source: String) -> Result<DatasetMethod, BenchError> {
    let tokens = tokenize_with_id(&source, id).map_err(|e| BenchError::Lex(id.to_string(), e))?;
    Ok(DatasetMethod {
        id: id.to_string(),
        categorized: categorize(&tokens),
        tokens,
        source,
    })
}

/// Build clone classes (one per base: original plus variants), all
/// within-class positive pairs, and random cross-class negative pairs.
pub fn synth_clones(bases: &[&str], spec: &SynthSpec) -> Result<PairDataset, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ds = PairDataset::new();
    let mut classes: Vec<Vec<String>> = Vec::with_capacity(bases.len());
    for (b, base) in bases.iter().enumerate() {
        let mut ids = Vec::with_capacity(spec.variants + 1);
        let id = format!("b{b:02}_v0");
        ds.add_method(dataset_method(&id, base.to_string())?);
        ids.push(id);
        for v in 0..spec.variants {
            let kind = VARIANT_ROTATION[v % VARIANT_ROTATION.len()];
            let src = make_variant(base, kind, &mut rng, spec.literal_substitution)?;
            let id = format!("b{b:02}_v{}", v + 1);
            ds.add_method(dataset_method(&id, src)?);
            ids.push(id);
        }
        classes.push(ids);
    }
    let mut pairs = Vec::new();
    for ids in &classes {
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let (a, b) = (ds.method(&ids[i]).expect("added"), ds.method(&ids[j]).expect("added"));
                pairs.push(ClonePair {
                    id1: ids[i].clone(),
                    id2: ids[j].clone(),
                    label: 1,
                    clone_type: classify_pair(&a.tokens, &b.tokens, &a.categorized, &b.categorized),
                });
            }
        }
    }
    let max_negatives: usize = {
        let sizes: Vec<usize> = classes.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().sum();
        sizes.iter().map(|s| s * (total - s)).sum::<usize>() / 2
    };
    let wanted = ((pairs.len() as f64 * spec.negative_ratio).round() as usize).min(max_negatives);
    let mut seen: HashSet<(usize, usize, usize, usize)> = HashSet::new();
    while seen.len() < wanted {
        let ca = rng.gen_range(0..classes.len());
        let cb = rng.gen_range(0..classes.len());
        if ca == cb {
            continue;
        }
        let ia = rng.gen_range(0..classes[ca].len());
        let ib = rng.gen_range(0..classes[cb].len());
        let key = if (ca, ia) < (cb, ib) { (ca, ia, cb, ib) } else { (cb, ib, ca, ia) };
        if seen.insert(key) {
            pairs.push(ClonePair {
                id1: classes[key.0][key.1].clone(),
                id2: classes[key.2][key.3].clone(),
                label: 0,
                clone_type: CloneType::NONCLONE,
            });
        }
    }
    ds.pairs = pairs;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::super::bases::BASE_METHODS;
    use super::*;
    use crate::lexcat::{categorize_source, TokenCategory};

    #[test]
    fn every_base_lexes_and_has_a_swappable_pair() {
        for (i, b) in BASE_METHODS.iter().enumerate() {
            assert!(tokenize(b).is_ok(), "base {i}");
            assert!(!swappable_lines(b).is_empty(), "base {i} has no swappable statements");
        }
    }

    #[test]
    fn layout_variant_keeps_categorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for b in BASE_METHODS {
            let v = layout_variant(b, &mut rng).unwrap();
            assert_eq!(categorize_source(&v, "x").unwrap().iter().collect::<Vec<_>>(), categorize_source(b, "x").unwrap().iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn rename_variant_only_touches_identifiers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for b in BASE_METHODS {
            let v = rename_variant(b, &mut rng, false).unwrap();
            let (a, c) = (categorize_source(b, "a").unwrap(), categorize_source(&v, "c").unwrap());
            for &cat in crate::lexcat::category_order() {
                if cat != TokenCategory::Identifier {
                    assert_eq!(a.category(cat), c.category(cat), "{cat}");
                }
            }
            assert_ne!(a.category(TokenCategory::Identifier), c.category(TokenCategory::Identifier));
            assert_eq!(a.category_total(TokenCategory::Identifier), c.category_total(TokenCategory::Identifier));
        }
    }

    #[test]
    fn synth_counts_and_labels() {
        let spec = SynthSpec {
            variants: 5,
            seed: 4,
            ..SynthSpec::default()
        };
        let ds = synth_clones(&BASE_METHODS, &spec).unwrap();
        assert_eq!(ds.methods().len(), 120);
        let positives = ds.pairs.iter().filter(|p| p.is_clone()).count();
        assert_eq!(positives, 20 * 15);
        assert_eq!(ds.pairs.len(), 2 * positives);
        assert_eq!(crate::dataset::clone_classes(&ds, &(0..ds.pairs.len()).collect::<Vec<_>>()).len(), 20);
        for p in &ds.pairs {
            assert_eq!(p.label == 0, p.clone_type == CloneType::NONCLONE);
        }
        let t1 = ds.pairs.iter().filter(|p| p.clone_type == CloneType::T1).count();
        let t2 = ds.pairs.iter().filter(|p| p.clone_type == CloneType::T2).count();
        assert!(t1 >= 20 && t2 >= 20, "t1={t1} t2={t2}");
        let again = synth_clones(&BASE_METHODS, &spec).unwrap();
        assert_eq!(again.pairs, ds.pairs);
    }
}
