//! Lexing Java methods and grouping their tokens by syntactic category.

mod category;
mod lexer;

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

pub use category::{category_order, TokenCategory, UnknownCategory, NUM_CATEGORIES};
pub use lexer::{
    classify_word, tokenize, tokenize_with_id, LexError, LexErrorKind, Position, Token, TokenStream,
};

/// Multiset of lexemes for one category. Sorted by lexeme.
pub type LexemeCounts = BTreeMap<String, u32>;

/// Per-category token multisets of one method.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategorizedMethod {
    pub source_id: String,
    counts: [LexemeCounts; NUM_CATEGORIES],
    total_tokens: u64,
}

impl CategorizedMethod {
    pub fn empty(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            ..Self::default()
        }
    }

    /// Add one occurrence. Panics on an empty lexeme.
    pub fn insert(&mut self, category: TokenCategory, lexeme: &str) {
        self.insert_n(category, lexeme, 1);
    }

    pub fn insert_n(&mut self, category: TokenCategory, lexeme: &str, n: u32) {
        assert!(!lexeme.is_empty(), "lexemes are never empty");
        if n == 0 {
            return;
        }
        *self.counts[category.index()].entry(lexeme.to_string()).or_insert(0) += n;
        self.total_tokens += u64::from(n);
    }

    pub fn category(&self, category: TokenCategory) -> &LexemeCounts {
        &self.counts[category.index()]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn category_total(&self, category: TokenCategory) -> u64 {
        self.counts[category.index()].values().map(|&c| u64::from(c)).sum()
    }

    pub fn is_present(&self, category: TokenCategory) -> bool {
        !self.counts[category.index()].is_empty()
    }

    /// Presence flags in canonical order.
    pub fn present_mask(&self) -> [bool; NUM_CATEGORIES] {
        std::array::from_fn(|i| !self.counts[i].is_empty())
    }

    pub fn present_categories(&self) -> impl Iterator<Item = TokenCategory> + '_ {
        category_order().iter().copied().filter(|&c| self.is_present(c))
    }

    /// Non-empty categories with their multisets, canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenCategory, &LexemeCounts)> {
        category_order()
            .iter()
            .copied()
            .map(|c| (c, &self.counts[c.index()]))
            .filter(|(_, m)| !m.is_empty())
    }
}

/// Aggregate a token stream into per-category lexeme counts.
pub fn categorize(ts: &TokenStream) -> CategorizedMethod {
    let mut cm = CategorizedMethod::empty(ts.source_id.clone());
    for token in &ts.tokens {
        cm.insert(token.category, &token.lexeme);
    }
    cm
}

/// Lex and categorize in one step.
pub fn categorize_source(source: &str, source_id: &str) -> Result<CategorizedMethod, LexError> {
    Ok(categorize(&tokenize_with_id(source, source_id)?))
}

struct CategoryMap<'a>(&'a CategorizedMethod);

impl Serialize for CategoryMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        for (cat, lexemes) in self.0.iter() {
            map.serialize_entry(cat.name(), lexemes)?;
        }
        map.end()
    }
}

/// `{source_id, total_tokens, categories: {name: {lexeme: count}}}` with
/// categories in canonical order and empty categories omitted.
impl Serialize for CategorizedMethod {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("CategorizedMethod", 3)?;
        s.serialize_field("source_id", &self.source_id)?;
        s.serialize_field("total_tokens", &self.total_tokens)?;
        s.serialize_field("categories", &CategoryMap(self))?;
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_field_declaration() {
        let cm = categorize_source("public static long x = 0x1F;", "m").unwrap();
        let get = |c: TokenCategory| {
            cm.category(c)
                .iter()
                .map(|(k, v)| (k.as_str(), *v))
                .collect::<Vec<_>>()
        };
        assert_eq!(get(TokenCategory::Modifier), vec![("public", 1), ("static", 1)]);
        assert_eq!(get(TokenCategory::BasicType), vec![("long", 1)]);
        assert_eq!(get(TokenCategory::Identifier), vec![("x", 1)]);
        assert_eq!(get(TokenCategory::Operator), vec![("=", 1)]);
        assert_eq!(get(TokenCategory::HexInteger), vec![("0x1F", 1)]);
        assert_eq!(get(TokenCategory::Separator), vec![(";", 1)]);
        assert_eq!(cm.present_categories().count(), 6);
        assert_eq!(cm.total_tokens(), 7);
    }

    #[test]
    fn empty_stream() {
        let cm = categorize(&TokenStream::default());
        assert_eq!(cm.total_tokens(), 0);
        assert!(cm.present_mask().iter().all(|p| !p));
    }

    #[test]
    fn json_shape() {
        let cm = categorize_source("int a = a;", "f").unwrap();
        let json = serde_json::to_string(&cm).unwrap();
        assert_eq!(
            json,
            r#"{"source_id":"f","total_tokens":5,"categories":{"BasicType":{"int":1},"Operator":{"=":1},"Identifier":{"a":2},"Separator":{";":1}}}"#
        );
    }

    fn java_fragment() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "int", "a", "b", "=", "+", "(", ")", "{", "}", ";", "0", "0x1F", "1.5", "\"s\"",
            "'c'", "return", "public", "true", "null", "@", "x1", "while", "::", "...", "<<=",
        ]);
        prop::collection::vec(pieces, 0..40).prop_map(|v| v.join(" "))
    }

    fn noise() -> impl Strategy<Value = String> {
        prop::sample::select(vec![" ", "  ", "\n", "\t", " /* c */ ", " // x\n", "\r\n"])
            .prop_map(|s| s.to_string())
    }

    proptest! {
        #[test]
        fn conservation_and_single_home(src in java_fragment()) {
            let ts = tokenize(&src).unwrap();
            let cm = categorize(&ts);
            prop_assert_eq!(cm.total_tokens(), ts.len() as u64);
            let sum: u64 = category_order().iter().map(|&c| cm.category_total(c)).sum();
            prop_assert_eq!(sum, ts.len() as u64);
            let mut seen = std::collections::HashMap::new();
            for (cat, lexemes) in cm.iter() {
                for lexeme in lexemes.keys() {
                    prop_assert!(seen.insert(lexeme.clone(), cat).is_none());
                }
            }
        }

        #[test]
        fn whitespace_and_comment_invariance(src in java_fragment(), seps in prop::collection::vec(noise(), 40)) {
            let base = tokenize(&src).unwrap();
            let mut respaced = String::new();
            for (i, part) in src.split(' ').enumerate() {
                respaced.push_str(&seps[i % seps.len()]);
                respaced.push_str(part);
            }
            let variant = tokenize(&respaced).unwrap();
            let a: Vec<_> = base.tokens.iter().map(|t| (&t.lexeme, t.category)).collect();
            let b: Vec<_> = variant.tokens.iter().map(|t| (&t.lexeme, t.category)).collect();
            prop_assert_eq!(a, b);
        }
    }
}
