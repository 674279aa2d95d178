use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Syntactic category of a Java token.
///
/// The discriminant is the canonical index used by the encoder, the explain
/// report and every serialized 15-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenCategory {
    Annotation = 0,
    BasicType = 1,
    BinaryInteger = 2,
    Boolean = 3,
    DecimalFloatingPoint = 4,
    Modifier = 5,
    Operator = 6,
    DecimalInteger = 7,
    HexFloatingPoint = 8,
    HexInteger = 9,
    Identifier = 10,
    Keyword = 11,
    OctalInteger = 12,
    Separator = 13,
    Null = 14,
}

pub const NUM_CATEGORIES: usize = 15;

const ORDER: [TokenCategory; NUM_CATEGORIES] = [
    TokenCategory::Annotation,
    TokenCategory::BasicType,
    TokenCategory::BinaryInteger,
    TokenCategory::Boolean,
    TokenCategory::DecimalFloatingPoint,
    TokenCategory::Modifier,
    TokenCategory::Operator,
    TokenCategory::DecimalInteger,
    TokenCategory::HexFloatingPoint,
    TokenCategory::HexInteger,
    TokenCategory::Identifier,
    TokenCategory::Keyword,
    TokenCategory::OctalInteger,
    TokenCategory::Separator,
    TokenCategory::Null,
];

/// The fixed category ordering shared by every component.
pub fn category_order() -> &'static [TokenCategory; NUM_CATEGORIES] {
    &ORDER
}

impl TokenCategory {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        ORDER.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenCategory::Annotation => "Annotation",
            TokenCategory::BasicType => "BasicType",
            TokenCategory::BinaryInteger => "BinaryInteger",
            TokenCategory::Boolean => "Boolean",
            TokenCategory::DecimalFloatingPoint => "DecimalFloatingPoint",
            TokenCategory::Modifier => "Modifier",
            TokenCategory::Operator => "Operator",
            TokenCategory::DecimalInteger => "DecimalInteger",
            TokenCategory::HexFloatingPoint => "HexFloatingPoint",
            TokenCategory::HexInteger => "HexInteger",
            TokenCategory::Identifier => "Identifier",
            TokenCategory::Keyword => "Keyword",
            TokenCategory::OctalInteger => "OctalInteger",
            TokenCategory::Separator => "Separator",
            TokenCategory::Null => "Null",
        }
    }

    /// Literal categories hold values rather than names; used by the
    /// synthetic Type-2 generator.
    pub fn is_literal(self) -> bool {
        matches!(
            self,
            TokenCategory::BinaryInteger
                | TokenCategory::DecimalFloatingPoint
                | TokenCategory::DecimalInteger
                | TokenCategory::HexFloatingPoint
                | TokenCategory::HexInteger
                | TokenCategory::OctalInteger
        )
    }
}

impl fmt::Display for TokenCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown token category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for TokenCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ORDER
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_indices() {
        let order = category_order();
        assert_eq!(order[0], TokenCategory::Annotation);
        assert_eq!(order[14], TokenCategory::Null);
        assert_eq!(TokenCategory::BasicType.index(), 1);
        for (i, c) in order.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(TokenCategory::from_index(i), Some(*c));
            assert_eq!(c.name().parse::<TokenCategory>().unwrap(), *c);
        }
        assert_eq!(TokenCategory::from_index(15), None);
    }
}
