//! Hand-written Java lexer.
//!
//! Produces the token stream of a single method. Only lexical validity is
//! checked; the input does not have to parse as Java.

use serde::{Deserialize, Serialize};

use super::category::TokenCategory;

/// 1-based line and column (columns count chars, not bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub lexeme: String,
    pub category: TokenCategory,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub source_id: String,
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lexemes(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lexeme.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexErrorKind {
    UnterminatedString,
    UnterminatedChar,
    UnterminatedTextBlock,
    UnterminatedComment,
    MalformedNumber,
    IllegalChar(char),
}

impl std::fmt::Display for LexErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LexErrorKind::UnterminatedString => f.write_str("unterminated string literal"),
            LexErrorKind::UnterminatedChar => f.write_str("unterminated character literal"),
            LexErrorKind::UnterminatedTextBlock => f.write_str("unterminated text block"),
            LexErrorKind::UnterminatedComment => f.write_str("unterminated block comment"),
            LexErrorKind::MalformedNumber => f.write_str("malformed numeric literal"),
            LexErrorKind::IllegalChar(c) => write!(f, "illegal character {c:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lex error at {position}: {reason}")]
pub struct LexError {
    pub position: Position,
    pub reason: LexErrorKind,
}

const MODIFIERS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "abstract",
    "synchronized",
    "volatile",
    "transient",
    "native",
    "strictfp",
    "default",
];

const BASIC_TYPES: &[&str] = &["int", "long", "short", "byte", "float", "double", "boolean", "char"];

const KEYWORDS: &[&str] = &[
    "assert",
    "break",
    "case",
    "catch",
    "class",
    "const",
    "continue",
    "do",
    "else",
    "enum",
    "extends",
    "finally",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "interface",
    "new",
    "package",
    "return",
    "super",
    "switch",
    "this",
    "throw",
    "throws",
    "try",
    "void",
    "while",
];

// Longest first so that maximal munch is a linear scan.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "->", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=",
    "*=", "/=", "&=", "|=", "^=", "%=", "<<", ">>", "=", ">", "<", "!", "~", "?", ":", "+", "-",
    "*", "/", "&", "|", "^", "%",
];

/// Category of a word-like lexeme (identifier, keyword or word literal).
pub fn classify_word(word: &str) -> TokenCategory {
    if MODIFIERS.contains(&word) {
        TokenCategory::Modifier
    } else if BASIC_TYPES.contains(&word) {
        TokenCategory::BasicType
    } else if KEYWORDS.contains(&word) {
        TokenCategory::Keyword
    } else if word == "true" || word == "false" {
        TokenCategory::Boolean
    } else if word == "null" {
        TokenCategory::Null
    } else {
        TokenCategory::Identifier
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_part(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric()
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    source_id: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(source: &str, source_id: &'a str) -> Self {
        Self {
            chars: source.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            source_id,
        }
    }

    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn here(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn slice(&self, start: usize) -> String {
        self.chars[start..self.pos].iter().collect()
    }

    fn run(mut self) -> Result<TokenStream, LexError> {
        let mut tokens = Vec::new();
        while let Some(c) = self.peek(0) {
            let start_pos = self.here();
            let start = self.pos;
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            if self.starts_with("//") {
                while let Some(c) = self.peek(0) {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                continue;
            }
            if self.starts_with("/*") {
                self.bump();
                self.bump();
                loop {
                    if self.starts_with("*/") {
                        self.bump();
                        self.bump();
                        break;
                    }
                    if self.bump().is_none() {
                        return Err(LexError {
                            position: start_pos,
                            reason: LexErrorKind::UnterminatedComment,
                        });
                    }
                }
                continue;
            }

            let category = if is_ident_start(c) {
                while self.peek(0).is_some_and(is_ident_part) {
                    self.bump();
                }
                classify_word(&self.slice(start))
            } else if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
                self.number(start_pos)?
            } else if self.starts_with("\"\"\"") {
                self.text_block(start_pos)?;
                TokenCategory::Null
            } else if c == '"' {
                self.quoted('"', start_pos, LexErrorKind::UnterminatedString)?;
                TokenCategory::Null
            } else if c == '\'' {
                self.quoted('\'', start_pos, LexErrorKind::UnterminatedChar)?;
                TokenCategory::Null
            } else if c == '@' {
                self.bump();
                TokenCategory::Annotation
            } else if self.starts_with("...") {
                for _ in 0..3 {
                    self.bump();
                }
                TokenCategory::Separator
            } else if self.starts_with("::") {
                self.bump();
                self.bump();
                TokenCategory::Separator
            } else if matches!(c, '(' | ')' | '{' | '}' | '[' | ']' | ';' | ',' | '.') {
                self.bump();
                TokenCategory::Separator
            } else if let Some(op) = OPERATORS.iter().find(|op| self.starts_with(op)) {
                for _ in 0..op.len() {
                    self.bump();
                }
                TokenCategory::Operator
            } else {
                return Err(LexError {
                    position: start_pos,
                    reason: LexErrorKind::IllegalChar(c),
                });
            };

            tokens.push(Token {
                lexeme: self.slice(start),
                category,
                position: start_pos,
            });
        }
        Ok(TokenStream {
            source_id: self.source_id.to_string(),
            tokens,
        })
    }

    fn quoted(&mut self, quote: char, start: Position, kind: LexErrorKind) -> Result<(), LexError> {
        self.bump();
        loop {
            match self.peek(0) {
                None | Some('\n') | Some('\r') => {
                    return Err(LexError {
                        position: start,
                        reason: kind,
                    })
                }
                Some('\\') => {
                    self.bump();
                    // an escaped newline is still an unterminated literal
                    if matches!(self.peek(0), None | Some('\n') | Some('\r')) {
                        return Err(LexError {
                            position: start,
                            reason: kind,
                        });
                    }
                    self.bump();
                }
                Some(c) if c == quote => {
                    self.bump();
                    return Ok(());
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn text_block(&mut self, start: Position) -> Result<(), LexError> {
        for _ in 0..3 {
            self.bump();
        }
        loop {
            if self.starts_with("\"\"\"") {
                for _ in 0..3 {
                    self.bump();
                }
                return Ok(());
            }
            match self.bump() {
                None => {
                    return Err(LexError {
                        position: start,
                        reason: LexErrorKind::UnterminatedTextBlock,
                    })
                }
                Some('\\') => {
                    self.bump();
                }
                Some(_) => {}
            }
        }
    }

    fn eat_digits(&mut self, pred: impl Fn(char) -> bool) -> usize {
        let mut n = 0;
        while let Some(c) = self.peek(0) {
            if pred(c) || (c == '_' && n > 0) {
                self.bump();
                n += 1;
            } else {
                break;
            }
        }
        n
    }

    fn eat_exponent(&mut self, marker: [char; 2], start: Position) -> Result<bool, LexError> {
        if !self.peek(0).is_some_and(|c| marker.contains(&c)) {
            return Ok(false);
        }
        self.bump();
        if matches!(self.peek(0), Some('+') | Some('-')) {
            self.bump();
        }
        if self.eat_digits(|c| c.is_ascii_digit()) == 0 {
            return Err(LexError {
                position: start,
                reason: LexErrorKind::MalformedNumber,
            });
        }
        Ok(true)
    }

    fn number(&mut self, start: Position) -> Result<TokenCategory, LexError> {
        let first = self.peek(0).unwrap_or('0');
        let second = self.peek(1);
        if first == '0' && matches!(second, Some('x') | Some('X')) {
            self.bump();
            self.bump();
            let int_digits = self.eat_digits(|c| c.is_ascii_hexdigit());
            let mut is_float = false;
            let mut frac_digits = 0;
            if self.peek(0) == Some('.') {
                self.bump();
                is_float = true;
                frac_digits = self.eat_digits(|c| c.is_ascii_hexdigit());
            }
            if int_digits + frac_digits == 0 {
                return Err(LexError {
                    position: start,
                    reason: LexErrorKind::MalformedNumber,
                });
            }
            let has_exp = self.eat_exponent(['p', 'P'], start)?;
            if is_float && !has_exp {
                return Err(LexError {
                    position: start,
                    reason: LexErrorKind::MalformedNumber,
                });
            }
            if has_exp {
                if matches!(self.peek(0), Some('f' | 'F' | 'd' | 'D')) {
                    self.bump();
                }
                return Ok(TokenCategory::HexFloatingPoint);
            }
            if matches!(self.peek(0), Some('l' | 'L')) {
                self.bump();
            }
            return Ok(TokenCategory::HexInteger);
        }
        if first == '0' && matches!(second, Some('b') | Some('B')) {
            self.bump();
            self.bump();
            if self.eat_digits(|c| c == '0' || c == '1') == 0 {
                return Err(LexError {
                    position: start,
                    reason: LexErrorKind::MalformedNumber,
                });
            }
            if matches!(self.peek(0), Some('l' | 'L')) {
                self.bump();
            }
            return Ok(TokenCategory::BinaryInteger);
        }

        let begin = self.pos;
        let int_digits = self.eat_digits(|c| c.is_ascii_digit());
        let mut is_float = false;
        if self.peek(0) == Some('.') && !self.starts_with("...") {
            // `1.foo` is not a float but `1.` and `1.5` are
            let next = self.peek(1);
            if int_digits == 0 || !next.is_some_and(is_ident_start) || matches!(next, Some('e' | 'E' | 'f' | 'F' | 'd' | 'D')) {
                self.bump();
                is_float = true;
                self.eat_digits(|c| c.is_ascii_digit());
            }
        }
        if self.eat_exponent(['e', 'E'], start)? {
            is_float = true;
        }
        if matches!(self.peek(0), Some('f' | 'F' | 'd' | 'D')) {
            self.bump();
            return Ok(TokenCategory::DecimalFloatingPoint);
        }
        if is_float {
            return Ok(TokenCategory::DecimalFloatingPoint);
        }
        let digits: String = self.chars[begin..self.pos].iter().collect();
        if matches!(self.peek(0), Some('l' | 'L')) {
            self.bump();
        }
        if digits.len() > 1 && digits.starts_with('0') {
            Ok(TokenCategory::OctalInteger)
        } else {
            Ok(TokenCategory::DecimalInteger)
        }
    }
}

/// Lex a Java method. Whitespace and comments are dropped.
pub fn tokenize(source: &str) -> Result<TokenStream, LexError> {
    tokenize_with_id(source, "")
}

pub fn tokenize_with_id(source: &str, source_id: &str) -> Result<TokenStream, LexError> {
    Lexer::new(source, source_id).run()
}
