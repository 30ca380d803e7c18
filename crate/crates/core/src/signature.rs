//! Query signature control: validates generated SQL text.
//!
//! Two sublayers run over a minimal SQL lexer. The character sublayer checks
//! every character against an allowlist (with an optional exemption for
//! well-formed string literals) and flags interior statement separators. The
//! keyword sublayer checks every word token against a blocklist organized in
//! seven categories; comment and string literal contents are never matched,
//! and neither are substrings of longer identifiers.
//!
//! The lexer is total: any input produces a token stream whose concatenated
//! lexemes reproduce the input byte for byte. Unterminated literals and block
//! comments extend to end of input and are reported as warnings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqlTokenKind {
    /// Letters, digits, underscores, starting with a letter or underscore.
    Word,
    /// Letters, digits, underscores, starting with a digit.
    Number,
    /// Single-quote delimited, with `''` as the escape for a quote.
    StringLiteral,
    /// `--` to end of line, or `/* ... */`.
    Comment,
    Whitespace,
    /// Any single character not covered above.
    Symbol,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlToken {
    pub kind: SqlTokenKind,
    pub lexeme: String,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LexWarning {
    UnterminatedString { offset: usize },
    UnterminatedBlockComment { offset: usize },
}

/// Lexes SQL text into a total, round-tripping token stream.
pub fn tokenize_sql(sql: &str) -> (Vec<SqlToken>, Vec<LexWarning>) {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let n = chars.len();
    let byte_at = |idx: usize| if idx < n { chars[idx].0 } else { sql.len() };
    let mut tokens = Vec::new();
    let mut warnings = Vec::new();
    let mut i = 0;
    while i < n {
        let (start, c) = chars[i];
        let kind;
        if c.is_whitespace() {
            while i < n && chars[i].1.is_whitespace() {
                i += 1;
            }
            kind = SqlTokenKind::Whitespace;
        } else if c == '-' && i + 1 < n && chars[i + 1].1 == '-' {
            while i < n && chars[i].1 != '\n' {
                i += 1;
            }
            kind = SqlTokenKind::Comment;
        } else if c == '/' && i + 1 < n && chars[i + 1].1 == '*' {
            i += 2;
            let mut closed = false;
            while i < n {
                if chars[i].1 == '*' && i + 1 < n && chars[i + 1].1 == '/' {
                    i += 2;
                    closed = true;
                    break;
                }
                i += 1;
            }
            if !closed {
                warnings.push(LexWarning::UnterminatedBlockComment { offset: start });
            }
            kind = SqlTokenKind::Comment;
        } else if c == '\'' {
            i += 1;
            let mut closed = false;
            while i < n {
                if chars[i].1 == '\'' {
                    if i + 1 < n && chars[i + 1].1 == '\'' {
                        i += 2;
                    } else {
                        i += 1;
                        closed = true;
                        break;
                    }
                } else {
                    i += 1;
                }
            }
            if !closed {
                warnings.push(LexWarning::UnterminatedString { offset: start });
            }
            kind = SqlTokenKind::StringLiteral;
        } else if c.is_alphabetic() || c == '_' {
            while i < n && crate::shield::is_word_char(chars[i].1) {
                i += 1;
            }
            kind = SqlTokenKind::Word;
        } else if c.is_numeric() {
            while i < n && crate::shield::is_word_char(chars[i].1) {
                i += 1;
            }
            kind = SqlTokenKind::Number;
        } else {
            i += 1;
            kind = SqlTokenKind::Symbol;
        }
        tokens.push(SqlToken {
            kind,
            lexeme: sql[start..byte_at(i)].to_string(),
            offset: start,
        });
    }
    (tokens, warnings)
}

/// The seven blocklist categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlocklistCategory {
    DataDefinition,
    DataManipulation,
    AccessControl,
    ControlFlow,
    Restore,
    SystemOperations,
    DataFunctions,
}

impl BlocklistCategory {
    pub const ALL: [BlocklistCategory; 7] = [
        BlocklistCategory::DataDefinition,
        BlocklistCategory::DataManipulation,
        BlocklistCategory::AccessControl,
        BlocklistCategory::ControlFlow,
        BlocklistCategory::Restore,
        BlocklistCategory::SystemOperations,
        BlocklistCategory::DataFunctions,
    ];
}

impl fmt::Display for BlocklistCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BlocklistCategory::DataDefinition => "data_definition",
            BlocklistCategory::DataManipulation => "data_manipulation",
            BlocklistCategory::AccessControl => "access_control",
            BlocklistCategory::ControlFlow => "control_flow",
            BlocklistCategory::Restore => "restore",
            BlocklistCategory::SystemOperations => "system_operations",
            BlocklistCategory::DataFunctions => "data_functions",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QscProfile {
    /// Every character of the input is checked against the allowlist.
    Strict,
    /// Characters inside well-formed string literals are exempt, delimiters
    /// included; unterminated literals get no exemption.
    LiteralTolerant,
}

/// Allowlist, profile, and blocklist for the signature layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QscConfig {
    pub profile: QscProfile,
    #[serde(with = "crate::config::char_set")]
    pub allowed_chars: BTreeSet<char>,
    pub blocklist: BTreeMap<BlocklistCategory, BTreeSet<String>>,
}

pub fn default_allowed_chars() -> BTreeSet<char> {
    let mut set: BTreeSet<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    set.extend([
        ' ', '\t', '\n', '*', '-', '=', '_', '.', '[', ']', '+', '/', '&', '|', ';', '(', ')',
        ',',
    ]);
    set
}

pub fn default_blocklist() -> BTreeMap<BlocklistCategory, BTreeSet<String>> {
    let entry = |words: &[&str]| -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    };
    BTreeMap::from([
        (
            BlocklistCategory::DataDefinition,
            entry(&["create", "alter", "drop", "rename"]),
        ),
        (
            BlocklistCategory::DataManipulation,
            entry(&["update", "insert", "delete", "truncate", "values"]),
        ),
        (
            BlocklistCategory::AccessControl,
            entry(&["grant", "revoke", "privilege", "user", "password"]),
        ),
        (
            BlocklistCategory::ControlFlow,
            entry(&["exec", "declare", "procedure"]),
        ),
        (
            BlocklistCategory::Restore,
            entry(&["backup", "restore", "replace"]),
        ),
        (
            BlocklistCategory::SystemOperations,
            entry(&["shutdown", "version", "sleep"]),
        ),
        (
            BlocklistCategory::DataFunctions,
            entry(&["hex", "ascii", "group", "by", "union", "join"]),
        ),
    ])
}

impl Default for QscConfig {
    fn default() -> Self {
        Self {
            profile: QscProfile::Strict,
            allowed_chars: default_allowed_chars(),
            blocklist: default_blocklist(),
        }
    }
}

impl QscConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (category, keywords) in &self.blocklist {
            for kw in keywords {
                let ok = !kw.is_empty()
                    && kw.chars().all(|c| crate::shield::is_word_char(c) && !c.is_uppercase());
                if !ok {
                    return Err(ConfigError::Invalid(format!(
                        "qsc blocklist entry {kw:?} in {category} must be a lowercase single word"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharViolationKind {
    /// Character is not in the allowlist.
    Disallowed,
    /// Interior `;` followed by further content; only one statement is
    /// accepted per request.
    MultipleStatements,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharViolation {
    pub ch: char,
    pub offset: usize,
    pub kind: CharViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordViolation {
    pub keyword: String,
    pub category: BlocklistCategory,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureVerdict {
    pub pass: bool,
    pub char_violations: Vec<CharViolation>,
    pub keyword_violations: Vec<KeywordViolation>,
}

fn char_violations_for(
    sql: &str,
    tokens: &[SqlToken],
    warnings: &[LexWarning],
    cfg: &QscConfig,
) -> Vec<CharViolation> {
    let mut out = Vec::new();

    // Byte ranges exempt from the allowlist in the literal-tolerant profile.
    let exempt: Vec<(usize, usize)> = match cfg.profile {
        QscProfile::Strict => Vec::new(),
        QscProfile::LiteralTolerant => tokens
            .iter()
            .filter(|t| t.kind == SqlTokenKind::StringLiteral)
            .filter(|t| {
                !warnings
                    .iter()
                    .any(|w| matches!(w, LexWarning::UnterminatedString { offset } if *offset == t.offset))
            })
            .map(|t| (t.offset, t.offset + t.lexeme.len()))
            .collect(),
    };
    for (offset, c) in sql.char_indices() {
        if cfg.allowed_chars.contains(&c) {
            continue;
        }
        if exempt.iter().any(|&(s, e)| offset >= s && offset < e) {
            continue;
        }
        out.push(CharViolation {
            ch: c,
            offset,
            kind: CharViolationKind::Disallowed,
        });
    }

    // One statement per request: an interior separator is a violation.
    for (idx, token) in tokens.iter().enumerate() {
        if token.kind == SqlTokenKind::Symbol && token.lexeme == ";" {
            let has_content_after = tokens[idx + 1..]
                .iter()
                .any(|t| t.kind != SqlTokenKind::Whitespace);
            if has_content_after {
                out.push(CharViolation {
                    ch: ';',
                    offset: token.offset,
                    kind: CharViolationKind::MultipleStatements,
                });
            }
        }
    }

    out.sort_by_key(|v| (v.offset, v.kind == CharViolationKind::MultipleStatements));
    out
}

/// Reports every character the allowlist rejects, plus interior statement
/// separators. See [`QscProfile`] for how string literals are treated.
pub fn validate_characters(sql: &str, cfg: &QscConfig) -> Vec<CharViolation> {
    let (tokens, warnings) = tokenize_sql(sql);
    char_violations_for(sql, &tokens, &warnings, cfg)
}

/// Reports every `Word` token whose lowercased lexeme exactly equals a
/// blocklist entry. Comment and string literal contents are not matched, and
/// a word that merely contains a blocked keyword (`users`, `valuesx`) does
/// not match.
pub fn validate_keywords(tokens: &[SqlToken], cfg: &QscConfig) -> Vec<KeywordViolation> {
    let mut out = Vec::new();
    for token in tokens {
        if token.kind != SqlTokenKind::Word {
            continue;
        }
        let lowered = token.lexeme.to_lowercase();
        for (category, keywords) in &cfg.blocklist {
            if keywords.contains(&lowered) {
                out.push(KeywordViolation {
                    keyword: lowered.clone(),
                    category: *category,
                    offset: token.offset,
                });
            }
        }
    }
    out
}

/// Runs both sublayers; the SQL passes only when neither reports a violation.
pub fn qsc_validate(sql: &str, cfg: &QscConfig) -> SignatureVerdict {
    let (tokens, warnings) = tokenize_sql(sql);
    let char_violations = char_violations_for(sql, &tokens, &warnings, cfg);
    let keyword_violations = validate_keywords(&tokens, cfg);
    SignatureVerdict {
        pass: char_violations.is_empty() && keyword_violations.is_empty(),
        char_violations,
        keyword_violations,
    }
}
