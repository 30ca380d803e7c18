//! Deliberately simple reference scanners, kept as an independent path for
//! cross-checking the shield and signature layers in the test suites.
//!
//! These implementations trade speed for obviousness: they re-scan the input
//! from every position instead of tokenizing. They share only the documented
//! matching rules with the production code, not its structure; equivalence
//! between the two paths is asserted over random inputs and full corpora.

use crate::shield::{
    is_word_char, normalize_prompt, IssConfig, PayloadPattern, Trigger, TriggerKind,
};
use crate::signature::{KeywordViolation, QscConfig};

/// Brute-force shield scan: checks every config entry against every position
/// of the normalized prompt.
pub fn iss_triggers(text: &str, cfg: &IssConfig) -> Vec<Trigger> {
    let normalized = normalize_prompt(text);
    let chars: Vec<(usize, char)> = normalized.char_indices().collect();
    let mut triggers = Vec::new();

    for idx in 0..chars.len() {
        let (offset, c) = chars[idx];
        let rest = &normalized[offset..];

        for kw in &cfg.high_risk_keywords {
            if rest.starts_with(kw.as_str()) {
                let before_ok = idx == 0 || !is_word_char(chars[idx - 1].1);
                let after = rest[kw.len()..].chars().next();
                let after_ok = after.map_or(true, |c| !is_word_char(c));
                if before_ok && after_ok {
                    triggers.push(Trigger {
                        kind: TriggerKind::Keyword,
                        matched_text: kw.clone(),
                        offset,
                    });
                }
            }
        }
        for pattern in &cfg.high_risk_patterns {
            match pattern {
                PayloadPattern::Literal { text } => {
                    if rest.starts_with(text.as_str()) {
                        triggers.push(Trigger {
                            kind: TriggerKind::Pattern,
                            matched_text: text.clone(),
                            offset,
                        });
                    }
                }
                PayloadPattern::Tautology => {
                    if let Some(t) = tautology_at(&normalized, &chars, idx) {
                        triggers.push(t);
                    }
                }
            }
        }
        if cfg.low_risk_chars.contains(&c) {
            triggers.push(Trigger {
                kind: TriggerKind::Character,
                matched_text: c.to_string(),
                offset,
            });
        }
        for seq in &cfg.low_risk_sequences {
            if rest.starts_with(seq.as_str()) {
                triggers.push(Trigger {
                    kind: TriggerKind::Sequence,
                    matched_text: seq.clone(),
                    offset,
                });
            }
        }
    }

    triggers.sort_by(|a, b| {
        (a.offset, a.kind, &a.matched_text).cmp(&(b.offset, b.kind, &b.matched_text))
    });
    triggers
}

fn tautology_at(text: &str, chars: &[(usize, char)], idx: usize) -> Option<Trigger> {
    let operand = |c: char| is_word_char(c) || c == '\'' || c == '"';
    if chars[idx].1 != '=' {
        return None;
    }
    if idx > 0 && matches!(chars[idx - 1].1, '<' | '>' | '!' | '=') {
        return None;
    }
    if chars.get(idx + 1).map(|&(_, c)| c) == Some('=') {
        return None;
    }

    let left_side: Vec<(usize, char)> = chars[..idx]
        .iter()
        .rev()
        .skip_while(|&&(_, c)| c == ' ')
        .take_while(|&&(_, c)| operand(c))
        .copied()
        .collect();
    let right_side: Vec<(usize, char)> = chars[idx + 1..]
        .iter()
        .skip_while(|&&(_, c)| c == ' ')
        .take_while(|&&(_, c)| operand(c))
        .copied()
        .collect();
    if left_side.is_empty() || right_side.is_empty() {
        return None;
    }

    let strip = |side: &[(usize, char)]| -> String {
        side.iter()
            .map(|&(_, c)| c)
            .filter(|&c| c != '\'' && c != '"')
            .collect()
    };
    let left: String = strip(&left_side).chars().rev().collect();
    let right = strip(&right_side);
    if left.is_empty() || right.is_empty() || left != right {
        return None;
    }

    let start = left_side.last().map(|&(b, _)| b).expect("non-empty");
    let &(last_byte, last_char) = right_side.last().expect("non-empty");
    let end = last_byte + last_char.len_utf8();
    Some(Trigger {
        kind: TriggerKind::Pattern,
        matched_text: text[start..end].to_string(),
        offset: start,
    })
}

/// Masks string literals and comments with spaces, preserving every other
/// character and its byte offset.
fn mask_literals_and_comments(sql: &str) -> Vec<(usize, char)> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let n = chars.len();
    let mut out: Vec<(usize, char)> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let (_, c) = chars[i];
        if c == '-' && i + 1 < n && chars[i + 1].1 == '-' {
            while i < n && chars[i].1 != '\n' {
                out.push((chars[i].0, ' '));
                i += 1;
            }
        } else if c == '/' && i + 1 < n && chars[i + 1].1 == '*' {
            out.push((chars[i].0, ' '));
            out.push((chars[i + 1].0, ' '));
            i += 2;
            while i < n {
                if chars[i].1 == '*' && i + 1 < n && chars[i + 1].1 == '/' {
                    out.push((chars[i].0, ' '));
                    out.push((chars[i + 1].0, ' '));
                    i += 2;
                    break;
                }
                out.push((chars[i].0, ' '));
                i += 1;
            }
        } else if c == '\'' {
            out.push((chars[i].0, ' '));
            i += 1;
            while i < n {
                if chars[i].1 == '\'' {
                    if i + 1 < n && chars[i + 1].1 == '\'' {
                        out.push((chars[i].0, ' '));
                        out.push((chars[i + 1].0, ' '));
                        i += 2;
                    } else {
                        out.push((chars[i].0, ' '));
                        i += 1;
                        break;
                    }
                } else {
                    out.push((chars[i].0, ' '));
                    i += 1;
                }
            }
        } else {
            out.push((chars[i].0, c));
            i += 1;
        }
    }
    out
}

/// Brute-force keyword scan: masks literals and comments, splits what is left
/// on non-word characters, and compares each piece against the blocklist.
pub fn qsc_keyword_violations(sql: &str, cfg: &QscConfig) -> Vec<KeywordViolation> {
    let masked = mask_literals_and_comments(sql);
    let mut pieces: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (offset, c) in masked {
        if is_word_char(c) {
            match &mut current {
                Some((_, piece)) => piece.push(c),
                None => current = Some((offset, c.to_string())),
            }
        } else if let Some(piece) = current.take() {
            pieces.push(piece);
        }
    }
    if let Some(piece) = current.take() {
        pieces.push(piece);
    }

    let mut out = Vec::new();
    for (offset, piece) in pieces {
        // Pieces led by a digit lex as numbers, which the keyword sublayer
        // never matches; a purely alphabetic blocklist cannot match them
        // either, so comparing the piece as-is keeps both paths aligned.
        let lowered = piece.to_lowercase();
        for (category, keywords) in &cfg.blocklist {
            if keywords.contains(&lowered) {
                out.push(KeywordViolation {
                    keyword: lowered.clone(),
                    category: *category,
                    offset,
                });
            }
        }
    }
    out
}
