//! Regex extraction of indemnity amounts from decision texts.
//!
//! Amount grammar (version [`GRAMMAR_VERSION`]): an optional `R$` followed by
//! an optional single whitespace character, then either digit groups of one
//! to three digits followed by `.`-separated groups of exactly three, or an
//! ungrouped run of digits; optionally `,` and exactly two decimal digits.
//!
//! Amounts without the `R$` marker are only taken when they sit within
//! [`KEYWORD_RADIUS`] characters of a scoring keyword and carry either
//! decimals or a trailing "reais".
//!
//! Offsets are indices into the text's sequence of Unicode scalar values.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

pub const GRAMMAR_VERSION: &str = "brl-grammar/1";

/// Proximity window for keywords, in characters.
pub const KEYWORD_RADIUS: usize = 40;
const CONTEXT_RADIUS: usize = 80;

/// Minimum score for an unambiguous pick.
pub const ACCEPTANCE_FLOOR: f64 = 0.5;
/// Top-two scores this close (or closer) are a tie.
pub const TIE_WINDOW: f64 = 0.1;

// Folded (lowercase, unaccented) spellings.
const AWARD_KEYWORDS: [&str; 6] = [
    "indenizacao",
    "danos morais",
    "dano moral",
    "arbitro",
    "fixo a",
    "quantia de",
];
const OTHER_KEYWORDS: [&str; 5] = ["custas", "honorarios", "juros", "multa", "salario"];

static TOKEN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(R\$\s?)?(\d{1,3}(?:\.\d{3})+|\d+)(?:,(\d{2}))?$").expect("token grammar")
});
static CANDIDATE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(R\$\s?)?\d(?:[\d.]*\d)?(?:,\d+)?").expect("candidate scanner"));

/// Parses one currency token such as `R$ 10.500,50` into minor units.
pub fn parse_brl_amount(token: &str) -> Result<Money> {
    let err = |reason: &str| Error::Parse {
        token: token.to_string(),
        reason: reason.to_string(),
    };
    let caps = TOKEN
        .captures(token.trim())
        .ok_or_else(|| err("does not match the BRL amount grammar"))?;
    let whole: i64 = caps[2]
        .chars()
        .filter(char::is_ascii_digit)
        .collect::<String>()
        .parse()
        .map_err(|_| err("integer part too large"))?;
    let cents: i64 = caps
        .get(3)
        .map_or(Ok(0), |c| c.as_str().parse())
        .map_err(|_| err("bad decimals"))?;
    whole
        .checked_mul(100)
        .and_then(|w| w.checked_add(cents))
        .map(Money)
        .ok_or_else(|| err("amount overflows"))
}

/// One amount found in a text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoneyMention {
    pub amount: Money,
    /// Half-open `[start, end)` in scalar-value offsets.
    pub span: (usize, usize),
    pub context_window: String,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionStatus {
    Found,
    Ambiguous,
    NoAmount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub chosen: Option<MoneyMention>,
    pub all_mentions: Vec<MoneyMention>,
    pub status: ExtractionStatus,
}

fn fold_char(c: char) -> char {
    let c = c.to_lowercase().next().unwrap_or(c);
    match c {
        'á' | 'à' | 'â' | 'ã' | 'ä' => 'a',
        'é' | 'è' | 'ê' | 'ë' => 'e',
        'í' | 'ì' | 'î' | 'ï' => 'i',
        'ó' | 'ò' | 'ô' | 'õ' | 'ö' => 'o',
        'ú' | 'ù' | 'û' | 'ü' => 'u',
        'ç' => 'c',
        'ñ' => 'n',
        other => other,
    }
}

#[derive(Clone, Copy)]
struct KeywordHit {
    start: usize,
    end: usize,
    award: bool,
}

/// Char-indexed view of a text.
struct Indexed<'a> {
    text: &'a str,
    /// byte offset of each char, plus the total length
    byte_of: Vec<usize>,
}

impl<'a> Indexed<'a> {
    fn new(text: &'a str) -> Self {
        let mut byte_of: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_of.push(text.len());
        Indexed { text, byte_of }
    }

    fn char_len(&self) -> usize {
        self.byte_of.len() - 1
    }

    fn char_at_byte(&self, byte: usize) -> usize {
        self.byte_of.partition_point(|&b| b < byte)
    }

    fn slice(&self, start: usize, end: usize) -> &'a str {
        &self.text[self.byte_of[start]..self.byte_of[end]]
    }
}

fn keyword_hits(idx: &Indexed<'_>) -> Vec<KeywordHit> {
    let folded: Vec<char> = idx.text.chars().map(fold_char).collect();
    let mut hits = Vec::new();
    for (list, award) in [(&AWARD_KEYWORDS[..], true), (&OTHER_KEYWORDS[..], false)] {
        for kw in list {
            let pat: Vec<char> = kw.chars().collect();
            if pat.len() > folded.len() {
                continue;
            }
            for start in 0..=folded.len() - pat.len() {
                if folded[start..start + pat.len()] == pat[..] {
                    hits.push(KeywordHit {
                        start,
                        end: start + pat.len(),
                        award,
                    });
                }
            }
        }
    }
    hits.sort_by_key(|h| (h.start, h.end));
    hits
}

const ABBREVIATIONS: [&str; 13] = [
    "art", "arts", "fl", "fls", "des", "dr", "dra", "min", "rel", "inc", "p", "n", "no",
];

/// Char offsets of sentence terminators: `.`, `;`, `!`, `?` followed by
/// whitespace or end of text (skipping abbreviations such as "art."), and
/// line breaks.
fn sentence_breaks(idx: &Indexed<'_>) -> Vec<usize> {
    let chars: Vec<char> = idx.text.chars().collect();
    let mut breaks = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        let next_blank = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        let is_break = match c {
            '\n' => true,
            ';' | '!' | '?' => next_blank,
            '.' if next_blank => {
                let word: String = chars[..i]
                    .iter()
                    .rev()
                    .take_while(|c| c.is_alphabetic())
                    .map(|&c| fold_char(c))
                    .collect();
                let word: String = word.chars().rev().collect();
                !ABBREVIATIONS.contains(&word.as_str())
            }
            _ => false,
        };
        if is_break {
            breaks.push(i);
        }
    }
    breaks
}

fn gap(a: (usize, usize), b: (usize, usize)) -> usize {
    b.0.saturating_sub(a.1).max(a.0.saturating_sub(b.1))
}

fn next_word(idx: &Indexed<'_>, end: usize) -> String {
    idx.slice(end, idx.char_len())
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphabetic())
        .map(fold_char)
        .collect()
}

fn follows_reais(idx: &Indexed<'_>, end: usize) -> bool {
    next_word(idx, end) == "reais"
}

/// "R$ 10 mil" is outside the grammar; reading it as R$ 10,00 would be wrong.
fn follows_scale_word(idx: &Indexed<'_>, end: usize) -> bool {
    matches!(
        next_word(idx, end).as_str(),
        "mil" | "milhao" | "milhoes" | "bilhao" | "bilhoes"
    )
}

/// Every amount in `text`, left to right, each scored for how likely it is
/// to be the awarded indemnity.
pub fn extract_amounts(text: &str) -> Vec<MoneyMention> {
    let idx = Indexed::new(text);
    let hits = keyword_hits(&idx);
    let breaks = sentence_breaks(&idx);
    let near_keyword = |span: (usize, usize)| {
        hits.iter()
            .any(|h| gap(span, (h.start, h.end)) <= KEYWORD_RADIUS)
    };

    let mut spans: Vec<((usize, usize), Money)> = Vec::new();
    for m in CANDIDATE.find_iter(text) {
        let token = m.as_str();
        let has_marker = token.starts_with("R$");
        let prev = text[..m.start()].chars().next_back();
        if prev.is_some_and(|c| {
            c.is_alphanumeric() || (!has_marker && matches!(c, '/' | '-' | '.' | ','))
        }) {
            continue;
        }
        let Ok(amount) = parse_brl_amount(token) else {
            continue;
        };
        let span = (idx.char_at_byte(m.start()), idx.char_at_byte(m.end()));
        if follows_scale_word(&idx, span.1) {
            continue;
        }
        if !has_marker {
            let next = text[m.end()..].chars().next();
            if next.is_some_and(|c| c.is_alphanumeric() || matches!(c, '%' | '/' | 'º' | 'ª' | '-'))
            {
                continue;
            }
            let has_decimals = token.contains(',');
            if !near_keyword(span) || !(has_decimals || follows_reais(&idx, span.1)) {
                continue;
            }
        }
        spans.push((span, amount));
    }

    spans
        .iter()
        .enumerate()
        .map(|(i, &(span, amount))| {
            // A keyword speaks for a mention only within the same sentence
            // and if no other mention sits between them.
            let reaches = |h: &KeywordHit| {
                let (lo, hi) = if h.end <= span.0 {
                    (h.end, span.0)
                } else {
                    (span.1, h.start)
                };
                gap(span, (h.start, h.end)) <= KEYWORD_RADIUS
                    && !breaks.iter().any(|&p| p >= lo && p < hi)
                    && !spans.iter().enumerate().any(|(j, &(other, _))| {
                        j != i
                            && if h.end <= span.0 {
                                other.0 >= h.end && other.1 <= span.0
                            } else {
                                other.0 >= span.1 && other.1 <= h.start
                            }
                    })
            };
            let award = hits.iter().any(|h| h.award && reaches(h));
            let other = hits.iter().any(|h| !h.award && reaches(h));
            let tenths = 5 + if award { 4 } else { 0 } - if other { 4 } else { 0 };
            let score = (tenths as f64 / 10.0).clamp(0.0, 1.0);

            let ctx_start = span.0.saturating_sub(CONTEXT_RADIUS);
            let ctx_end = (span.1 + CONTEXT_RADIUS).min(idx.char_len());
            MoneyMention {
                amount,
                span,
                context_window: idx.slice(ctx_start, ctx_end).to_string(),
                score,
            }
        })
        .collect()
}

/// Picks the indemnity among scored mentions, or declines.
///
/// Near-ties between mentions of the *same* amount are not ambiguous: the
/// same figure repeated in the headnote and the full text is a single award.
pub fn select_indemnity(mentions: &[MoneyMention]) -> ExtractionResult {
    let all_mentions = mentions.to_vec();
    let Some(top) = mentions
        .iter()
        .reduce(|best, m| if m.score > best.score { m } else { best })
    else {
        return ExtractionResult {
            chosen: None,
            all_mentions,
            status: ExtractionStatus::NoAmount,
        };
    };
    let rival = mentions
        .iter()
        .filter(|m| m.amount != top.amount)
        .map(|m| m.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied = top.score - rival <= TIE_WINDOW + 1e-12;
    if top.score < ACCEPTANCE_FLOOR || tied {
        return ExtractionResult {
            chosen: None,
            all_mentions,
            status: ExtractionStatus::Ambiguous,
        };
    }
    ExtractionResult {
        chosen: Some(top.clone()),
        all_mentions,
        status: ExtractionStatus::Found,
    }
}

pub fn extract(text: &str) -> ExtractionResult {
    select_indemnity(&extract_amounts(text))
}

/// Extraction over a decision's headnote and, when present, its full text.
pub fn extract_from_decision(ementa: &str, inteiro_teor: Option<&str>) -> ExtractionResult {
    match inteiro_teor {
        Some(full) if !full.is_empty() => extract(&format!("{ementa}\n\n{full}")),
        _ => extract(ementa),
    }
}
