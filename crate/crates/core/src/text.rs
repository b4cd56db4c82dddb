//! String normalization and edit distance used by label extraction and
//! fuzzy reward matching.

/// Lowercases and collapses every whitespace run to a single space.
pub fn fold_whitespace(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalization applied before similarity scoring: case-fold, drop
/// punctuation, collapse whitespace.
pub fn normalize_for_similarity(s: &str) -> String {
    let stripped: String = s
        .chars()
        .map(|c| if c.is_ascii_punctuation() || is_unicode_punct(c) { ' ' } else { c })
        .collect();
    fold_whitespace(&stripped)
}

/// Normalization for pattern labels and free-text answers: case-fold,
/// collapse whitespace, strip trailing punctuation.
pub fn normalize_label(s: &str) -> String {
    let folded = fold_whitespace(s);
    folded
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || is_unicode_punct(c))
        .trim_end()
        .to_string()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
            | '\u{3002}' | '\u{FF0C}' | '\u{FF1B}' | '\u{FF1A}'
    )
}

/// Splits a list-valued judgement into items. Semicolons separate items;
/// commas are used only when no semicolon is present.
pub fn split_items(s: &str) -> Vec<&str> {
    let sep = if s.contains(';') { ';' } else { ',' };
    s.split(sep)
        .map(str::trim)
        .filter(|item| !item.is_empty())
        .collect()
}

/// Levenshtein distance over Unicode scalar values (unit costs).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
