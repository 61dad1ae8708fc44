//! Diachronic usage dataset: parsing, validation, serialization, and target
//! occurrence lookup.
//!
//! The dataset is a UTF-8 TSV whose header names the columns `word`,
//! `usage_id`, `period`, `text`, `start`, `end`, `sense_id` and `gloss` (any
//! order). Each row is either a usage (non-empty `usage_id`) or a sense
//! declaration (empty `usage_id`, non-empty `sense_id` and `gloss`), which
//! lets an inventory list senses that no usage is annotated with.
//!
//! Tabs, newlines and backslashes inside text fields are escaped as `\t`,
//! `\n`, `\r` and `\\`. Span offsets count Unicode scalar values of the
//! unescaped text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 8] = ["word", "usage_id", "period", "text", "start", "end", "sense_id", "gloss"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Period {
    Old,
    New,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::Old => "old",
            Period::New => "new",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "old" => Ok(Period::Old),
            "new" => Ok(Period::New),
            other => Err(format!("unknown period `{other}` (expected old|new)")),
        }
    }
}

/// Character span `[start, end)` of the target occurrence, in scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Usage {
    pub usage_id: String,
    pub word: String,
    pub period: Period,
    pub text: String,
    pub span: Option<Span>,
    pub gold_sense: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseEntry {
    pub sense_id: String,
    pub word: String,
    pub gloss: String,
    pub period_of_record: Period,
}

/// Everything known about one target lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWordRecord {
    pub word: String,
    pub old_usages: Vec<Usage>,
    pub new_usages: Vec<Usage>,
    /// Old sense inventory; its order is the tie-breaking order everywhere.
    pub old_senses: Vec<SenseEntry>,
    /// Glossed senses attested only among new usages.
    pub gained_senses: Vec<SenseEntry>,
}

/// `(n_old_usages, n_old_senses, n_new_usages)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordCounts {
    pub old_usages: usize,
    pub old_senses: usize,
    pub new_usages: usize,
}

impl TargetWordRecord {
    pub fn counts(&self) -> WordCounts {
        WordCounts {
            old_usages: self.old_usages.len(),
            old_senses: self.old_senses.len(),
            new_usages: self.new_usages.len(),
        }
    }

    pub fn old_sense_ids(&self) -> Vec<&str> {
        self.old_senses.iter().map(|s| s.sense_id.as_str()).collect()
    }

    pub fn is_old_sense(&self, sense_id: &str) -> bool {
        self.old_senses.iter().any(|s| s.sense_id == sense_id)
    }

    /// True when every new usage carries a gold sense.
    pub fn has_new_gold(&self) -> bool {
        !self.new_usages.is_empty() && self.new_usages.iter().all(|u| u.gold_sense.is_some())
    }
}

/// Parsed dataset, words sorted by lemma. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub words: Vec<TargetWordRecord>,
}

impl Dataset {
    pub fn word(&self, lemma: &str) -> Option<&TargetWordRecord> {
        self.words.binary_search_by(|w| w.word.as_str().cmp(lemma)).ok().map(|i| &self.words[i])
    }

    pub fn n_usages(&self) -> usize {
        self.words.iter().map(|w| w.old_usages.len() + w.new_usages.len()).sum()
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

#[derive(Default)]
struct WordBuilder {
    old_usages: Vec<Usage>,
    new_usages: Vec<Usage>,
    /// Sense ids in order of first mention, with the line that introduced them.
    sense_order: Vec<(String, usize)>,
    old_ids: HashSet<String>,
    glosses: HashMap<String, String>,
}

impl WordBuilder {
    fn mention(&mut self, sense_id: &str, line: usize) {
        if !self.sense_order.iter().any(|(s, _)| s == sense_id) {
            self.sense_order.push((sense_id.to_string(), line));
        }
    }

    fn record_gloss(&mut self, src: &str, line: usize, sense_id: &str, gloss: &str) -> Result<()> {
        if gloss.is_empty() {
            return Ok(());
        }
        match self.glosses.get(sense_id) {
            Some(existing) if existing != gloss => {
                Err(Error::parse(src, line, format!("conflicting gloss for sense `{sense_id}`")))
            }
            Some(_) => Ok(()),
            None => {
                self.glosses.insert(sense_id.to_string(), gloss.to_string());
                Ok(())
            }
        }
    }

    fn finish(self, src: &str, word: String) -> Result<TargetWordRecord> {
        let mut old_senses = Vec::new();
        let mut gained_senses = Vec::new();
        for (sense_id, line) in &self.sense_order {
            let gloss = self.glosses.get(sense_id);
            if self.old_ids.contains(sense_id) {
                let gloss = gloss.ok_or_else(|| {
                    Error::parse(src, *line, format!("old sense `{sense_id}` of `{word}` has no gloss"))
                })?;
                old_senses.push(SenseEntry {
                    sense_id: sense_id.clone(),
                    word: word.clone(),
                    gloss: gloss.clone(),
                    period_of_record: Period::Old,
                });
            } else if let Some(gloss) = gloss {
                gained_senses.push(SenseEntry {
                    sense_id: sense_id.clone(),
                    word: word.clone(),
                    gloss: gloss.clone(),
                    period_of_record: Period::New,
                });
            }
        }
        Ok(TargetWordRecord {
            word,
            old_usages: self.old_usages,
            new_usages: self.new_usages,
            old_senses,
            gained_senses,
        })
    }
}

fn parse_offset(src: &str, line: usize, name: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| Error::parse(src, line, format!("malformed {name} offset `{raw}`")))
}

/// Parse a dataset TSV. `source_name` only labels error messages.
pub fn parse_dataset<R: BufRead>(reader: R, source_name: &str) -> Result<Dataset> {
    let src = source_name;
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::parse(src, 1, "empty dataset: missing header")),
        }
    };
    let header_cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let mut col = [0usize; 8];
    for (slot, name) in col.iter_mut().zip(COLUMNS) {
        *slot = header_cols
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::parse(src, 1, format!("header lacks column `{name}`")))?;
    }
    let width = header_cols.len();

    let mut builders: BTreeMap<String, WordBuilder> = BTreeMap::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(Error::parse(src, lineno, format!("expected {width} fields, found {}", fields.len())));
        }
        let get = |i: usize| fields[col[i]];
        let word = get(0);
        if word.is_empty() {
            return Err(Error::parse(src, lineno, "empty word"));
        }
        let usage_id = get(1);
        let period: Period = get(2).parse().map_err(|e: String| Error::parse(src, lineno, e))?;
        let text = unescape_field(get(3));
        let (start, end) = (get(4), get(5));
        let sense_id = unescape_field(get(6));
        let gloss = unescape_field(get(7));
        let builder = builders.entry(word.to_string()).or_default();

        if usage_id.is_empty() {
            if sense_id.is_empty() || gloss.is_empty() {
                return Err(Error::parse(src, lineno, "sense declaration rows need both sense_id and gloss"));
            }
            if !text.is_empty() || !start.is_empty() || !end.is_empty() {
                return Err(Error::parse(src, lineno, "sense declaration rows carry no text or span"));
            }
            builder.mention(&sense_id, lineno);
            builder.record_gloss(src, lineno, &sense_id, &gloss)?;
            if period == Period::Old {
                builder.old_ids.insert(sense_id);
            }
            continue;
        }

        if let Some(first) = seen_ids.get(usage_id) {
            return Err(Error::parse(src, lineno, format!("duplicate usage_id `{usage_id}` (first on line {first})")));
        }
        seen_ids.insert(usage_id.to_string(), lineno);

        let span = match (start.is_empty(), end.is_empty()) {
            (true, true) => None,
            (false, false) => {
                let s = parse_offset(src, lineno, "start", start)?;
                let e = parse_offset(src, lineno, "end", end)?;
                let len = text.chars().count();
                if s >= e || e > len {
                    return Err(Error::parse(
                        src,
                        lineno,
                        format!("span ({s},{e}) out of bounds for text of length {len}"),
                    ));
                }
                Some(Span { start: s, end: e })
            }
            _ => return Err(Error::parse(src, lineno, "start and end must both be given or both be empty")),
        };

        if period == Period::Old && sense_id.is_empty() {
            return Err(Error::parse(src, lineno, format!("old usage `{usage_id}` has empty sense_id")));
        }
        if !sense_id.is_empty() {
            builder.mention(&sense_id, lineno);
            builder.record_gloss(src, lineno, &sense_id, &gloss)?;
            if period == Period::Old {
                builder.old_ids.insert(sense_id.clone());
            }
        }
        let usage = Usage {
            usage_id: usage_id.to_string(),
            word: word.to_string(),
            period,
            text,
            span,
            gold_sense: (!sense_id.is_empty()).then_some(sense_id),
        };
        match period {
            Period::Old => builder.old_usages.push(usage),
            Period::New => builder.new_usages.push(usage),
        }
    }

    let words = builders.into_iter().map(|(word, b)| b.finish(src, word)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { words })
}

pub fn parse_dataset_str(s: &str) -> Result<Dataset> {
    parse_dataset(s.as_bytes(), "<string>")
}

/// Serialize in the canonical layout: per word, sense declarations first,
/// then old usages, then new usages.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "{}", COLUMNS.join("\t"))?;
    for word in &dataset.words {
        let w = &word.word;
        for sense in word.old_senses.iter().chain(&word.gained_senses) {
            writeln!(
                out,
                "{w}\t\t{}\t\t\t\t{}\t{}",
                sense.period_of_record,
                escape_field(&sense.sense_id),
                escape_field(&sense.gloss)
            )?;
        }
        for usage in word.old_usages.iter().chain(&word.new_usages) {
            let (start, end) = match usage.span {
                Some(span) => (span.start.to_string(), span.end.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{w}\t{}\t{}\t{}\t{start}\t{end}\t{}\t",
                usage.usage_id,
                usage.period,
                escape_field(&usage.text),
                escape_field(usage.gold_sense.as_deref().unwrap_or(""))
            )?;
        }
    }
    Ok(())
}

pub fn dataset_to_string(dataset: &Dataset) -> String {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("dataset serialization is UTF-8")
}

/// Surface forms of one lemma. Always contains the lemma itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordFormList {
    pub word: String,
    pub forms: Vec<String>,
}

impl WordFormList {
    pub fn new(word: impl Into<String>, forms: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let word = word.into();
        let mut list: Vec<String> = Vec::new();
        for f in forms {
            let f = f.into();
            if !f.is_empty() && !list.contains(&f) {
                list.push(f);
            }
        }
        if !list.contains(&word) {
            list.insert(0, word.clone());
        }
        WordFormList { word, forms: list }
    }
}

/// Parse `lemma<TAB>form1,form2,...` lines.
pub fn parse_word_forms<R: BufRead>(reader: R, source_name: &str) -> Result<BTreeMap<String, WordFormList>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (lemma, forms) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, lineno, "expected `lemma<TAB>form,form,...`"))?;
        if lemma.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty lemma"));
        }
        let list = WordFormList::new(lemma, forms.split(',').map(str::trim));
        if out.insert(lemma.to_string(), list).is_some() {
            return Err(Error::parse(source_name, lineno, format!("duplicate lemma `{lemma}`")));
        }
    }
    Ok(out)
}

fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn is_boundary(chars: &[char], pos: usize) -> bool {
    let before = pos.checked_sub(1).map(|i| chars[i].is_alphabetic()).unwrap_or(false);
    let after = chars.get(pos).map(|c| c.is_alphabetic()).unwrap_or(false);
    before != after
}

/// All whole-token, case-insensitive occurrences of any form, as
/// non-overlapping spans taken leftmost-longest.
pub fn find_occurrences(text: &str, forms: &WordFormList) -> Vec<Span> {
    let chars: Vec<char> = text.chars().map(fold_char).collect();
    let folded: Vec<Vec<char>> =
        forms.forms.iter().map(|f| f.chars().map(fold_char).collect::<Vec<_>>()).filter(|f| !f.is_empty()).collect();
    let mut spans = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let longest = folded
            .iter()
            .filter(|f| {
                let end = pos + f.len();
                end <= chars.len() && chars[pos..end] == f[..] && is_boundary(&chars, pos) && is_boundary(&chars, end)
            })
            .map(|f| f.len())
            .max();
        match longest {
            Some(len) => {
                spans.push(Span { start: pos, end: pos + len });
                pos += len;
            }
            None => pos += 1,
        }
    }
    spans
}

/// Pick the occurrence of the target word to encode: the single one; of two,
/// the one with the larger shorter-side context (earlier on ties); of more,
/// the second to last.
pub fn find_target_position(text: &str, forms: &WordFormList) -> Option<Span> {
    let occ = find_occurrences(text, forms);
    match occ.len() {
        0 => None,
        1 => Some(occ[0]),
        2 => {
            let len = text.chars().count();
            let margin = |s: &Span| s.start.min(len - s.end);
            if margin(&occ[1]) > margin(&occ[0]) {
                Some(occ[1])
            } else {
                Some(occ[0])
            }
        }
        n => Some(occ[n - 2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "word\tusage_id\tperiod\ttext\tstart\tend\tsense_id\tgloss\n";

    fn forms(word: &str, fs: &[&str]) -> WordFormList {
        WordFormList::new(word, fs.iter().copied())
    }

    #[test]
    fn minimal_dataset() {
        let tsv =
            format!("{HEADER}cat\tu1\told\tThe cat sat\t4\t7\tS1\ta small feline\ncat\tu2\tnew\tcats rule\t\t\t\t\n");
        let ds = parse_dataset_str(&tsv).unwrap();
        assert_eq!(ds.words.len(), 1);
        let w = &ds.words[0];
        assert_eq!(w.counts(), WordCounts { old_usages: 1, old_senses: 1, new_usages: 1 });
        assert_eq!(w.old_usages[0].span, Some(Span { start: 4, end: 7 }));
        assert_eq!(w.new_usages[0].span, None);
        assert_eq!(w.old_senses[0].gloss, "a small feline");
    }

    #[test]
    fn old_usage_without_sense_is_rejected_with_line() {
        let tsv = format!("{HEADER}cat\tu1\told\tThe cat\t\t\t\t\n");
        let err = parse_dataset_str(&tsv).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("empty sense_id"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gold_on_new_usage_passes_through() {
        let tsv = format!("{HEADER}cat\tu1\told\ta cat\t\t\tS1\tfeline\ncat\tu2\tnew\ta cat\t\t\tS9\t\n");
        let ds = parse_dataset_str(&tsv).unwrap();
        let w = &ds.words[0];
        assert_eq!(w.new_usages[0].gold_sense.as_deref(), Some("S9"));
        assert!(!w.is_old_sense("S9"));
        assert!(w.has_new_gold());
    }

    #[test]
    fn structural_errors() {
        let dup = format!("{HEADER}a\tu1\tnew\tx\t\t\t\t\na\tu1\tnew\ty\t\t\t\t\n");
        assert!(matches!(parse_dataset_str(&dup), Err(Error::Parse { line: 3, .. })));
        let bad_int = format!("{HEADER}a\tu1\tnew\txyz\t0\tq\t\t\n");
        assert!(matches!(parse_dataset_str(&bad_int), Err(Error::Parse { line: 2, .. })));
        let oob = format!("{HEADER}a\tu1\tnew\txyz\t1\t4\t\t\n");
        assert!(matches!(parse_dataset_str(&oob), Err(Error::Parse { line: 2, .. })));
        let empty_span = format!("{HEADER}a\tu1\tnew\txyz\t2\t2\t\t\n");
        assert!(parse_dataset_str(&empty_span).is_err());
        let no_gloss = format!("{HEADER}a\tu1\told\txyz\t\t\tS1\t\n");
        assert!(parse_dataset_str(&no_gloss).is_err());
        let conflict = format!("{HEADER}a\tu1\told\tx\t\t\tS1\tg1\na\tu2\told\ty\t\t\tS1\tg2\n");
        assert!(parse_dataset_str(&conflict).is_err());
        assert!(parse_dataset_str("word\tusage_id\n").is_err());
    }

    #[test]
    fn sense_declarations_extend_the_inventory() {
        let tsv = format!(
            "{HEADER}a\t\told\t\t\t\tS0\tunused sense\na\tu1\told\tx\t\t\tS1\tg1\na\t\tnew\t\t\t\tN1\tgained\n"
        );
        let ds = parse_dataset_str(&tsv).unwrap();
        let w = &ds.words[0];
        assert_eq!(w.old_sense_ids(), vec!["S0", "S1"]);
        assert_eq!(w.gained_senses.len(), 1);
    }

    #[test]
    fn spans_count_scalar_values() {
        let tsv = format!("{HEADER}kissa\tu1\tnew\tÄiti kissa\t5\t10\t\t\n");
        let ds = parse_dataset_str(&tsv).unwrap();
        assert_eq!(ds.words[0].new_usages[0].span, Some(Span { start: 5, end: 10 }));
    }

    #[test]
    fn escapes_round_trip() {
        let raw = "a\tb\\c\nd";
        assert_eq!(unescape_field(&escape_field(raw)), raw);
    }

    #[test]
    fn single_occurrence() {
        let f = forms("cat", &["cats"]);
        assert_eq!(find_target_position("The cat sat", &f), Some(Span { start: 4, end: 7 }));
    }

    #[test]
    fn two_occurrences_pick_larger_margin() {
        let f = forms("cat", &[]);
        // occ1 (0,3): min(0, 21) = 0; occ2 (12,15): min(12, 9) = 9
        assert_eq!(find_target_position("cat and the cat sat here", &f), Some(Span { start: 12, end: 15 }));
    }

    #[test]
    fn two_occurrences_tie_takes_earlier() {
        let f = forms("ab", &[]);
        // "x ab ab x": occ1 (2,4) margin min(2,5)=2; occ2 (5,7) margin min(5,2)=2
        assert_eq!(find_target_position("x ab ab x", &f), Some(Span { start: 2, end: 4 }));
    }

    #[test]
    fn three_occurrences_take_second_to_last() {
        let f = forms("cat", &["cats"]);
        let text = "cat, Cats and more CATS";
        assert_eq!(find_target_position(text, &f), Some(Span { start: 5, end: 9 }));
    }

    #[test]
    fn word_boundaries_and_absence() {
        let f = forms("cat", &[]);
        assert_eq!(find_target_position("concatenate scatter", &f), None);
        assert_eq!(find_target_position("", &f), None);
        let f = forms("кот", &["кота"]);
        assert_eq!(find_target_position("Я видел Кота.", &f), Some(Span { start: 8, end: 12 }));
    }

    #[test]
    fn word_forms_file() {
        let parsed = parse_word_forms("cat\tcats, Cat\ndog\tdogs\n".as_bytes(), "forms").unwrap();
        assert_eq!(parsed["cat"].forms, vec!["cat", "cats", "Cat"]);
        assert_eq!(parsed["dog"].forms, vec!["dog", "dogs"]);
        assert!(parse_word_forms("cat\n".as_bytes(), "forms").is_err());
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("cat".to_string()),
                Just("Cats".to_string()),
                Just("dog".to_string()),
                Just("scat".to_string()),
                Just("кот".to_string()),
            ],
            0..8,
        )
        .prop_flat_map(|words| {
            let n = words.len();
            (Just(words), proptest::collection::vec(prop_oneof![Just(" "), Just(", "), Just("\t"), Just("-")], n))
        })
        .prop_map(|(words, seps)| words.iter().zip(seps).map(|(w, s)| format!("{w}{s}")).collect::<String>())
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let word = (
            proptest::collection::vec((arb_text(), 0usize..2, any::<bool>()), 1..4),
            proptest::collection::vec((arb_text(), proptest::option::of(0usize..4), any::<bool>()), 0..4),
            1usize..3,
        );
        proptest::collection::vec(word, 1..4).prop_map(|words| {
            let mut ds = Dataset::default();
            let mut next_id = 0;
            for (wi, (olds, news, n_senses)) in words.into_iter().enumerate() {
                let lemma = format!("w{wi}");
                let mk_span = |t: &str, with: bool| {
                    let n = t.chars().count();
                    (with && n > 0).then_some(Span { start: 0, end: n })
                };
                let old_senses: Vec<SenseEntry> = (0..n_senses)
                    .map(|s| SenseEntry {
                        sense_id: format!("{lemma}_s{s}"),
                        word: lemma.clone(),
                        gloss: format!("gloss\t{s}\\x"),
                        period_of_record: Period::Old,
                    })
                    .collect();
                let mut rec = TargetWordRecord {
                    word: lemma.clone(),
                    old_usages: vec![],
                    new_usages: vec![],
                    old_senses,
                    gained_senses: vec![],
                };
                for (text, s, with_span) in olds {
                    next_id += 1;
                    rec.old_usages.push(Usage {
                        usage_id: format!("u{next_id}"),
                        word: lemma.clone(),
                        period: Period::Old,
                        span: mk_span(&text, with_span),
                        text,
                        gold_sense: Some(format!("{lemma}_s{}", s % n_senses)),
                    });
                }
                for (text, gold, with_span) in news {
                    next_id += 1;
                    rec.new_usages.push(Usage {
                        usage_id: format!("u{next_id}"),
                        word: lemma.clone(),
                        period: Period::New,
                        span: mk_span(&text, with_span),
                        text,
                        gold_sense: gold.map(|g| format!("{lemma}_s{g}")),
                    });
                }
                ds.words.push(rec);
            }
            ds
        })
    }

    proptest! {
        #[test]
        fn dataset_round_trips(ds in arb_dataset()) {
            let first = parse_dataset_str(&dataset_to_string(&ds)).unwrap();
            prop_assert_eq!(&first, &ds);
            let second = parse_dataset_str(&dataset_to_string(&first)).unwrap();
            prop_assert_eq!(&first, &second);
        }

        #[test]
        fn chosen_span_is_a_form(text in arb_text()) {
            let f = forms("cat", &["cats", "кот"]);
            if let Some(span) = find_target_position(&text, &f) {
                let sub: String = text.chars().skip(span.start).take(span.end - span.start).collect();
                let lowered: Vec<String> = f.forms.iter().map(|x| x.to_lowercase()).collect();
                prop_assert!(lowered.contains(&sub.to_lowercase()));
            }
        }

        #[test]
        fn two_occurrence_rule_maximizes_margin(text in arb_text()) {
            let f = forms("cat", &["cats"]);
            let occ = find_occurrences(&text, &f);
            if occ.len() == 2 {
                let len = text.chars().count();
                let margin = |s: &Span| s.start.min(len - s.end);
                let chosen = find_target_position(&text, &f).unwrap();
                let other = if chosen == occ[0] { occ[1] } else { occ[0] };
                prop_assert!(margin(&chosen) >= margin(&other));
            }
        }
    }
}
