//! Tweet normalization.
//!
//! [`pipeline`] runs the stages in a fixed order:
//!
//! 1. punctuation (English and Arabic) to spaces, configured emoticons excepted
//! 2. emoji and emoticons to textual tokens, unmapped emoji dropped
//! 3. Latin letters and digits to spaces
//! 4. Arabic letter normalization, diacritics and tatweel removed
//! 5. dashes, backslashes and any other symbol outside the Arabic alphabet to spaces
//! 6. character runs collapsed to a single occurrence
//! 7. prefix rewrite rules
//! 8. single-character tokens dropped, whitespace collapsed and trimmed
//!
//! The output alphabet is Arabic letters, `_` and single spaces.

use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_EMOJI: &str = include_str!("../data/emoji.tsv");
const BUILTIN_EMOTICONS: &str = include_str!("../data/emoticons.tsv");

/// Leading conjunction `و` split off words of four or more letters.
pub const DEFAULT_PREFIX_PATTERN: &str = r"(^|\s)و([^\s_]{3,})\b";
pub const DEFAULT_PREFIX_REPLACEMENT: &str = "${1}و ${2}";

/// Symbol to token dictionary with longest-match lookup.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolMap {
    /// Sorted by descending key length so the first hit is the longest.
    entries: Vec<(String, String)>,
}

impl SymbolMap {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut entries: Vec<(String, String)> = entries.into_iter().collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        entries.dedup_by(|a, b| a.0 == b.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn longest_match(&self, s: &str) -> Option<(&str, &str)> {
        self.entries
            .iter()
            .find(|(k, _)| s.starts_with(k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Parses a two-column `symbol<TAB>token` file. Blank lines are skipped.
/// Tokens must consist of Arabic letters and `_`.
pub fn parse_symbol_map(text: &str) -> Result<SymbolMap> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (symbol, token) = line.split_once('\t').ok_or(Error::Parse {
            line: line_no,
            message: "expected `symbol<TAB>token`".into(),
        })?;
        if symbol.is_empty() || token.contains('\t') {
            return Err(Error::Parse {
                line: line_no,
                message: "expected exactly two non-empty fields".into(),
            });
        }
        if token.chars().count() < 2 || !token.chars().all(|c| is_arabic_letter(c) || c == '_') {
            return Err(Error::Validation {
                line: line_no,
                message: format!("token `{token}` must be two or more Arabic letters or `_`"),
            });
        }
        entries.push((symbol.to_string(), token.to_string()));
    }
    Ok(SymbolMap::new(entries))
}

pub fn load_symbol_map(path: impl AsRef<Path>) -> Result<SymbolMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_symbol_map(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PrefixRuleSpec {
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone)]
pub struct PrefixRule {
    spec: PrefixRuleSpec,
    regex: Regex,
}

impl PrefixRule {
    pub fn new(pattern: &str, replacement: &str) -> Result<Self> {
        let regex = Regex::new(pattern)
            .map_err(|e| Error::config(format!("prefix rule `{pattern}`: {e}")))?;
        Ok(Self {
            spec: PrefixRuleSpec {
                pattern: pattern.to_string(),
                replacement: replacement.to_string(),
            },
            regex,
        })
    }

    pub fn spec(&self) -> &PrefixRuleSpec {
        &self.spec
    }

    pub fn apply(&self, s: &str) -> String {
        self.regex
            .replace_all(s, self.spec.replacement.as_str())
            .into_owned()
    }
}

impl PartialEq for PrefixRule {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

/// Serializable form of [`PreprocessConfig`], with maps inlined.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PreprocessSettings {
    pub emoji: Vec<(String, String)>,
    pub emoticons: Vec<(String, String)>,
    pub prefix_rules: Vec<PrefixRuleSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub emoji_map: SymbolMap,
    pub emoticon_map: SymbolMap,
    pub prefix_rules: Vec<PrefixRule>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            emoji_map: parse_symbol_map(BUILTIN_EMOJI).expect("built-in emoji map"),
            emoticon_map: parse_symbol_map(BUILTIN_EMOTICONS).expect("built-in emoticon map"),
            prefix_rules: vec![
                PrefixRule::new(DEFAULT_PREFIX_PATTERN, DEFAULT_PREFIX_REPLACEMENT)
                    .expect("default prefix rule"),
            ],
        }
    }
}

impl PreprocessConfig {
    pub fn settings(&self) -> PreprocessSettings {
        PreprocessSettings {
            emoji: self.emoji_map.entries().to_vec(),
            emoticons: self.emoticon_map.entries().to_vec(),
            prefix_rules: self.prefix_rules.iter().map(|r| r.spec().clone()).collect(),
        }
    }

    pub fn from_settings(s: &PreprocessSettings) -> Result<Self> {
        Ok(Self {
            emoji_map: SymbolMap::new(s.emoji.iter().cloned()),
            emoticon_map: SymbolMap::new(s.emoticons.iter().cloned()),
            prefix_rules: s
                .prefix_rules
                .iter()
                .map(|r| PrefixRule::new(&r.pattern, &r.replacement))
                .collect::<Result<_>>()?,
        })
    }
}

/// Normalized tweet text: Arabic letters, `_` and single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|t| !t.is_empty())
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Returned by [`pipeline`] when nothing survives cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyText;

impl fmt::Display for EmptyText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("text is empty after preprocessing")
    }
}

impl std::error::Error for EmptyText {}

pub fn is_arabic_letter(c: char) -> bool {
    matches!(c,
        '\u{0621}'..='\u{063A}'
        | '\u{0641}'..='\u{064A}'
        | '\u{0671}'..='\u{06D3}'
        | '\u{06D5}'
        | '\u{06EE}'..='\u{06EF}'
        | '\u{06FA}'..='\u{06FC}'
        | '\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08C8}')
}

pub fn is_arabic_diacritic(c: char) -> bool {
    matches!(c,
        '\u{0610}'..='\u{061A}'
        | '\u{064B}'..='\u{065F}'
        | '\u{0670}'
        | '\u{06D6}'..='\u{06DC}'
        | '\u{06DF}'..='\u{06E8}'
        | '\u{06EA}'..='\u{06ED}'
        | '\u{08CA}'..='\u{08FF}')
}

const TATWEEL: char = '\u{0640}';

/// `_` is excluded: it joins the words of textual emoji tokens.
pub fn is_punctuation(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '_')
        || matches!(c,
            '\u{060C}' // ،
            | '\u{060D}'
            | '\u{061B}' // ؛
            | '\u{061E}'
            | '\u{061F}' // ؟
            | '\u{066A}'..='\u{066D}'
            | '\u{06D4}'
            | '\u{00A1}' | '\u{00BF}' | '\u{00AB}' | '\u{00BB}'
            | '\u{2018}'..='\u{201F}'
            | '\u{2026}'
            | '\u{2039}' | '\u{203A}'
            | '\u{FD3E}' | '\u{FD3F}')
}

fn is_emoji(c: char) -> bool {
    matches!(c,
        '\u{00A9}' | '\u{00AE}' | '\u{203C}' | '\u{2049}' | '\u{2122}' | '\u{2139}'
        | '\u{200D}'
        | '\u{20E3}'
        | '\u{2190}'..='\u{21FF}'
        | '\u{2300}'..='\u{23FF}'
        | '\u{24C2}'
        | '\u{25A0}'..='\u{25FF}'
        | '\u{2600}'..='\u{27BF}'
        | '\u{2900}'..='\u{297F}'
        | '\u{2B00}'..='\u{2BFF}'
        | '\u{3030}' | '\u{303D}' | '\u{3297}' | '\u{3299}'
        | '\u{FE0E}' | '\u{FE0F}'
        | '\u{1F000}'..='\u{1FAFF}'
        | '\u{E0020}'..='\u{E007F}')
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || (c.is_alphabetic()
            && matches!(c,
                '\u{00C0}'..='\u{024F}'
                | '\u{1E00}'..='\u{1EFF}'
                | '\u{FF21}'..='\u{FF3A}'
                | '\u{FF41}'..='\u{FF5A}'))
}

fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, '\u{0660}'..='\u{0669}' | '\u{06F0}'..='\u{06F9}')
}

pub fn replace_punctuation(s: &str) -> String {
    s.chars()
        .map(|c| if is_punctuation(c) { ' ' } else { c })
        .collect()
}

/// Punctuation replacement that leaves configured emoticons intact, so that
/// the textualization stage can still see them.
fn replace_punctuation_keeping(s: &str, keep: &SymbolMap) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(c) = rest.chars().next() {
        if let Some((key, _)) = keep.longest_match(rest) {
            out.push_str(key);
            rest = &rest[key.len()..];
            continue;
        }
        out.push(if is_punctuation(c) { ' ' } else { c });
        rest = &rest[c.len_utf8()..];
    }
    out
}

pub fn textualize_emoji(s: &str, cfg: &PreprocessConfig) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(c) = rest.chars().next() {
        let hit = match (
            cfg.emoji_map.longest_match(rest),
            cfg.emoticon_map.longest_match(rest),
        ) {
            (Some(a), Some(b)) => Some(if b.0.len() > a.0.len() { b } else { a }),
            (a, b) => a.or(b),
        };
        if let Some((key, token)) = hit {
            out.push(' ');
            out.push_str(token);
            out.push(' ');
            rest = &rest[key.len()..];
            continue;
        }
        out.push(if is_emoji(c) { ' ' } else { c });
        rest = &rest[c.len_utf8()..];
    }
    out
}

pub fn strip_foreign(s: &str) -> String {
    s.chars()
        .map(|c| if is_latin_letter(c) || is_digit(c) { ' ' } else { c })
        .collect()
}

pub fn normalize_arabic(s: &str) -> String {
    s.chars()
        .filter(|&c| c != TATWEEL && !is_arabic_diacritic(c))
        .map(|c| match c {
            '\u{0622}' | '\u{0623}' | '\u{0625}' => '\u{0627}',
            '\u{0629}' => '\u{0647}',
            '\u{0649}' => '\u{064A}',
            other => other,
        })
        .collect()
}

/// Dashes, backslashes and every remaining character outside the output
/// alphabet become spaces.
pub fn replace_decorative(s: &str) -> String {
    s.chars()
        .map(|c| {
            if is_arabic_letter(c) || c == '_' || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect()
}

pub fn reduce_repeats(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev = None;
    for c in s.chars() {
        if prev != Some(c) {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

pub fn apply_prefix_rules(s: &str, rules: &[PrefixRule]) -> String {
    rules
        .iter()
        .fold(s.to_string(), |acc, rule| rule.apply(&acc))
}

pub fn cleanup(s: &str) -> String {
    s.split_whitespace()
        .filter(|t| t.chars().count() > 1)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn pipeline(raw: &str, cfg: &PreprocessConfig) -> Result<CleanText, EmptyText> {
    let s = replace_punctuation_keeping(raw, &cfg.emoticon_map);
    let s = textualize_emoji(&s, cfg);
    let s = strip_foreign(&s);
    let s = normalize_arabic(&s);
    let s = replace_decorative(&s);
    let s = reduce_repeats(&s);
    let s = apply_prefix_rules(&s, &cfg.prefix_rules);
    let s = cleanup(&s);
    if s.is_empty() {
        Err(EmptyText)
    } else {
        Ok(CleanText(s))
    }
}

/// Like [`pipeline`] but maps the empty case to an empty [`CleanText`].
pub fn clean_or_empty(raw: &str, cfg: &PreprocessConfig) -> CleanText {
    pipeline(raw, cfg).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    #[test]
    fn punctuation() {
        assert_eq!(replace_punctuation(""), "");
        assert_eq!(replace_punctuation("a,b؛c"), "a b c");
        assert_eq!(replace_punctuation("هل؟ نعم، طبعا!"), "هل  نعم  طبعا ");
        assert_eq!(replace_punctuation("a_b"), "a_b");
    }

    #[test]
    fn emoji_textualization() {
        let mut c = cfg();
        c.emoji_map = SymbolMap::new([("😀".to_string(), "وجه_مبتسم".to_string())]);
        assert_eq!(textualize_emoji("😀", &c), " وجه_مبتسم ");
        assert_eq!(textualize_emoji(":)", &cfg()), " ابتسامه ");
        assert_eq!(textualize_emoji("سلام عليكم", &cfg()), "سلام عليكم");
        // unmapped emoji is removed
        assert_eq!(textualize_emoji("🦀", &c), " ");
        // variation selector form is matched as a whole
        assert_eq!(textualize_emoji("❤️", &cfg()), " قلب_احمر ");
    }

    #[test]
    fn foreign_characters() {
        assert_eq!(cleanup(&strip_foreign("abc123")), "");
        assert_eq!(strip_foreign("مرحبا بكم"), "مرحبا بكم");
        assert_eq!(cleanup(&strip_foreign("٢٠٢٤")), "");
        assert_eq!(strip_foreign("ضحك_شديد x"), "ضحك_شديد  ");
    }

    #[test]
    fn arabic_normalization() {
        assert_eq!(normalize_arabic("أَحْمَد"), "احمد");
        assert_eq!(normalize_arabic("كتب"), "كتب");
        assert_eq!(normalize_arabic("مدرســـة"), "مدرسه");
        assert_eq!(normalize_arabic("إلى آخر"), "الي اخر");
    }

    #[test]
    fn repeats() {
        assert_eq!(reduce_repeats("ههههه"), "ه");
        assert_eq!(reduce_repeats("سلام"), "سلام");
        assert_eq!(reduce_repeats("جمييييل"), "جميل");
    }

    #[test]
    fn cleanup_rules() {
        assert_eq!(cleanup("  ا  كلمة  "), "كلمة");
        assert_eq!(cleanup(""), "");
        assert_eq!(cleanup("كلمة اخرى"), "كلمة اخرى");
    }

    #[test]
    fn default_prefix_rule() {
        let rules = cfg().prefix_rules;
        assert_eq!(cleanup(&apply_prefix_rules("والله وصل", &rules)), "الله وصل");
        assert_eq!(apply_prefix_rules("وجه_مبتسم", &rules), "وجه_مبتسم");
        assert_eq!(
            cleanup(&apply_prefix_rules("قال وكتب ورسم", &rules)),
            "قال كتب رسم"
        );
    }

    #[test]
    fn pipeline_cases() {
        assert_eq!(pipeline("!!!", &cfg()), Err(EmptyText));
        let clean = "الطقس جميل اليوم";
        assert_eq!(pipeline(clean, &cfg()).unwrap().as_str(), clean);
        // emoji adjacent to Latin text survives as a token
        assert_eq!(pipeline("hello😂world", &cfg()).unwrap().as_str(), "ضحك_بدموع");
        assert_eq!(pipeline("رائع:)", &cfg()).unwrap().as_str(), "رائع ابتسامه");
        assert_eq!(
            pipeline("أنا سعيييييد جداً!! 😍 #فرح http://t.co/x1", &cfg()).unwrap().as_str(),
            "انا سعيد جدا عيون_قلب فرح"
        );
    }

    #[test]
    fn builtin_tokens_are_fixed_points() {
        let c = cfg();
        for (_, token) in c.emoji_map.entries().iter().chain(c.emoticon_map.entries()) {
            assert_eq!(pipeline(token, &c).unwrap().as_str(), token, "token {token}");
        }
        assert!(c.emoji_map.len() >= 50);
    }

    #[test]
    fn symbol_map_parsing() {
        let m = parse_symbol_map("😀\tوجه_مبتسم\n\n:)\tابتسامه\n").unwrap();
        assert_eq!(m.len(), 2);
        assert!(matches!(parse_symbol_map("😀 وجه"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_symbol_map("x\tابتسامه\n😀\tsmile\n"),
            Err(Error::Validation { line: 2, .. })
        ));
    }

    #[test]
    fn settings_round_trip() {
        let c = cfg();
        assert_eq!(PreprocessConfig::from_settings(&c.settings()).unwrap(), c);
    }
}
