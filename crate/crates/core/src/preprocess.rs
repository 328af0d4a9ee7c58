//! Tweet cleaning: mention/URL stripping, emoji substitution, hashtag
//! segmentation, lowercasing and punctuation removal.
//!
//! Steps run in the order entities → emoji → hashtags → normalize. Hashtags are
//! segmented before lowercasing so camel-case boundaries are still visible, and
//! emoji names are ASCII words so they survive punctuation removal.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("emoji table line {line}: {detail}")]
    MalformedTable { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const BUNDLED_EMOJI_TABLE: &str = include_str!("../data/emoji_short_names.tsv");

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|\bwww\.)\S*").unwrap())
}

fn hashtag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#(\w+)").unwrap())
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes `@mention` tokens and URLs (`http://`, `https://`, or a `www.` prefix,
/// up to the next whitespace), then collapses whitespace.
pub fn strip_entities(text: &str) -> String {
    let without_urls = url_re().replace_all(text, " ");
    let without_mentions = mention_re().replace_all(&without_urls, " ");
    collapse_whitespace(&without_mentions)
}

/// Splits one hashtag body into lowercase words: underscores separate words,
/// and within each piece a boundary falls at lower→upper, letter↔digit and
/// before the last capital of an acronym run followed by lowercase (`HTMLParser`).
pub fn split_hashtag_body(body: &str) -> Vec<String> {
    let mut words = Vec::new();
    for piece in body.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 {
                let prev = chars[i - 1];
                let next = chars.get(i + 1).copied();
                let boundary = (prev.is_lowercase() && c.is_uppercase())
                    || (prev.is_alphabetic() && c.is_numeric())
                    || (prev.is_numeric() && c.is_alphabetic())
                    || (prev.is_uppercase() && c.is_uppercase() && next.is_some_and(char::is_lowercase));
                if boundary && !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
            }
            current.push(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words.into_iter().map(|w| w.to_lowercase()).collect()
}

/// Replaces every `#body` with its space-joined lowercase word sequence.
pub fn segment_hashtags(text: &str) -> String {
    let replaced = hashtag_re()
        .replace_all(text, |caps: &regex::Captures<'_>| format!(" {} ", split_hashtag_body(&caps[1]).join(" ")));
    collapse_whitespace(&replaced)
}

/// Emoji → short-name lookup with longest-sequence matching.
#[derive(Debug, Clone)]
pub struct EmojiTable {
    names: HashMap<String, String>,
    longest: usize,
    code_points: HashSet<char>,
}

fn in_pictographic_block(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0xE0020..=0xE007F
        | 0xFE0F
        | 0x200D
        | 0x20E3)
}

impl EmojiTable {
    /// Parses `emoji<TAB>short_name` lines; `#` starts a comment line.
    pub fn parse(src: &str) -> Result<Self, PreprocessError> {
        let mut names = HashMap::new();
        let mut longest = 0;
        let mut code_points = HashSet::new();
        for (i, line) in src.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (emoji, name) = line.split_once('\t').ok_or_else(|| PreprocessError::MalformedTable {
                line: line_no,
                detail: "expected `emoji<TAB>short_name`".into(),
            })?;
            if emoji.is_empty() || name.contains('\t') {
                return Err(PreprocessError::MalformedTable {
                    line: line_no,
                    detail: "expected exactly two non-empty columns".into(),
                });
            }
            if !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b' ')
                || name.trim().is_empty()
            {
                return Err(PreprocessError::MalformedTable {
                    line: line_no,
                    detail: format!("short name `{name}` must be lowercase ASCII words"),
                });
            }
            longest = longest.max(emoji.chars().count());
            code_points.extend(emoji.chars().filter(|c| !c.is_ascii()));
            names.insert(emoji.to_string(), name.to_string());
        }
        Ok(EmojiTable { names, longest, code_points })
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The table shipped with the crate (CLDR-derived English short names).
    pub fn bundled() -> Arc<EmojiTable> {
        static TABLE: OnceLock<Arc<EmojiTable>> = OnceLock::new();
        TABLE.get_or_init(|| Arc::new(EmojiTable::parse(BUNDLED_EMOJI_TABLE).expect("bundled emoji table"))).clone()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name_of(&self, emoji: &str) -> Option<&str> {
        self.names.get(emoji).map(String::as_str)
    }

    /// Whether `c` counts as an emoji code point: any non-ASCII code point used
    /// by a table entry, or one from the pictographic/emoji-component blocks.
    pub fn is_emoji(&self, c: char) -> bool {
        !c.is_ascii() && (in_pictographic_block(c) || self.code_points.contains(&c))
    }
}

/// Replaces table emoji with ` name ` and drops any other emoji code point.
pub fn substitute_emoji(text: &str, table: &EmojiTable) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut candidate = String::new();
    while i < chars.len() {
        let mut matched = None;
        if table.is_emoji(chars[i]) || chars[i].is_ascii_digit() || matches!(chars[i], '#' | '*') {
            let max = table.longest.min(chars.len() - i);
            for len in (1..=max).rev() {
                candidate.clear();
                candidate.extend(&chars[i..i + len]);
                if let Some(name) = table.name_of(&candidate) {
                    matched = Some((len, name));
                    break;
                }
            }
        }
        match matched {
            Some((len, name)) => {
                out.push(' ');
                out.push_str(name);
                out.push(' ');
                i += len;
            }
            None => {
                if table.is_emoji(chars[i]) {
                    out.push(' ');
                } else {
                    out.push(chars[i]);
                }
                i += 1;
            }
        }
    }
    if out == text {
        return out;
    }
    collapse_whitespace(&out)
}

/// Characters deleted by [`normalize`]: ASCII punctuation except `@` and `#`.
pub fn is_removed_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() && c != '@' && c != '#'
}

/// Lowercases, deletes the removal punctuation set and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.to_lowercase().chars().filter(|&c| !is_removed_punctuation(c)).collect();
    collapse_whitespace(&lowered)
}

/// Which cleaning steps are enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub strip_entities: bool,
    pub emoji: bool,
    pub hashtags: bool,
    pub normalize: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { strip_entities: true, emoji: true, hashtags: true, normalize: true }
    }
}

/// Output of the cleaning pipeline together with the steps that were applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CleanText {
    pub text: String,
    pub provenance: Vec<&'static str>,
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

#[derive(Clone, Debug)]
pub struct Preprocessor {
    pub options: PreprocessOptions,
    table: Arc<EmojiTable>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor::new(PreprocessOptions::default(), EmojiTable::bundled())
    }
}

impl Preprocessor {
    pub fn new(options: PreprocessOptions, table: Arc<EmojiTable>) -> Self {
        Preprocessor { options, table }
    }

    fn pass(&self, text: &str) -> String {
        let mut t = text.to_string();
        if self.options.strip_entities {
            t = strip_entities(&t);
        }
        if self.options.emoji {
            t = substitute_emoji(&t, &self.table);
        }
        if self.options.hashtags {
            t = segment_hashtags(&t);
        }
        if self.options.normalize {
            t = normalize(&t);
        }
        t
    }

    /// Runs the enabled steps. Deleting punctuation can expose a new `@word` or
    /// `#word` (e.g. `#.tag`), so the pass repeats until the text is stable,
    /// which makes the result a fixed point and the pipeline idempotent.
    pub fn preprocess(&self, text: &str) -> CleanText {
        let mut current = self.pass(text);
        // Each extra pass removes at least one `@`/`#`, so this terminates.
        let bound = current.chars().filter(|&c| c == '@' || c == '#').count() + 2;
        for _ in 0..bound {
            let next = self.pass(&current);
            if next == current {
                break;
            }
            current = next;
        }
        let mut provenance = Vec::new();
        if self.options.strip_entities {
            provenance.push("strip_entities");
        }
        if self.options.emoji {
            provenance.push("substitute_emoji");
        }
        if self.options.hashtags {
            provenance.push("segment_hashtags");
        }
        if self.options.normalize {
            provenance.push("normalize");
        }
        CleanText { text: current, provenance }
    }
}

/// Full default pipeline with the bundled emoji table.
pub fn preprocess(text: &str) -> CleanText {
    static DEFAULT: OnceLock<Preprocessor> = OnceLock::new();
    DEFAULT.get_or_init(Preprocessor::default).preprocess(text)
}
