//! Whitespace word-level vocabulary and fixed-length encoding.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Hard cap on sequence length, CLS included.
pub const MAX_LEN: usize = 150;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary parameters: {0}")]
    InvalidParams(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("vocabulary file line {line}: {detail}")]
    MalformedFile { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bijection between tokens and ids. Ids 0..4 are the fixed specials; corpus
/// tokens start at 4. The masked-LM `[MASK]` id is one past the last token
/// (see [`Vocabulary::mask_id`]) and is never stored here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn mask_id(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Hex SHA-256 of the canonical file form; checkpoints pin this value.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Reads `token<TAB>id` lines, which must be sorted by id starting with the specials.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, TokenizerError> {
        let mut tokens = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = |detail: String| TokenizerError::MalformedFile { line: i + 1, detail };
            let (token, id) = line.split_once('\t').ok_or_else(|| bad("expected `token<TAB>id`".into()))?;
            let id: usize = id.parse().map_err(|_| bad(format!("bad id `{id}`")))?;
            if id != tokens.len() {
                return Err(bad(format!("expected id {}, found {id}", tokens.len())));
            }
            if id < NUM_SPECIALS && token != SPECIAL_TOKENS[id] {
                return Err(bad(format!("id {id} must be {}", SPECIAL_TOKENS[id])));
            }
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(bad(format!("invalid token `{token}`")));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() <= NUM_SPECIALS {
            return Err(TokenizerError::MalformedFile {
                line: tokens.len(),
                detail: "vocabulary has no corpus tokens".into(),
            });
        }
        let vocab = Vocabulary::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(TokenizerError::MalformedFile { line: 0, detail: "duplicate token".into() });
        }
        Ok(vocab)
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Counts whitespace tokens, keeps those with frequency ≥ `min_freq`, ranks by
/// (frequency desc, token asc) and keeps at most `max_size − 4`.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[S],
    min_freq: usize,
    max_size: usize,
) -> Result<Vocabulary, TokenizerError> {
    if min_freq < 1 {
        return Err(TokenizerError::InvalidParams("min_freq must be at least 1".into()));
    }
    if max_size <= NUM_SPECIALS {
        return Err(TokenizerError::InvalidParams(format!("max_size must exceed {NUM_SPECIALS}")));
    }
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for text in corpus {
        for tok in text.as_ref().split_whitespace() {
            *freq.entry(tok).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> =
        freq.into_iter().filter(|&(t, f)| f >= min_freq && !SPECIAL_TOKENS.contains(&t)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(max_size - NUM_SPECIALS);
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from_tokens(tokens))
}

/// Fixed-length id array with its attention mask. Positions `< true_len` are
/// real (mask 1), the rest are PAD (mask 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub true_len: usize,
}

impl TokenSequence {
    /// Builds a sequence from already-mapped ids (CLS not added).
    pub fn from_ids(ids: &[u32], max_len: usize) -> Self {
        let true_len = ids.len().min(max_len);
        let mut padded = vec![PAD; max_len];
        padded[..true_len].copy_from_slice(&ids[..true_len]);
        let mut mask = vec![0u8; max_len];
        mask[..true_len].fill(1);
        TokenSequence { ids: padded, mask, true_len }
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// The unpadded prefix.
    pub fn active(&self) -> &[u32] {
        &self.ids[..self.true_len]
    }
}

/// Maps words through the vocabulary (UNK fallback), prepends CLS, keeps the
/// prefix up to `max_len` and pads.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let ids: Vec<u32> = std::iter::once(CLS)
        .chain(text.split_whitespace().map(|w| vocab.id_of(w).unwrap_or(UNK)))
        .take(max_len)
        .collect();
    TokenSequence::from_ids(&ids, max_len)
}

/// Drops specials and joins the remaining tokens with single spaces.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<String, TokenizerError> {
    let mut words = Vec::new();
    for &id in ids {
        let token = vocab.token_of(id).ok_or(TokenizerError::IdOutOfRange { id, size: vocab.size() })?;
        if !Vocabulary::is_special(id) {
            words.push(token);
        }
    }
    Ok(words.join(" "))
}
