//! Word-level and GPT2 byte-level BPE tokenization.
//!
//! Vocabulary files hold one `token<TAB>id` pair per line. Merge files hold one
//! `left right` pair per line in rank order; a leading `#version` line is
//! skipped. A vocabulary loaded without merges is word-level.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use fancy_regex::Regex;

use crate::error::{Error, Result};

/// GPT2 pre-tokenization pattern.
const GPT2_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerMode {
    WordLevel,
    ByteBpe,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    merges: Vec<(String, String)>,
    merge_ranks: HashMap<(String, String), usize>,
    mode: TokenizerMode,
}

fn pretokenizer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(GPT2_PATTERN).expect("static pattern compiles"))
}

/// The GPT2 reversible byte → printable-char table.
fn byte_table() -> &'static ([char; 256], HashMap<char, u8>) {
    static TABLE: OnceLock<([char; 256], HashMap<char, u8>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut forward = ['\0'; 256];
        let mut extra = 0u32;
        for b in 0..=255u8 {
            let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
            forward[b as usize] = if printable {
                char::from(b)
            } else {
                let c = char::from_u32(256 + extra).expect("valid code point");
                extra += 1;
                c
            };
        }
        let inverse = forward.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        (forward, inverse)
    })
}

impl Vocabulary {
    /// Word-level vocabulary from tokens listed in id order.
    pub fn word_level<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let pairs = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_ref().to_string(), i as u32))
            .collect();
        Self::from_parts(pairs, Vec::new(), TokenizerMode::WordLevel)
    }

    /// Byte-level BPE vocabulary from `(token, id)` pairs and ranked merges.
    pub fn byte_bpe(pairs: Vec<(String, u32)>, merges: Vec<(String, String)>) -> Result<Self> {
        Self::from_parts(pairs, merges, TokenizerMode::ByteBpe)
    }

    fn from_parts(
        pairs: Vec<(String, u32)>,
        merges: Vec<(String, String)>,
        mode: TokenizerMode,
    ) -> Result<Self> {
        let n = pairs.len();
        let mut id_to_token = vec![None; n];
        let mut token_to_id = HashMap::with_capacity(n);
        for (tok, id) in pairs {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| Error::Vocabulary(format!("id {id} not dense in [0, {n})")))?;
            if slot.is_some() {
                return Err(Error::Vocabulary(format!("duplicate id {id}")));
            }
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {tok:?}")));
            }
            if mode == TokenizerMode::WordLevel && (tok.is_empty() || tok.chars().any(char::is_whitespace)) {
                return Err(Error::Vocabulary(format!("word-level token {tok:?} is empty or has whitespace")));
            }
            *slot = Some(tok);
        }
        let id_to_token: Vec<String> = id_to_token
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Vocabulary("ids are not dense".into()))?;
        if mode == TokenizerMode::ByteBpe {
            let (forward, _) = byte_table();
            if let Some(c) = forward.iter().find(|c| !token_to_id.contains_key(&c.to_string())) {
                return Err(Error::Vocabulary(format!("byte alphabet incomplete: missing {c:?}")));
            }
        }
        let merge_ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, pair)| (pair.clone(), rank))
            .collect();
        Ok(Self {
            token_to_id,
            id_to_token,
            merges,
            merge_ranks,
            mode,
        })
    }

    /// Loads a vocabulary file and, when given, a merges file (which selects byte-BPE mode).
    pub fn load(vocab_path: &Path, merges_path: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| {
                Error::Format(format!("{}:{}: expected token<TAB>id", vocab_path.display(), lineno + 1))
            })?;
            let id: u32 = id.trim().parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad id {id:?}", vocab_path.display(), lineno + 1))
            })?;
            pairs.push((tok.to_string(), id));
        }
        match merges_path {
            None => {
                pairs.sort_by_key(|&(_, id)| id);
                Self::from_parts(pairs, Vec::new(), TokenizerMode::WordLevel)
            }
            Some(mp) => {
                let text = fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
                let mut merges = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    if line.is_empty() || (lineno == 0 && line.starts_with("#version")) {
                        continue;
                    }
                    let (l, r) = line.split_once(' ').ok_or_else(|| {
                        Error::Format(format!("{}:{}: expected \"left right\"", mp.display(), lineno + 1))
                    })?;
                    merges.push((l.to_string(), r.to_string()));
                }
                Self::byte_bpe(pairs, merges)
            }
        }
    }

    /// Writes the vocabulary (and merges, in byte-BPE mode) in the file formats `load` reads.
    pub fn save(&self, vocab_path: &Path, merges_path: Option<&Path>) -> Result<()> {
        let mut out = String::new();
        for (id, tok) in self.id_to_token.iter().enumerate() {
            out.push_str(&format!("{tok}\t{id}\n"));
        }
        fs::write(vocab_path, out).map_err(|e| Error::io(vocab_path, e))?;
        if let Some(mp) = merges_path {
            let mut out = String::new();
            for (l, r) in &self.merges {
                out.push_str(&format!("{l} {r}\n"));
            }
            fs::write(mp, out).map_err(|e| Error::io(mp, e))?;
        }
        Ok(())
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        match self.mode {
            TokenizerMode::WordLevel => text
                .split_whitespace()
                .map(|w| self.id(w).ok_or_else(|| Error::UnknownToken(w.to_string())))
                .collect(),
            TokenizerMode::ByteBpe => self.encode_bpe(text),
        }
    }

    fn encode_bpe(&self, text: &str) -> Result<Vec<u32>> {
        let (forward, _) = byte_table();
        let mut ids = Vec::new();
        for piece in pretokenizer().find_iter(text) {
            let piece = piece.map_err(|e| Error::Format(format!("pre-tokenizer: {e}")))?;
            let symbols: Vec<String> = piece
                .as_str()
                .bytes()
                .map(|b| forward[b as usize].to_string())
                .collect();
            for sym in self.merge_symbols(symbols) {
                ids.push(self.id(&sym).ok_or_else(|| Error::UnknownToken(sym.clone()))?);
            }
        }
        Ok(ids)
    }

    /// Repeatedly merges the adjacent pair with the lowest merge rank.
    fn merge_symbols(&self, mut symbols: Vec<String>) -> Vec<String> {
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.merge_ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let tokens = ids
            .iter()
            .map(|&id| {
                self.token(id).ok_or(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match self.mode {
            TokenizerMode::WordLevel => Ok(tokens.join(" ")),
            TokenizerMode::ByteBpe => {
                let (_, inverse) = byte_table();
                let bytes: Vec<u8> = tokens
                    .iter()
                    .flat_map(|t| t.chars())
                    .map(|c| {
                        inverse
                            .get(&c)
                            .copied()
                            .ok_or_else(|| Error::Vocabulary(format!("char {c:?} outside byte alphabet")))
                    })
                    .collect::<Result<_>>()?;
                String::from_utf8(bytes).map_err(|e| Error::Format(format!("decoded bytes are not UTF-8: {e}")))
            }
        }
    }

    /// Whether `word`, written mid-sentence (with a leading space), is a single token.
    pub fn is_single_token(&self, word: &str) -> bool {
        matches!(self.encode(&format!(" {word}")), Ok(ids) if ids.len() == 1)
    }

    /// Encodes a continuation that follows a prompt, using the leading-space convention.
    pub fn encode_continuation(&self, text: &str) -> Result<Vec<u32>> {
        self.encode(&format!(" {}", text.trim_start()))
    }
}
