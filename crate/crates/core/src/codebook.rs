//! Fixed-length constrained-sequence codebooks.
//!
//! Bit order throughout the crate: index 0 of a [`BitWord`] is the leftmost
//! printed bit, and integer values of words are read MSB-first in that order.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 4B6B DC-free table, indexed by source value.
pub const TABLE_4B6B: [&str; 16] = [
    "001110", "001101", "010011", "010110", "010101", "100011", "100110", "100101", "011001", "011010",
    "011100", "110001", "110010", "101001", "101010", "101100",
];

/// Largest frame count for which every concatenated codeword may be enumerated.
pub const MAX_ENUMERABLE_FRAMES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitWord(Vec<u8>);

impl BitWord {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidBit(b));
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// `len` bits of `value`, most significant first.
    pub fn from_value(value: u64, len: usize) -> Self {
        Self((0..len).map(|i| ((value >> (len - 1 - i)) & 1) as u8).collect())
    }

    pub fn value(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn hamming(&self, other: &BitWord) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn concat(words: &[BitWord]) -> Self {
        Self(words.iter().flat_map(|w| w.0.iter().copied()).collect())
    }

    pub fn chunks(&self, size: usize) -> impl Iterator<Item = BitWord> + '_ {
        self.0.chunks(size).map(|c| BitWord(c.to_vec()))
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for BitWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '|')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidBitString(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitWord)
    }
}

/// Per-frame lookup table: source value to codeword value and back.
#[derive(Debug, Clone, PartialEq, Eq)]
struct FrameTable {
    forward: Vec<u32>,
    inverse: Vec<Option<u32>>,
}

impl FrameTable {
    fn new(forward: Vec<u32>, code_len: usize) -> Result<Self> {
        let mut inverse = vec![None; 1 << code_len];
        for (source, &code) in forward.iter().enumerate() {
            let slot = inverse
                .get_mut(code as usize)
                .ok_or_else(|| Error::MalformedCodebook(format!("codeword {code} exceeds {code_len} bits")))?;
            if slot.is_some() {
                return Err(Error::MalformedCodebook(format!("codeword {code} assigned twice")));
            }
            *slot = Some(source as u32);
        }
        Ok(Self { forward, inverse })
    }
}

/// A bijective source-word to codeword map, possibly several independent
/// tables concatenated frame by frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    source_len: usize,
    code_len: usize,
    tables: Vec<FrameTable>,
    seeds: Vec<u64>,
}

impl Codebook {
    pub fn base_4b6b() -> Self {
        Self::repeated(1)
    }

    /// `frames` copies of the 4B6B table, unshuffled.
    pub fn repeated(frames: usize) -> Self {
        let forward: Vec<u32> = TABLE_4B6B
            .iter()
            .map(|s| u32::from_str_radix(s, 2).expect("static table"))
            .collect();
        let table = FrameTable::new(forward, 6).expect("static table is a bijection");
        Self {
            source_len: 4,
            code_len: 6,
            tables: vec![table; frames],
            seeds: Vec::new(),
        }
    }

    /// Concatenates `frames` 4B6B tables, each with its codeword column
    /// permuted by a seeded Fisher–Yates shuffle.
    pub fn shuffled_concat(frames: usize, seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..frames).map(|_| master.random()).collect();
        let base = Self::base_4b6b().tables.remove(0);
        let tables = seeds
            .iter()
            .map(|&s| {
                let mut forward = base.forward.clone();
                forward.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                FrameTable::new(forward, 6).expect("permutation of a bijection")
            })
            .collect();
        Self {
            source_len: 4,
            code_len: 6,
            tables,
            seeds,
        }
    }

    /// Source bits per frame.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Code bits per frame.
    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn frames(&self) -> usize {
        self.tables.len()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn total_source_len(&self) -> usize {
        self.source_len * self.frames()
    }

    pub fn total_code_len(&self) -> usize {
        self.code_len * self.frames()
    }

    pub fn words_per_frame(&self) -> usize {
        1 << self.source_len
    }

    /// `2^(k·frames)`.
    pub fn num_mappings(&self) -> u64 {
        1u64 << (self.source_len * self.frames())
    }

    pub fn code_rate(&self) -> f64 {
        self.source_len as f64 / self.code_len as f64
    }

    /// `(source, codeword)` pairs of one frame's table in source order.
    pub fn frame_entries(&self, frame: usize) -> impl Iterator<Item = (BitWord, BitWord)> + '_ {
        let table = &self.tables[frame];
        table.forward.iter().enumerate().map(move |(s, &c)| {
            (
                BitWord::from_value(s as u64, self.source_len),
                BitWord::from_value(u64::from(c), self.code_len),
            )
        })
    }

    pub fn encode_frame(&self, frame: usize, source: u32) -> u32 {
        self.tables[frame].forward[source as usize]
    }

    pub fn decode_frame_exact(&self, frame: usize, code: u32) -> Option<u32> {
        self.tables[frame].inverse.get(code as usize).copied().flatten()
    }

    pub fn encode(&self, source: &BitWord) -> Result<BitWord> {
        self.check_len(source.len(), self.total_source_len())?;
        let frames: Vec<BitWord> = source
            .chunks(self.source_len)
            .enumerate()
            .map(|(f, w)| BitWord::from_value(u64::from(self.encode_frame(f, w.value() as u32)), self.code_len))
            .collect();
        Ok(BitWord::concat(&frames))
    }

    /// Inverse table lookup; `None` if any frame is not a valid codeword.
    pub fn decode_exact(&self, code: &BitWord) -> Result<Option<BitWord>> {
        self.check_len(code.len(), self.total_code_len())?;
        let mut frames = Vec::with_capacity(self.frames());
        for (f, w) in code.chunks(self.code_len).enumerate() {
            match self.decode_frame_exact(f, w.value() as u32) {
                Some(s) => frames.push(BitWord::from_value(u64::from(s), self.source_len)),
                None => return Ok(None),
            }
        }
        Ok(Some(BitWord::concat(&frames)))
    }

    /// Closest codeword of one frame's table in Hamming distance.
    ///
    /// Ties go to the numerically smallest source word. Returns
    /// `(codeword, source, distance)`.
    pub fn nearest_codeword(&self, frame: usize, word: &BitWord) -> Result<(BitWord, BitWord, usize)> {
        self.check_len(word.len(), self.code_len)?;
        let v = word.value() as u32;
        let table = &self.tables[frame];
        if let Some(s) = table.inverse[v as usize] {
            return Ok((
                word.clone(),
                BitWord::from_value(u64::from(s), self.source_len),
                0,
            ));
        }
        let (source, code, dist) = table
            .forward
            .iter()
            .enumerate()
            .map(|(s, &c)| (s, c, (c ^ v).count_ones() as usize))
            .min_by_key(|&(s, _, d)| (d, s))
            .expect("non-empty table");
        Ok((
            BitWord::from_value(u64::from(code), self.code_len),
            BitWord::from_value(source as u64, self.source_len),
            dist,
        ))
    }

    /// Every `(source, codeword)` pair of the concatenated code, in source order.
    pub fn mappings(&self) -> Result<impl Iterator<Item = (BitWord, BitWord)> + '_> {
        if self.frames() > MAX_ENUMERABLE_FRAMES {
            return Err(Error::TooManyFrames(self.frames()));
        }
        let k = self.total_source_len();
        Ok((0..self.num_mappings()).map(move |value| {
            let source = BitWord::from_value(value, k);
            let code = self.encode(&source).expect("length matches");
            (source, code)
        }))
    }

    fn check_len(&self, actual: usize, expected: usize) -> Result<()> {
        if actual == expected {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mappings = self
            .mappings()?
            .map(|(s, c)| [s.to_string(), c.to_string()])
            .collect();
        let file = CodebookFile {
            k: self.source_len,
            n: self.code_len,
            frames: self.frames(),
            seeds: self.seeds.clone(),
            mappings,
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Rebuilds the per-frame tables from a full mapping list and checks that
    /// the list is exactly their frame-wise product.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        let (k, n, frames) = (file.k, file.n, file.frames);
        if k == 0 || n == 0 || frames == 0 || k > 16 || n > 16 || k * frames > 63 {
            return Err(Error::MalformedCodebook(format!("bad dimensions k={k} n={n} frames={frames}")));
        }
        let expected = 1usize << (k * frames);
        if file.mappings.len() != expected {
            return Err(Error::MalformedCodebook(format!(
                "expected {expected} mappings, found {}",
                file.mappings.len()
            )));
        }
        let mut full: Vec<Option<BitWord>> = vec![None; expected];
        for [s, c] in &file.mappings {
            let s: BitWord = s.parse()?;
            let c: BitWord = c.parse()?;
            if s.len() != k * frames || c.len() != n * frames {
                return Err(Error::MalformedCodebook(format!("entry {s} -> {c} has the wrong length")));
            }
            let slot = &mut full[s.value() as usize];
            if slot.is_some() {
                return Err(Error::MalformedCodebook(format!("source word {s} listed twice")));
            }
            *slot = Some(c);
        }
        let tables = (0..frames)
            .map(|f| {
                let forward = (0..1u64 << k)
                    .map(|s| {
                        let source = s << (k * (frames - 1 - f));
                        let code = full[source as usize].as_ref().expect("all slots filled");
                        BitWord(code.bits()[f * n..(f + 1) * n].to_vec()).value() as u32
                    })
                    .collect();
                FrameTable::new(forward, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let cb = Self {
            source_len: k,
            code_len: n,
            tables,
            seeds: file.seeds,
        };
        for (s, c) in full.iter().enumerate() {
            let c = c.as_ref().expect("all slots filled");
            if &cb.encode(&BitWord::from_value(s as u64, k * frames))? != c {
                return Err(Error::MalformedCodebook(
                    "mappings are not a frame-wise concatenation".into(),
                ));
            }
        }
        Ok(cb)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    k: usize,
    n: usize,
    frames: usize,
    seeds: Vec<u64>,
    mappings: Vec<[String; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bw(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    #[test]
    fn base_table_entries() {
        let cb = Codebook::base_4b6b();
        assert_eq!(cb.encode(&bw("0000")).unwrap(), bw("001110"));
        assert_eq!(cb.encode(&bw("1111")).unwrap(), bw("101100"));
        assert_eq!(cb.encode(&bw("0101")).unwrap(), bw("100011"));
        assert_eq!(cb.encode(&bw("1001")).unwrap(), bw("011010"));
        assert_eq!((cb.source_len(), cb.code_len(), cb.frames()), (4, 6, 1));
        for s in 0..16 {
            let w = BitWord::from_value(s, 4);
            let c = cb.encode(&w).unwrap();
            assert_eq!(cb.decode_exact(&c).unwrap(), Some(w));
        }
    }

    #[test]
    fn base_codewords_are_balanced() {
        let cb = Codebook::base_4b6b();
        for (_, c) in cb.frame_entries(0) {
            assert_eq!(c.weight(), 3, "{c}");
        }
    }

    #[test]
    fn runlength_of_two_codewords_at_most_four() {
        let cb = Codebook::base_4b6b();
        let words: Vec<BitWord> = cb.frame_entries(0).map(|(_, c)| c).collect();
        for a in &words {
            for b in &words {
                let joined = BitWord::concat(&[a.clone(), b.clone()]);
                let longest = joined
                    .bits()
                    .chunk_by(|x, y| x == y)
                    .map(|run| run.len())
                    .max()
                    .unwrap();
                assert!(longest <= 4, "{a}{b}");
            }
        }
    }

    #[test]
    fn encode_is_frame_independent() {
        let cb = Codebook::repeated(2);
        assert_eq!(cb.encode(&bw("0000 0000")).unwrap(), bw("001110 001110"));
        assert!(matches!(
            cb.encode(&bw("0000")),
            Err(Error::LengthMismatch { expected: 8, actual: 4 })
        ));
    }

    #[test]
    fn shuffled_sizes_and_determinism() {
        let cb = Codebook::shuffled_concat(5, 7);
        assert_eq!(cb.num_mappings(), 1 << 20);
        assert_eq!(cb.total_source_len(), 20);
        assert_eq!(cb.total_code_len(), 30);
        assert_eq!(cb.seeds().len(), 5);
        let a = Codebook::shuffled_concat(2, 99);
        let b = Codebook::shuffled_concat(2, 99);
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a, Codebook::shuffled_concat(2, 100));
    }

    #[test]
    fn shuffle_permutes_codewords() {
        let base: std::collections::BTreeSet<BitWord> =
            Codebook::base_4b6b().frame_entries(0).map(|(_, c)| c).collect();
        let cb = Codebook::shuffled_concat(4, 3);
        for f in 0..4 {
            let set: std::collections::BTreeSet<BitWord> = cb.frame_entries(f).map(|(_, c)| c).collect();
            assert_eq!(set, base);
        }
    }

    #[test]
    fn repeated_one_equals_base() {
        assert_eq!(Codebook::repeated(1), Codebook::base_4b6b());
    }

    #[test]
    fn nearest_examples() {
        let cb = Codebook::base_4b6b();
        let (c, s, d) = cb.nearest_codeword(0, &bw("001110")).unwrap();
        assert_eq!((c, s, d), (bw("001110"), bw("0000"), 0));
        // 001110 (source 0000) and 001101 (source 0001) are both at distance 1.
        let (c, s, d) = cb.nearest_codeword(0, &bw("001111")).unwrap();
        assert_eq!((c, s, d), (bw("001110"), bw("0000"), 1));
        let (c, _, d) = cb.nearest_codeword(0, &bw("111111")).unwrap();
        assert_eq!(d, 3);
        assert_eq!(c.weight(), 3);
    }

    #[test]
    fn nearest_matches_brute_force_for_every_word() {
        let cb = Codebook::shuffled_concat(1, 11);
        for v in 0..64u64 {
            let w = BitWord::from_value(v, 6);
            let (c, s, d) = cb.nearest_codeword(0, &w).unwrap();
            let best = cb
                .frame_entries(0)
                .map(|(src, code)| (code.hamming(&w), src.value(), code))
                .min()
                .unwrap();
            assert_eq!((d, s.value(), c.clone()), best);
            assert_eq!(d == 0, cb.decode_exact(&w).unwrap().is_some());
        }
    }

    #[test]
    fn json_roundtrip_and_rejection() {
        let cb = Codebook::shuffled_concat(2, 5);
        let text = cb.to_json().unwrap();
        assert_eq!(Codebook::from_json(&text).unwrap(), cb);
        assert!(Codebook::from_json(&text[..text.len() / 2]).is_err());

        let mut file: CodebookFile = serde_json::from_str(&text).unwrap();
        let tmp = file.mappings[1][1].clone();
        file.mappings[1][1] = file.mappings[2][1].clone();
        file.mappings[2][1] = tmp;
        let broken = serde_json::to_string(&file).unwrap();
        assert!(matches!(Codebook::from_json(&broken), Err(Error::MalformedCodebook(_))));
    }

    #[test]
    fn bit_string_parsing() {
        assert_eq!(bw("01 10|1").bits(), &[0, 1, 1, 0, 1]);
        assert!("012".parse::<BitWord>().is_err());
        assert_eq!(BitWord::from_value(0b1011, 4).to_string(), "1011");
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(frames in 1usize..5, seed: u64, value: u64) {
            let cb = Codebook::shuffled_concat(frames, seed);
            let source = BitWord::from_value(value % cb.num_mappings(), cb.total_source_len());
            let code = cb.encode(&source).unwrap();
            prop_assert_eq!(code.len(), cb.total_code_len());
            prop_assert_eq!(cb.decode_exact(&code).unwrap(), Some(source));
        }
    }
}
