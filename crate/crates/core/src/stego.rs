//! Message hiding schemes over DNA: the 2-bit nucleotide codec, key-segment
//! bit insertion, ASCII and five-bit character codings, synonymous-codon
//! substitution, and rate-controlled random substitution.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::seqio::{Base, DnaSequence};

/// An ordered string of bits, written as `0`/`1` characters.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    /// Most-significant bit first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1)).collect())
    }

    /// Packs whole bytes, most-significant bit first. Length must be a multiple of 8.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.0.len().is_multiple_of(8) {
            return Err(Error::Bits(format!("{} bits do not form whole bytes", self.0.len())));
        }
        Ok(self
            .0
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
            .collect())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Bits(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A=00, C=01, G=10, T=11.
pub fn dna_to_bits(bases: &[Base]) -> BitString {
    BitString(
        bases
            .iter()
            .flat_map(|b| {
                let i = b.index();
                [i & 2 != 0, i & 1 != 0]
            })
            .collect(),
    )
}

pub fn bits_to_dna(bits: &BitString) -> Result<Vec<Base>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Bits(format!("odd bit length {} has no nucleotide form", bits.len())));
    }
    Ok(bits
        .bits()
        .chunks_exact(2)
        .map(|p| Base::from_index(((p[0] as usize) << 1) | p[1] as usize))
        .collect())
}

/// Splits `cover` into `key_length`-bit segments and prepends message bit `i`
/// to segment `i`. Segments past the message and the short tail are copied.
pub fn embed_keybits(cover: &BitString, message: &BitString, key_length: usize) -> Result<BitString> {
    if key_length == 0 {
        return Err(Error::InvalidArgument("key_length must be at least 1".into()));
    }
    let available = cover.len() / key_length;
    if message.len() > available {
        return Err(Error::Capacity { needed: message.len(), available });
    }
    let mut out = Vec::with_capacity(cover.len() + message.len());
    for (i, segment) in cover.bits().chunks(key_length).enumerate() {
        if let Some(&bit) = message.bits().get(i) {
            out.push(bit);
        }
        out.extend_from_slice(segment);
    }
    Ok(BitString(out))
}

/// Reads the leading bit of each of the first `message_length` segments of
/// width `key_length + 1`.
pub fn extract_keybits(stego: &BitString, message_length: usize, key_length: usize) -> Result<BitString> {
    if key_length == 0 {
        return Err(Error::InvalidArgument("key_length must be at least 1".into()));
    }
    let needed = message_length * (key_length + 1);
    if stego.len() < needed {
        return Err(Error::Capacity { needed, available: stego.len() });
    }
    Ok(BitString(
        stego.bits()[..needed].iter().step_by(key_length + 1).copied().collect(),
    ))
}

/// Recovers the cover bits by dropping the inserted message bits.
pub fn strip_keybits(stego: &BitString, message_length: usize, key_length: usize) -> Result<BitString> {
    let needed = message_length * (key_length + 1);
    if key_length == 0 || stego.len() < needed {
        return Err(Error::Capacity { needed, available: stego.len() });
    }
    let mut out: Vec<bool> = stego.bits()[..needed]
        .chunks(key_length + 1)
        .flat_map(|seg| seg[1..].iter().copied())
        .collect();
    out.extend_from_slice(&stego.bits()[needed..]);
    Ok(BitString(out))
}

/// Each byte becomes four nucleotides through the 2-bit map, MSB first.
pub fn encode_ascii(text: &[u8]) -> Vec<Base> {
    bits_to_dna(&BitString::from_bytes(text)).expect("whole bytes give an even bit count")
}

pub fn decode_ascii(bases: &[Base]) -> Result<Vec<u8>> {
    if !bases.len().is_multiple_of(4) {
        return Err(Error::Bits(format!("{} nucleotides are not whole bytes", bases.len())));
    }
    dna_to_bits(bases).to_bytes()
}

/// The 32-symbol alphabet of the five-bit coding: A–Z then six punctuation marks.
pub const FIVE_BIT_ALPHABET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ .,-?!";

/// Five bits per symbol, zero-padded to an even length, then the 2-bit map.
/// Lowercase letters are folded to uppercase.
pub fn encode_fivebit(text: &str) -> Result<Vec<Base>> {
    let mut bits = BitString::new();
    for ch in text.chars() {
        let code = FIVE_BIT_ALPHABET
            .find(ch.to_ascii_uppercase())
            .ok_or(Error::Alphabet(ch))?;
        for i in (0..5).rev() {
            bits.push((code >> i) & 1 == 1);
        }
    }
    if bits.len() % 2 == 1 {
        bits.push(false);
    }
    bits_to_dna(&bits)
}

/// Inverse of [`encode_fivebit`]. Padding never exceeds one bit, so the
/// symbol count is `floor(2·len / 5)`.
pub fn decode_fivebit(bases: &[Base]) -> Result<String> {
    let bits = dna_to_bits(bases);
    let alphabet: Vec<char> = FIVE_BIT_ALPHABET.chars().collect();
    let n = bits.len() / 5;
    if bits.len() - 5 * n > 1 {
        return Err(Error::Bits(format!(
            "{} nucleotides are not a five-bit encoding",
            bases.len()
        )));
    }
    Ok(bits.bits()[..5 * n]
        .chunks(5)
        .map(|c| alphabet[c.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)])
        .collect())
}

/// Maps each of the 64 codons to a one-letter amino acid (`*` for stop).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, char>", into = "BTreeMap<String, char>")]
pub struct CodonTable {
    amino: [char; 64],
}

fn codon_index(c: &[Base]) -> usize {
    (c[0].index() << 4) | (c[1].index() << 2) | c[2].index()
}

fn codon_string(i: usize) -> String {
    [i >> 4, (i >> 2) & 3, i & 3].iter().map(|&b| Base::from_index(b).to_char()).collect()
}

impl CodonTable {
    /// The standard genetic code.
    pub fn standard() -> Self {
        const CODE: &str = "KNKNTTTTRSRSIIMIQHQHPPPPRRRRLLLLEDEDAAAAGGGGVVVV*Y*YSSSS*CWCLFLF";
        let mut amino = ['?'; 64];
        for (i, c) in CODE.chars().enumerate() {
            amino[i] = c;
        }
        Self { amino }
    }

    pub fn amino_acid(&self, codon: &[Base]) -> char {
        self.amino[codon_index(codon)]
    }

    /// Codon indices coding the same amino acid, in lexicographic order.
    /// Index order over A<C<G<T coincides with string order.
    fn synonyms(&self, aa: char) -> Vec<usize> {
        (0..64).filter(|&i| self.amino[i] == aa).collect()
    }

    pub fn translate(&self, bases: &[Base]) -> String {
        bases.chunks_exact(3).map(|c| self.amino_acid(c)).collect()
    }

    /// Bits a codon can carry: floor(log2 |synonyms|).
    fn capacity_of(&self, codon: &[Base]) -> usize {
        let n = self.synonyms(self.amino_acid(codon)).len();
        (usize::BITS - 1 - n.leading_zeros()) as usize
    }

    pub fn capacity(&self, bases: &[Base]) -> usize {
        bases.chunks_exact(3).map(|c| self.capacity_of(c)).sum()
    }
}

impl TryFrom<BTreeMap<String, char>> for CodonTable {
    type Error = Error;

    fn try_from(map: BTreeMap<String, char>) -> Result<Self> {
        let mut amino = ['\0'; 64];
        for (codon, aa) in &map {
            let bases = crate::seqio::parse_bases(codon)?;
            if bases.len() != 3 {
                return Err(Error::InvalidArgument(format!("`{codon}` is not a codon")));
            }
            amino[codon_index(&bases)] = aa.to_ascii_uppercase();
        }
        if let Some(i) = amino.iter().position(|&c| c == '\0') {
            return Err(Error::InvalidArgument(format!(
                "codon table is missing {}",
                codon_string(i)
            )));
        }
        Ok(Self { amino })
    }
}

impl From<CodonTable> for BTreeMap<String, char> {
    fn from(t: CodonTable) -> Self {
        (0..64).map(|i| (codon_string(i), t.amino[i])).collect()
    }
}

/// Embedding configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StegoScheme {
    /// Key-segment bit insertion over the 2-bit cover encoding.
    Keybits { key_length: usize },
    /// ASCII-coded message spliced into the cover at `offset`.
    Ascii {
        #[serde(default)]
        offset: usize,
    },
    /// Five-bit-coded message spliced into the cover at `offset`.
    Fivebit {
        #[serde(default)]
        offset: usize,
    },
    /// Synonymous-codon substitution over an in-frame coding cover.
    Codon {
        #[serde(default = "CodonTable::standard")]
        codon_table: CodonTable,
    },
}

impl StegoScheme {
    pub fn validate(&self) -> Result<()> {
        match self {
            StegoScheme::Keybits { key_length: 0 } => {
                Err(Error::InvalidArgument("key_length must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedResult {
    pub stego_sequence: DnaSequence,
    /// Indices into the stego sequence that differ from the cover (sorted).
    pub modified_positions: Vec<usize>,
    pub capacity_used_bits: usize,
}

/// Positions at which `stego` differs from `cover`, counting any extension.
fn diff_positions(cover: &[Base], stego: &[Base]) -> Vec<usize> {
    (0..stego.len()).filter(|&i| cover.get(i) != Some(&stego[i])).collect()
}

/// Key-segment embedding on a nucleotide cover. An odd-length stego bit
/// stream is padded with one zero bit so it maps back to nucleotides.
pub fn embed_keybits_dna(cover: &DnaSequence, message: &BitString, key_length: usize) -> Result<EmbedResult> {
    let mut bits = embed_keybits(&dna_to_bits(cover.bases()), message, key_length)?;
    if bits.len() % 2 == 1 {
        bits.push(false);
    }
    let stego = bits_to_dna(&bits)?;
    Ok(EmbedResult {
        modified_positions: diff_positions(cover.bases(), &stego),
        stego_sequence: cover.with_bases(stego)?,
        capacity_used_bits: message.len(),
    })
}

pub fn extract_keybits_dna(stego: &[Base], message_length: usize, key_length: usize) -> Result<BitString> {
    extract_keybits(&dna_to_bits(stego), message_length, key_length)
}

/// Splices an already-coded payload into the cover at `offset`.
pub fn insert_payload(cover: &DnaSequence, payload: &[Base], offset: usize) -> Result<EmbedResult> {
    if offset > cover.len() {
        return Err(Error::InvalidArgument(format!(
            "offset {offset} is past the cover end ({})",
            cover.len()
        )));
    }
    let mut bases = cover.bases()[..offset].to_vec();
    bases.extend_from_slice(payload);
    bases.extend_from_slice(&cover.bases()[offset..]);
    Ok(EmbedResult {
        stego_sequence: cover.with_bases(bases)?,
        modified_positions: (offset..offset + payload.len()).collect(),
        capacity_used_bits: 2 * payload.len(),
    })
}

pub fn extract_payload(stego: &[Base], offset: usize, len: usize) -> Result<&[Base]> {
    stego.get(offset..offset + len).ok_or(Error::Capacity {
        needed: 2 * (offset + len),
        available: 2 * stego.len(),
    })
}

/// Hides message bits by swapping codons for synonyms. For a codon whose
/// amino acid has synonym set S (sorted), the next floor(log2|S|) bits index
/// into the first 2^floor(log2|S|) codons of S. A trailing partial group is
/// zero-padded. The translated protein never changes.
pub fn embed_codon(cover: &DnaSequence, message: &BitString, table: &CodonTable) -> Result<EmbedResult> {
    if !cover.len().is_multiple_of(3) {
        return Err(Error::InvalidArgument(format!(
            "cover length {} is not a whole number of codons",
            cover.len()
        )));
    }
    let available = table.capacity(cover.bases());
    if message.len() > available {
        return Err(Error::Capacity { needed: message.len(), available });
    }
    let mut bases = cover.bases().to_vec();
    let mut cursor = 0usize;
    for codon in bases.chunks_exact_mut(3) {
        if cursor >= message.len() {
            break;
        }
        let width = table.capacity_of(codon);
        if width == 0 {
            continue;
        }
        let mut idx = 0usize;
        for k in 0..width {
            let bit = message.bits().get(cursor + k).copied().unwrap_or(false);
            idx = (idx << 1) | bit as usize;
        }
        cursor += width;
        let replacement = table.synonyms(table.amino_acid(codon))[idx];
        codon[0] = Base::from_index(replacement >> 4);
        codon[1] = Base::from_index((replacement >> 2) & 3);
        codon[2] = Base::from_index(replacement & 3);
    }
    Ok(EmbedResult {
        modified_positions: diff_positions(cover.bases(), &bases),
        stego_sequence: cover.with_bases(bases)?,
        capacity_used_bits: message.len(),
    })
}

pub fn extract_codon(stego: &[Base], message_length: usize, table: &CodonTable) -> Result<BitString> {
    let mut out = BitString::new();
    for codon in stego.chunks_exact(3) {
        if out.len() >= message_length {
            break;
        }
        let width = table.capacity_of(codon);
        if width == 0 {
            continue;
        }
        let syn = table.synonyms(table.amino_acid(codon));
        let idx = syn.iter().position(|&c| c == codon_index(codon)).expect("codon is its own synonym");
        for k in (0..width).rev() {
            out.push((idx >> k) & 1 == 1);
        }
    }
    if out.len() < message_length {
        return Err(Error::Capacity { needed: message_length, available: out.len() });
    }
    out.0.truncate(message_length);
    Ok(out)
}

/// Number of positions altered at `rate`: ceil(rate·len), with products that
/// are integral up to rounding (e.g. 0.07·100) taken as exact.
pub fn modification_count(rate: f64, len: usize) -> usize {
    let x = rate * len as f64;
    let n = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    (n.max(0.0) as usize).min(len)
}

/// Substitutes exactly `modification_count(rate, len)` distinct, uniformly
/// chosen positions, each with a uniformly chosen different base.
pub fn perturb(seq: &DnaSequence, rate: f64, seed: u64) -> Result<EmbedResult> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("rate {rate} is outside [0, 1]")));
    }
    let n = modification_count(rate, seq.len());
    let mut rng = substream(seed, Stream::Perturb, &[]);
    let mut positions = index::sample(&mut rng, seq.len(), n).into_vec();
    positions.sort_unstable();
    let mut bases = seq.bases().to_vec();
    for &p in &positions {
        let shift = rng.gen_range(1..4);
        bases[p] = Base::from_index(bases[p].index() + shift);
    }
    Ok(EmbedResult {
        stego_sequence: seq.with_bases(bases)?,
        modified_positions: positions,
        capacity_used_bits: 0,
    })
}

/// Hides a text or byte message with `scheme`. Bit-level schemes (keybits,
/// codon) carry the bytes' 8-bit MSB-first encoding; `fivebit` needs text
/// in [`FIVE_BIT_ALPHABET`].
pub fn embed_message(cover: &DnaSequence, scheme: &StegoScheme, message: &[u8]) -> Result<EmbedResult> {
    scheme.validate()?;
    match scheme {
        StegoScheme::Keybits { key_length } => embed_keybits_dna(cover, &BitString::from_bytes(message), *key_length),
        StegoScheme::Ascii { offset } => insert_payload(cover, &encode_ascii(message), *offset),
        StegoScheme::Fivebit { offset } => {
            let text = std::str::from_utf8(message).map_err(|e| Error::InvalidArgument(format!("message is not text: {e}")))?;
            insert_payload(cover, &encode_fivebit(text)?, *offset)
        }
        StegoScheme::Codon { codon_table } => embed_codon(cover, &BitString::from_bytes(message), codon_table),
    }
}

/// Recovers a message of `message_len` bytes (symbols for `fivebit`).
pub fn extract_message(stego: &[Base], scheme: &StegoScheme, message_len: usize) -> Result<Vec<u8>> {
    scheme.validate()?;
    match scheme {
        StegoScheme::Keybits { key_length } => extract_keybits_dna(stego, 8 * message_len, *key_length)?.to_bytes(),
        StegoScheme::Ascii { offset } => decode_ascii(extract_payload(stego, *offset, 4 * message_len)?),
        StegoScheme::Fivebit { offset } => {
            let nt = (5 * message_len).div_ceil(2);
            Ok(decode_fivebit(extract_payload(stego, *offset, nt)?)?.into_bytes())
        }
        StegoScheme::Codon { codon_table } => extract_codon(stego, 8 * message_len, codon_table)?.to_bytes(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::{bases_to_string, parse_bases, Label};
    use proptest::prelude::*;

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn seq(s: &str) -> DnaSequence {
        DnaSequence::from_str("c", s, Label::Exon).unwrap()
    }

    #[test]
    fn two_bit_codec_examples() {
        assert_eq!(
            dna_to_bits(&parse_bases("ACGGTTCCAATGC").unwrap()).to_string(),
            "00011010111101010000111001"
        );
        assert_eq!(dna_to_bits(&parse_bases("A").unwrap()).to_string(), "00");
        assert_eq!(dna_to_bits(&parse_bases("TGCA").unwrap()).to_string(), "11100100");
        assert_eq!(bases_to_string(&bits_to_dna(&bits("00001110")).unwrap()), "AATG");
        assert_eq!(bases_to_string(&bits_to_dna(&bits("000111")).unwrap()), "ACT");
        assert!(bits_to_dna(&bits("010")).is_err());
    }

    #[test]
    fn keybits_worked_example() {
        let cover = bits("00011010111101010000111001");
        let stego = embed_keybits(&cover, &bits("01001100"), 3).unwrap();
        assert_eq!(stego.to_string(), "0000111001010111101011000001011001");
        assert_eq!(extract_keybits(&stego, 8, 3).unwrap(), bits("01001100"));
        assert_eq!(strip_keybits(&stego, 8, 3).unwrap(), cover);
    }

    #[test]
    fn keybits_edge_cases() {
        let cover = bits("000000");
        assert_eq!(embed_keybits(&cover, &BitString::new(), 3).unwrap(), cover);
        assert_eq!(embed_keybits(&cover, &bits("11"), 3).unwrap().to_string(), "10001000");
        assert!(matches!(
            embed_keybits(&cover, &bits("111"), 3),
            Err(Error::Capacity { needed: 3, available: 2 })
        ));
        assert!(extract_keybits(&bits("1000"), 0, 3).unwrap().is_empty());
        assert!(extract_keybits(&bits("1000"), 2, 3).is_err());
        assert!(embed_keybits(&cover, &bits("1"), 0).is_err());
    }

    #[test]
    fn ascii_coding() {
        assert_eq!(bases_to_string(&encode_ascii(b"A")), "CAAC");
        assert_eq!(bases_to_string(&encode_ascii(&[0])), "AAAA");
        assert_eq!(bases_to_string(&encode_ascii(&[255])), "TTTT");
        assert_eq!(decode_ascii(&encode_ascii(b"hidden!")).unwrap(), b"hidden!");
    }

    #[test]
    fn fivebit_coding() {
        assert_eq!(bases_to_string(&encode_fivebit("A").unwrap()), "AAA");
        assert_eq!(bases_to_string(&encode_fivebit("B").unwrap()), "AAG");
        assert!(encode_fivebit("").unwrap().is_empty());
        assert!(matches!(encode_fivebit("A1"), Err(Error::Alphabet('1'))));
        for text in ["HELLO, WORLD!", "AB", "Q", "DNA-CRYPT?"] {
            assert_eq!(decode_fivebit(&encode_fivebit(text).unwrap()).unwrap(), text);
        }
    }

    #[test]
    fn codon_examples() {
        let table = CodonTable::standard();
        let err = embed_codon(&seq("ATGATG"), &bits("1"), &table).unwrap_err();
        assert!(matches!(err, Error::Capacity { needed: 1, available: 0 }));

        let r = embed_codon(&seq("CTT"), &bits("01"), &table).unwrap();
        assert_eq!(r.stego_sequence.to_bases_string(), "CTC");
        assert_eq!(r.modified_positions, vec![2]);
        assert_eq!(extract_codon(r.stego_sequence.bases(), 2, &table).unwrap(), bits("01"));

        let r = embed_codon(&seq("CTTGGA"), &BitString::new(), &table).unwrap();
        assert_eq!(r.stego_sequence.to_bases_string(), "CTTGGA");
        assert!(r.modified_positions.is_empty());
        assert!(embed_codon(&seq("CTTG"), &bits("1"), &table).is_err());
    }

    #[test]
    fn standard_table_shape() {
        let t = CodonTable::standard();
        assert_eq!(t.translate(&parse_bases("ATGTAATGG").unwrap()), "M*W");
        // Leu/Ser/Arg have six codons, stops three.
        for (aa, n) in [('L', 6), ('S', 6), ('R', 6), ('*', 3), ('M', 1), ('W', 1), ('G', 4)] {
            assert_eq!(t.synonyms(aa).len(), n, "{aa}");
        }
        let map: BTreeMap<String, char> = t.clone().into();
        assert_eq!(CodonTable::try_from(map).unwrap(), t);
        let mut partial: BTreeMap<String, char> = t.into();
        partial.remove("TTT");
        assert!(CodonTable::try_from(partial).is_err());
    }

    #[test]
    fn perturb_counts_are_exact() {
        let s = DnaSequence::new("p", vec![Base::A; 1000], Label::Intron).unwrap();
        let r = perturb(&s, 0.0, 1).unwrap();
        assert_eq!(r.stego_sequence, s);
        assert!(r.modified_positions.is_empty());

        let r = perturb(&s, 0.01, 1).unwrap();
        let hamming = s.bases().iter().zip(r.stego_sequence.bases()).filter(|(a, b)| a != b).count();
        assert_eq!(hamming, 10);

        let r = perturb(&s, 1.0, 1).unwrap();
        assert!(r.stego_sequence.bases().iter().all(|&b| b != Base::A));
        assert!(perturb(&s, 1.5, 1).is_err());
        assert_eq!(perturb(&s, 0.3, 9).unwrap(), perturb(&s, 0.3, 9).unwrap());
    }

    #[test]
    fn rate_grid_hamming_distance() {
        for len in [100usize, 1000] {
            let s = DnaSequence::new("p", (0..len).map(Base::from_index).collect(), Label::Exon).unwrap();
            for pct in 1..=10u32 {
                let rate = pct as f64 / 100.0;
                let r = perturb(&s, rate, pct as u64).unwrap();
                let hamming = s.bases().iter().zip(r.stego_sequence.bases()).filter(|(a, b)| a != b).count();
                assert_eq!(hamming, pct as usize * len / 100, "rate {rate} len {len}");
                assert_eq!(r.modified_positions.len(), hamming);
            }
        }
    }

    #[test]
    fn keybits_on_dna_matches_worked_example() {
        let r = embed_keybits_dna(&seq("ACGGTTCCAATGC"), &bits("01001100"), 3).unwrap();
        let out = r.stego_sequence.to_bases_string();
        assert_eq!(out, "AATGCCCTGGTAACCGC");
        assert_eq!(&out[..16], "AATGCCCTGGTAACCG");
        assert_eq!(extract_keybits_dna(r.stego_sequence.bases(), 8, 3).unwrap(), bits("01001100"));
    }

    #[test]
    fn payload_splicing() {
        let payload = encode_ascii(b"hi");
        let r = insert_payload(&seq("ACGTACGT"), &payload, 4).unwrap();
        assert_eq!(r.modified_positions, (4..12).collect::<Vec<_>>());
        let got = extract_payload(r.stego_sequence.bases(), 4, payload.len()).unwrap();
        assert_eq!(decode_ascii(got).unwrap(), b"hi");
        assert!(insert_payload(&seq("ACGT"), &payload, 5).is_err());
    }

    #[test]
    fn scheme_json_shape() {
        let s: StegoScheme = serde_json::from_str(r#"{"kind":"keybits","key_length":3}"#).unwrap();
        assert_eq!(s, StegoScheme::Keybits { key_length: 3 });
        let s: StegoScheme = serde_json::from_str(r#"{"kind":"codon"}"#).unwrap();
        assert_eq!(s, StegoScheme::Codon { codon_table: CodonTable::standard() });
        assert!(StegoScheme::Keybits { key_length: 0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn keybits_round_trip(
            cover in prop::collection::vec(any::<bool>(), 0..300),
            key in 1usize..8,
            msg_seed in prop::collection::vec(any::<bool>(), 0..300),
        ) {
            let cover = BitString::from_bits(cover);
            let cap = cover.len() / key;
            let message = BitString::from_bits(msg_seed.into_iter().take(cap).collect());
            let stego = embed_keybits(&cover, &message, key).unwrap();
            prop_assert_eq!(stego.len(), cover.len() + message.len());
            prop_assert_eq!(extract_keybits(&stego, message.len(), key).unwrap(), message.clone());
            prop_assert_eq!(strip_keybits(&stego, message.len(), key).unwrap(), cover);
        }

        #[test]
        fn codec_round_trip(idx in prop::collection::vec(0usize..4, 0..400)) {
            let bases: Vec<Base> = idx.into_iter().map(Base::from_index).collect();
            let b = dna_to_bits(&bases);
            prop_assert_eq!(b.len(), 2 * bases.len());
            prop_assert_eq!(bits_to_dna(&b).unwrap(), bases);
        }
    }

    #[test]
    fn message_round_trip_for_every_scheme() {
        let cover = DnaSequence::from_str("c", &"ATGGCTGCAGGTCTGAAACGTTCCACC".repeat(8), Label::Exon).unwrap();
        for (scheme, msg) in [
            (StegoScheme::Keybits { key_length: 4 }, &b"Hi!"[..]),
            (StegoScheme::Ascii { offset: 5 }, &b"Hi!"[..]),
            (StegoScheme::Fivebit { offset: 0 }, &b"HELLO, DNA"[..]),
            (StegoScheme::Codon { codon_table: CodonTable::standard() }, &b"ok"[..]),
        ] {
            let r = embed_message(&cover, &scheme, msg).unwrap();
            assert_eq!(extract_message(r.stego_sequence.bases(), &scheme, msg.len()).unwrap(), msg, "{scheme:?}");
        }
        assert!(embed_message(&cover, &StegoScheme::Fivebit { offset: 0 }, b"a_b").is_err());
    }
}
