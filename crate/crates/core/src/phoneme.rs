//! CMU/ARPAbet phoneme inventory, articulatory profiles, and the phoneme
//! similarity function used by alignment, masking, and the weighted error
//! metrics.
//!
//! Similarity between two phonemes is the fraction of the eight articulatory
//! features on which their profiles agree. A shared "not applicable" counts
//! as agreement only when the phoneme type (vowel/consonant) also agrees, so
//! vowels and consonants never pick up spurious agreement from features that
//! apply to neither.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The canonical table shipped with the crate: 39 stress-less ARPAbet
/// phonemes with one articulatory profile each.
pub const DEFAULT_TABLE: &str = include_str!("../data/cmu_phonemes.tsv");

/// Symbol used for the CTC blank in file formats and CSV headers.
pub const BLANK_SYMBOL: &str = "<blank>";

/// Number of articulatory features a profile carries.
pub const NUM_FEATURES: usize = 8;

/// Index into the vocabulary: phonemes come first, blank is last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhonemeId(pub usize);

impl fmt::Display for PhonemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhonemeType {
    Vowel,
    Consonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VowelLength {
    Short,
    Long,
    Diphthong,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Height {
    High,
    Mid,
    Low,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frontness {
    Front,
    Central,
    Back,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rounding {
    Rounded,
    Unrounded,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Manner {
    Stop,
    Fricative,
    Affricate,
    Nasal,
    Liquid,
    Glide,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Place {
    Bilabial,
    Labiodental,
    Dental,
    Alveolar,
    Postalveolar,
    Palatal,
    Velar,
    Glottal,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Voicing {
    Voiced,
    Voiceless,
    NotApplicable,
}

/// The eight articulatory features of one phoneme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArticulatoryProfile {
    pub phoneme_type: PhonemeType,
    pub vowel_length: VowelLength,
    pub height: Height,
    pub frontness: Frontness,
    pub rounding: Rounding,
    pub manner: Manner,
    pub place: Place,
    pub voicing: Voicing,
}

impl ArticulatoryProfile {
    /// Count of features (out of 8) on which `self` and `other` agree.
    ///
    /// A pair of `NotApplicable` values agrees only when the phoneme types
    /// agree; a `NotApplicable` against a concrete value never agrees.
    pub fn agreement(&self, other: &ArticulatoryProfile) -> u32 {
        let types_agree = self.phoneme_type == other.phoneme_type;
        let mut count = u32::from(types_agree);
        count += feature_agrees(
            self.vowel_length,
            other.vowel_length,
            VowelLength::NotApplicable,
            types_agree,
        );
        count += feature_agrees(self.height, other.height, Height::NotApplicable, types_agree);
        count += feature_agrees(
            self.frontness,
            other.frontness,
            Frontness::NotApplicable,
            types_agree,
        );
        count += feature_agrees(
            self.rounding,
            other.rounding,
            Rounding::NotApplicable,
            types_agree,
        );
        count += feature_agrees(self.manner, other.manner, Manner::NotApplicable, types_agree);
        count += feature_agrees(self.place, other.place, Place::NotApplicable, types_agree);
        count += feature_agrees(
            self.voicing,
            other.voicing,
            Voicing::NotApplicable,
            types_agree,
        );
        count
    }
}

fn feature_agrees<T: PartialEq + Copy>(a: T, b: T, na: T, types_agree: bool) -> u32 {
    if a == na && b == na {
        u32::from(types_agree)
    } else {
        u32::from(a == b)
    }
}

/// Pairwise similarities over the phoneme inventory (blank excluded).
///
/// Symmetric, unit diagonal, all entries in [0, 1].
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityTable {
    /// Number of phonemes the table covers.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Similarity of two phonemes; errors if either id is the blank or out
    /// of range.
    pub fn get(&self, p: PhonemeId, q: PhonemeId) -> Result<f64> {
        if p.0 >= self.n || q.0 >= self.n {
            return Err(Error::BlankNotAllowed(format!(
                "similarity is defined on phonemes 0..{}, got ({}, {})",
                self.n, p.0, q.0
            )));
        }
        Ok(self.values[p.0 * self.n + q.0])
    }
}

#[derive(Debug)]
struct Entry {
    symbol: String,
    profile: ArticulatoryProfile,
}

/// The phoneme inventory: symbols, dense ids, profiles, and the similarity
/// function. Immutable after construction.
#[derive(Debug)]
pub struct Inventory {
    entries: Vec<Entry>,
    by_symbol: HashMap<String, PhonemeId>,
}

impl Inventory {
    /// The built-in 39-phoneme inventory.
    ///
    /// The embedded table is validated by the crate's tests, so this cannot
    /// fail at runtime.
    pub fn default_inventory() -> Inventory {
        Inventory::from_table_str(DEFAULT_TABLE).expect("embedded phoneme table is valid")
    }

    /// Parse an inventory from the documented tab-separated table format.
    pub fn from_table_str(text: &str) -> Result<Inventory> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut by_symbol: HashMap<String, PhonemeId> = HashMap::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 1 + NUM_FEATURES {
                return Err(Error::TableParse {
                    line: line_no,
                    msg: format!(
                        "expected symbol plus {} features, got {} fields",
                        NUM_FEATURES,
                        fields.len()
                    ),
                });
            }
            let symbol = fields[0].to_ascii_uppercase();
            if !CMU_SYMBOLS.contains(&symbol.as_str()) {
                return Err(Error::TableParse {
                    line: line_no,
                    msg: format!("unknown phoneme symbol '{symbol}'"),
                });
            }
            if by_symbol.contains_key(&symbol) {
                return Err(Error::TableParse {
                    line: line_no,
                    msg: format!("duplicate phoneme symbol '{symbol}'"),
                });
            }
            let profile = parse_profile(&fields[1..], &symbol, line_no)?;
            by_symbol.insert(symbol.clone(), PhonemeId(entries.len()));
            entries.push(Entry { symbol, profile });
        }

        if entries.len() != CMU_SYMBOLS.len() {
            let missing: Vec<&str> = CMU_SYMBOLS
                .iter()
                .filter(|s| !by_symbol.contains_key(**s))
                .copied()
                .collect();
            return Err(Error::TableParse {
                line: text.lines().count(),
                msg: format!("table incomplete, missing: {}", missing.join(" ")),
            });
        }

        Ok(Inventory { entries, by_symbol })
    }

    pub fn from_table_file(path: &std::path::Path) -> Result<Inventory> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Inventory::from_table_str(&text)
    }

    /// Number of phonemes (excluding blank).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Vocabulary size: phonemes plus the blank.
    pub fn vocab_size(&self) -> usize {
        self.entries.len() + 1
    }

    /// The reserved blank id (one past the last phoneme).
    pub fn blank(&self) -> PhonemeId {
        PhonemeId(self.entries.len())
    }

    pub fn is_blank(&self, id: PhonemeId) -> bool {
        id == self.blank()
    }

    /// Resolve a symbol to its id. Stress digits are stripped ("IH0" → "IH");
    /// `<blank>` resolves to the blank id.
    pub fn id(&self, symbol: &str) -> Result<PhonemeId> {
        if symbol == BLANK_SYMBOL {
            return Ok(self.blank());
        }
        let stripped: String = symbol
            .trim()
            .chars()
            .filter(|c| !c.is_ascii_digit())
            .collect::<String>()
            .to_ascii_uppercase();
        self.by_symbol
            .get(&stripped)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }

    /// Symbol for an id; the blank renders as `<blank>`.
    pub fn symbol(&self, id: PhonemeId) -> &str {
        if id.0 < self.entries.len() {
            &self.entries[id.0].symbol
        } else {
            BLANK_SYMBOL
        }
    }

    pub fn profile(&self, id: PhonemeId) -> Result<&ArticulatoryProfile> {
        self.entries
            .get(id.0)
            .map(|e| &e.profile)
            .ok_or_else(|| Error::BlankNotAllowed(format!("no profile for id {}", id.0)))
    }

    /// All phoneme ids in table order (blank excluded).
    pub fn phoneme_ids(&self) -> impl Iterator<Item = PhonemeId> + '_ {
        (0..self.entries.len()).map(PhonemeId)
    }

    /// Feature-agreement similarity in [0, 1]; blank is rejected.
    pub fn similarity(&self, p: PhonemeId, q: PhonemeId) -> Result<f64> {
        let a = self.profile(p)?;
        let b = self.profile(q)?;
        Ok(f64::from(a.agreement(b)) / NUM_FEATURES as f64)
    }

    /// Materialize all pairwise similarities.
    pub fn similarity_table(&self) -> SimilarityTable {
        let n = self.entries.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = f64::from(self.entries[i].profile.agreement(&self.entries[j].profile))
                    / NUM_FEATURES as f64;
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        SimilarityTable { n, values }
    }

    /// Parse a whitespace-separated ARPAbet sequence ("IH N S ER T").
    pub fn parse_sequence(&self, text: &str) -> Result<Vec<PhonemeId>> {
        text.split_whitespace().map(|tok| self.id(tok)).collect()
    }

    /// Render a sequence of ids back to symbols.
    pub fn render_sequence(&self, ids: &[PhonemeId]) -> Vec<String> {
        ids.iter().map(|&id| self.symbol(id).to_string()).collect()
    }
}

fn parse_profile(fields: &[&str], symbol: &str, line: usize) -> Result<ArticulatoryProfile> {
    let err = |msg: String| Error::TableParse { line, msg };

    let phoneme_type = match fields[0].to_ascii_lowercase().as_str() {
        "vowel" => PhonemeType::Vowel,
        "consonant" => PhonemeType::Consonant,
        other => return Err(err(format!("'{symbol}': bad phoneme type '{other}'"))),
    };
    let vowel_length = match fields[1].to_ascii_lowercase().as_str() {
        "short" => VowelLength::Short,
        "long" => VowelLength::Long,
        "diphthong" => VowelLength::Diphthong,
        "na" => VowelLength::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad vowel length '{other}'"))),
    };
    let height = match fields[2].to_ascii_lowercase().as_str() {
        "high" => Height::High,
        "mid" => Height::Mid,
        "low" => Height::Low,
        "na" => Height::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad height '{other}'"))),
    };
    let frontness = match fields[3].to_ascii_lowercase().as_str() {
        "front" => Frontness::Front,
        "central" => Frontness::Central,
        "back" => Frontness::Back,
        "na" => Frontness::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad frontness '{other}'"))),
    };
    let rounding = match fields[4].to_ascii_lowercase().as_str() {
        "rounded" => Rounding::Rounded,
        "unrounded" => Rounding::Unrounded,
        "na" => Rounding::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad rounding '{other}'"))),
    };
    let manner = match fields[5].to_ascii_lowercase().as_str() {
        "stop" => Manner::Stop,
        "fricative" => Manner::Fricative,
        "affricate" => Manner::Affricate,
        "nasal" => Manner::Nasal,
        "liquid" => Manner::Liquid,
        "glide" => Manner::Glide,
        "na" => Manner::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad manner '{other}'"))),
    };
    let place = match fields[6].to_ascii_lowercase().as_str() {
        "bilabial" => Place::Bilabial,
        "labiodental" => Place::Labiodental,
        "dental" => Place::Dental,
        "alveolar" => Place::Alveolar,
        "postalveolar" => Place::Postalveolar,
        "palatal" => Place::Palatal,
        "velar" => Place::Velar,
        "glottal" => Place::Glottal,
        "na" => Place::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad place '{other}'"))),
    };
    let voicing = match fields[7].to_ascii_lowercase().as_str() {
        "voiced" => Voicing::Voiced,
        "voiceless" => Voicing::Voiceless,
        "na" => Voicing::NotApplicable,
        other => return Err(err(format!("'{symbol}': bad voicing '{other}'"))),
    };

    let profile = ArticulatoryProfile {
        phoneme_type,
        vowel_length,
        height,
        frontness,
        rounding,
        manner,
        place,
        voicing,
    };

    // Vowels carry the four vowel features and NA elsewhere; consonants the
    // reverse. A required feature left NA is reported as missing.
    match phoneme_type {
        PhonemeType::Vowel => {
            if vowel_length == VowelLength::NotApplicable
                || height == Height::NotApplicable
                || frontness == Frontness::NotApplicable
                || rounding == Rounding::NotApplicable
            {
                return Err(err(format!("'{symbol}': vowel is missing a vowel feature")));
            }
            if manner != Manner::NotApplicable
                || place != Place::NotApplicable
                || voicing != Voicing::NotApplicable
            {
                return Err(err(format!(
                    "'{symbol}': vowel must use NA for manner/place/voicing"
                )));
            }
        }
        PhonemeType::Consonant => {
            if manner == Manner::NotApplicable {
                return Err(err(format!("'{symbol}': consonant is missing manner")));
            }
            if place == Place::NotApplicable {
                return Err(err(format!("'{symbol}': consonant is missing place")));
            }
            if voicing == Voicing::NotApplicable {
                return Err(err(format!("'{symbol}': consonant is missing voicing")));
            }
            if vowel_length != VowelLength::NotApplicable
                || height != Height::NotApplicable
                || frontness != Frontness::NotApplicable
                || rounding != Rounding::NotApplicable
            {
                return Err(err(format!(
                    "'{symbol}': consonant must use NA for vowel features"
                )));
            }
        }
    }

    Ok(profile)
}

/// The 39 stress-less CMU/ARPAbet symbols.
pub const CMU_SYMBOLS: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW", "B",
    "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> Inventory {
        Inventory::default_inventory()
    }

    #[test]
    fn default_inventory_has_39_phonemes_and_blank() {
        let inv = inv();
        assert_eq!(inv.len(), 39);
        assert_eq!(inv.vocab_size(), 40);
        assert_eq!(inv.blank(), PhonemeId(39));
        assert_eq!(inv.symbol(inv.blank()), BLANK_SYMBOL);
    }

    #[test]
    fn stress_digits_are_stripped() {
        let inv = inv();
        assert_eq!(inv.id("IH0").unwrap(), inv.id("IH").unwrap());
        assert_eq!(inv.id("ih1").unwrap(), inv.id("IH").unwrap());
        assert_eq!(inv.id("ER2").unwrap(), inv.id("ER").unwrap());
    }

    #[test]
    fn unknown_symbol_is_an_error() {
        let inv = inv();
        assert!(matches!(inv.id("QX"), Err(Error::UnknownSymbol(_))));
    }

    #[test]
    fn duplicate_row_is_a_parse_error() {
        let mut text = String::from(DEFAULT_TABLE);
        text.push_str("AA\tvowel\tlong\tlow\tback\tunrounded\tNA\tNA\tNA\n");
        let err = Inventory::from_table_str(&text).unwrap_err();
        match err {
            Error::TableParse { msg, .. } => assert!(msg.contains("duplicate"), "{msg}"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_feature_is_a_parse_error() {
        // Replace the S row's voicing with NA.
        let text = DEFAULT_TABLE.replace(
            "S\tconsonant\tNA\tNA\tNA\tNA\tfricative\talveolar\tvoiceless",
            "S\tconsonant\tNA\tNA\tNA\tNA\tfricative\talveolar\tNA",
        );
        let err = Inventory::from_table_str(&text).unwrap_err();
        match err {
            Error::TableParse { msg, .. } => {
                assert!(msg.contains("voicing") || msg.contains("missing"), "{msg}")
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn wrong_field_count_is_a_parse_error() {
        let err = Inventory::from_table_str("S\tconsonant\tNA\tNA\n").unwrap_err();
        assert!(matches!(err, Error::TableParse { line: 1, .. }));
    }

    #[test]
    fn self_similarity_is_one() {
        let inv = inv();
        for p in inv.phoneme_ids() {
            assert_eq!(inv.similarity(p, p).unwrap(), 1.0);
        }
    }

    #[test]
    fn s_z_similarity_is_seven_eighths() {
        // S and Z differ only in voicing under the shipped profiles.
        let inv = inv();
        let s = inv.id("S").unwrap();
        let z = inv.id("Z").unwrap();
        assert_eq!(inv.similarity(s, z).unwrap(), 0.875);
    }

    #[test]
    fn vowel_consonant_similarity_is_below_half() {
        let inv = inv();
        let ih = inv.id("IH").unwrap();
        let b = inv.id("B").unwrap();
        let s = inv.similarity(ih, b).unwrap();
        assert!(s < 0.5, "similarity(IH, B) = {s}");
        assert_eq!(s, 0.0);
    }

    #[test]
    fn blank_similarity_is_a_domain_error() {
        let inv = inv();
        let ih = inv.id("IH").unwrap();
        assert!(inv.similarity(ih, inv.blank()).is_err());
        assert!(inv.similarity(inv.blank(), ih).is_err());
    }

    #[test]
    fn table_matches_pointwise_similarity_and_invariants() {
        let inv = inv();
        let table = inv.similarity_table();
        let s = inv.id("S").unwrap();
        let z = inv.id("Z").unwrap();
        assert_eq!(table.get(s, z).unwrap(), inv.similarity(s, z).unwrap());
        for p in inv.phoneme_ids() {
            assert_eq!(table.get(p, p).unwrap(), 1.0);
            for q in inv.phoneme_ids() {
                let v = table.get(p, q).unwrap();
                assert!((0.0..=1.0).contains(&v));
                assert_eq!(v, table.get(q, p).unwrap());
            }
        }
        assert!(table.get(inv.blank(), s).is_err());
    }

    #[test]
    fn distinct_phonemes_have_distinct_profiles() {
        let inv = inv();
        for p in inv.phoneme_ids() {
            for q in inv.phoneme_ids() {
                if p != q {
                    assert_ne!(
                        inv.profile(p).unwrap(),
                        inv.profile(q).unwrap(),
                        "{} and {} share a profile",
                        inv.symbol(p),
                        inv.symbol(q)
                    );
                }
            }
        }
    }

    #[test]
    fn single_feature_change_moves_similarity_by_at_most_one_eighth() {
        // Mutating one non-type feature between concrete values changes the
        // agreement count by 0 or 1 against any fixed profile.
        let inv = inv();
        for p in inv.phoneme_ids() {
            let base = *inv.profile(p).unwrap();
            let mut mutants: Vec<ArticulatoryProfile> = Vec::new();
            match base.phoneme_type {
                PhonemeType::Vowel => {
                    for h in [Height::High, Height::Mid, Height::Low] {
                        let mut m = base;
                        m.height = h;
                        mutants.push(m);
                    }
                    for r in [Rounding::Rounded, Rounding::Unrounded] {
                        let mut m = base;
                        m.rounding = r;
                        mutants.push(m);
                    }
                }
                PhonemeType::Consonant => {
                    for v in [Voicing::Voiced, Voicing::Voiceless] {
                        let mut m = base;
                        m.voicing = v;
                        mutants.push(m);
                    }
                    for mm in [Manner::Stop, Manner::Nasal, Manner::Glide] {
                        let mut m = base;
                        m.manner = mm;
                        mutants.push(m);
                    }
                }
            }
            for q in inv.phoneme_ids() {
                let other = inv.profile(q).unwrap();
                let s0 = base.agreement(other);
                for m in &mutants {
                    let s1 = m.agreement(other);
                    let delta = s0.abs_diff(s1);
                    assert!(delta <= 1, "delta {delta} for {:?} vs {:?}", m, other);
                }
            }
        }
    }
}
