//! Deterministic, collision-free gibberish form generation.
//!
//! Multiword forms are translated word by word through a shared word-level
//! sub-map, so "icing sugar" and "sugar" use the same gibberish token for
//! "sugar", and separators (spaces, hyphens) survive unchanged.
//!
//! Generation is keyed, not sequential: a word's candidate at retry `r`
//! depends only on (map seed, word bytes, r), hashed with FNV-1a-64 and
//! expanded with SplitMix64. Candidates are syllable chains drawn from fixed
//! onset/nucleus/coda tables; a candidate colliding with a reserved form, a
//! banned word or an existing output is retried with `r + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{fold, PartOfSpeech};

const ONSETS: [&str; 34] = [
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
    "br", "cr", "dr", "fr", "gr", "pr", "tr", "st", "sh", "ch", "bl", "cl", "fl", "gl", "pl",
    "sl",
];
const NUCLEI: [&str; 10] = ["a", "e", "i", "o", "u", "ou", "oa", "ai", "ee", "io"];
const CODAS: [&str; 12] = ["", "", "n", "r", "s", "t", "l", "m", "ck", "st", "mp", "nd"];

const MAX_RETRIES: u32 = 1000;

fn fnv1a64(chunks: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for chunk in chunks {
        for byte in *chunk {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn pick<'a>(&mut self, table: &[&'a str]) -> &'a str {
        table[(self.next() % table.len() as u64) as usize]
    }
}

/// Bijective map from case-folded written forms to gibberish forms.
///
/// Writes must be serialized by the caller; lookups on a frozen map are
/// concurrency-safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormMap {
    seed: u64,
    entries: BTreeMap<String, String>,
    reverse: BTreeMap<String, String>,
    word_map: BTreeMap<String, String>,
    word_reverse: BTreeMap<String, String>,
    reserved: BTreeSet<String>,
    banned_words: BTreeSet<String>,
    pos_first_seen: BTreeMap<String, PartOfSpeech>,
}

#[derive(Serialize, Deserialize)]
struct MapHeader {
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct MapRecord {
    form: String,
    gibberish: String,
    pos: PartOfSpeech,
}

impl FormMap {
    /// `reserved` is the set of case-folded in-domain written forms; no
    /// output will ever spell one of them. Constituent words of multiword
    /// reserved forms are banned as well, so a substituted definition can
    /// never re-create a reserved form across a replacement boundary.
    pub fn new(seed: u64, reserved: BTreeSet<String>) -> Self {
        let mut banned_words = BTreeSet::new();
        for form in &reserved {
            for word in split_form(form).0 {
                banned_words.insert(word.to_owned());
            }
        }
        FormMap {
            seed,
            entries: BTreeMap::new(),
            reverse: BTreeMap::new(),
            word_map: BTreeMap::new(),
            word_reverse: BTreeMap::new(),
            reserved,
            banned_words,
            pos_first_seen: BTreeMap::new(),
        }
    }

    /// Additionally forbids outputs equal to any of `tokens`. The propagator
    /// passes every word occurring in a member definition, which rules out a
    /// gibberish word shadowing untouched English text during inversion.
    pub fn ban_tokens(&mut self, tokens: impl IntoIterator<Item = String>) {
        self.banned_words.extend(tokens.into_iter().map(|t| fold(&t)));
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reserved(&self) -> &BTreeSet<String> {
        &self.reserved
    }

    pub fn get(&self, form: &str) -> Option<&str> {
        self.entries.get(&fold(form)).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Gibberish forms, i.e. the image of the map.
    pub fn image(&self) -> impl Iterator<Item = &str> {
        self.reverse.keys().map(String::as_str)
    }

    /// Translate `form`, generating and registering a fresh gibberish form on
    /// first sight and returning the existing one afterwards.
    pub fn gibberish_form(&mut self, form: &str, pos: PartOfSpeech) -> Result<String> {
        let folded = fold(form);
        if folded.is_empty() {
            return Err(Error::EmptyForm);
        }
        if let Some(existing) = self.entries.get(&folded) {
            return Ok(existing.clone());
        }
        let (words, seps) = split_form(&folded);
        let mut out = String::new();
        for (i, word) in words.iter().enumerate() {
            let gib = match self.word_map.get(*word) {
                Some(g) => g.clone(),
                None => {
                    let g = self.generate_word(word)?;
                    self.word_map.insert((*word).to_owned(), g.clone());
                    self.word_reverse.insert(g.clone(), (*word).to_owned());
                    g
                }
            };
            out.push_str(&gib);
            if i < seps.len() {
                out.push_str(seps[i]);
            }
        }
        self.entries.insert(folded.clone(), out.clone());
        self.reverse.insert(out.clone(), folded.clone());
        self.pos_first_seen.insert(folded, pos);
        Ok(out)
    }

    fn generate_word(&self, word: &str) -> Result<String> {
        for retry in 0..MAX_RETRIES {
            let candidate = keyed_word(self.seed, word, retry);
            let taken = self.reserved.contains(&candidate)
                || self.banned_words.contains(&candidate)
                || self.word_reverse.contains_key(&candidate)
                || self.reverse.contains_key(&candidate);
            if !taken {
                return Ok(candidate);
            }
        }
        Err(Error::GenerationExhausted {
            word: word.to_owned(),
            retries: MAX_RETRIES,
        })
    }

    /// The unique case-folded form mapped to `gibberish`.
    pub fn invert(&self, gibberish: &str) -> Result<&str> {
        self.reverse
            .get(&fold(gibberish))
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownGibberish(gibberish.to_owned()))
    }

    /// Word-level inversion, used when a gibberish token appears outside a
    /// full form (e.g. inside a model answer).
    pub fn invert_word(&self, gibberish: &str) -> Option<&str> {
        self.word_reverse.get(&fold(gibberish)).map(String::as_str)
    }

    /// Best-effort inversion of an arbitrary term: the whole string when it
    /// is in the image, otherwise word by word with unmapped words kept
    /// verbatim.
    pub fn invert_term(&self, term: &str) -> String {
        let folded = fold(term);
        if let Some(form) = self.reverse.get(&folded) {
            return form.clone();
        }
        let (words, seps) = split_form(&folded);
        let mut out = String::new();
        for (i, word) in words.iter().enumerate() {
            match self.word_reverse.get(*word) {
                Some(orig) => out.push_str(orig),
                None => out.push_str(word),
            }
            if i < seps.len() {
                out.push_str(seps[i]);
            }
        }
        out
    }

    /// Checks injectivity: every entry maps to a distinct output.
    pub fn assert_bijective(&self) -> bool {
        self.entries.len() == self.reverse.len()
    }

    /// Serialize as a header line with the seed followed by one record per
    /// entry, sorted by form.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, &MapHeader { seed: self.seed })?;
        w.write_all(b"\n")?;
        for (form, gibberish) in &self.entries {
            let record = MapRecord {
                form: form.clone(),
                gibberish: gibberish.clone(),
                pos: self.pos_first_seen[form],
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a serialized map for lookup and inversion. The word-level
    /// sub-map is rebuilt by aligning each form with its gibberish output.
    /// Reserved/banned sets are not stored; a reloaded map replays an
    /// already-seen insertion sequence identically but must not be used to
    /// translate fresh forms.
    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::CorruptArtifact("form map: missing header".into()))??;
        let header: MapHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::CorruptArtifact(format!("form map header: {e}")))?;
        let mut map = FormMap::new(header.seed, BTreeSet::new());
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: MapRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 2,
                message: e.to_string(),
            })?;
            let (words, _) = split_form(&record.form);
            let (gib_words, _) = split_form(&record.gibberish);
            if words.len() != gib_words.len() {
                return Err(Error::CorruptArtifact(format!(
                    "form map: word count mismatch for `{}`",
                    record.form
                )));
            }
            for (w, g) in words.iter().zip(&gib_words) {
                if let Some(existing) = map.word_map.get(*w) {
                    if existing != g {
                        return Err(Error::CorruptArtifact(format!(
                            "form map: word `{w}` maps to both `{existing}` and `{g}`"
                        )));
                    }
                } else {
                    map.word_map.insert((*w).to_owned(), (*g).to_owned());
                    map.word_reverse.insert((*g).to_owned(), (*w).to_owned());
                }
            }
            if map
                .reverse
                .insert(record.gibberish.clone(), record.form.clone())
                .is_some()
            {
                return Err(Error::CorruptArtifact(format!(
                    "form map: duplicate gibberish `{}`",
                    record.gibberish
                )));
            }
            map.entries.insert(record.form.clone(), record.gibberish);
            map.pos_first_seen.insert(record.form, record.pos);
        }
        Ok(map)
    }
}

/// Split a form into words and the separators between them. Words are
/// separated by single spaces or hyphens; any other character stays inside
/// its word.
fn split_form(form: &str) -> (Vec<&str>, Vec<&str>) {
    let mut words = Vec::new();
    let mut seps = Vec::new();
    let mut word_start = 0;
    for (i, c) in form.char_indices() {
        if c == ' ' || c == '-' {
            words.push(&form[word_start..i]);
            seps.push(&form[i..i + c.len_utf8()]);
            word_start = i + c.len_utf8();
        }
    }
    words.push(&form[word_start..]);
    (words, seps)
}

/// The deterministic candidate word for (`seed`, `word`, `retry`).
fn keyed_word(seed: u64, word: &str, retry: u32) -> String {
    let state = fnv1a64(&[
        &seed.to_le_bytes(),
        word.as_bytes(),
        &u64::from(retry).to_le_bytes(),
    ]);
    let mut rng = SplitMix64(state);
    let syllables = (2 + word.chars().count() / 4).min(5);
    let mut out = String::new();
    for _ in 0..syllables {
        out.push_str(rng.pick(&ONSETS));
        out.push_str(rng.pick(&NUCLEI));
        out.push_str(rng.pick(&CODAS));
    }
    out
}
