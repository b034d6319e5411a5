use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use super::SlotError;
use crate::dataset::SlotKind;
use crate::sparql::is_valid_iri;

/// Surface form to predicate/class IRIs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    map: BTreeMap<String, Vec<String>>,
    /// Longest key in words.
    max_words: usize,
}

/// Object entries in file order, duplicates kept.
struct Entries(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of surface form to IRI list")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Vec<String>>()? {
                    out.push(entry);
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Lowercased words with surrounding punctuation stripped.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Classes are IRIs whose local name is capitalized (`dbo:City`);
/// everything else is treated as a predicate (`dbo:mayor`).
pub fn iri_kind(iri: &str) -> SlotKind {
    let local = iri.rsplit(['/', '#']).next().unwrap_or(iri);
    if local.chars().next().is_some_and(char::is_uppercase) {
        SlotKind::Class
    } else {
        SlotKind::Predicate
    }
}

impl Lexicon {
    pub fn new<I, K>(entries: I) -> Result<Self, SlotError>
    where
        I: IntoIterator<Item = (K, Vec<String>)>,
        K: AsRef<str>,
    {
        let mut lex = Lexicon::default();
        for (key, iris) in entries {
            let raw = key.as_ref();
            let words = normalize_words(raw);
            if words.is_empty() {
                return Err(SlotError::Lexicon(format!("key {raw:?} has no words")));
            }
            if iris.is_empty() {
                return Err(SlotError::Lexicon(format!("key {raw:?} has an empty IRI list")));
            }
            if let Some(bad) = iris.iter().find(|i| !is_valid_iri(i)) {
                return Err(SlotError::Lexicon(format!("key {raw:?}: malformed IRI {bad:?}")));
            }
            lex.max_words = lex.max_words.max(words.len());
            let slot = lex.map.entry(words.join(" ")).or_default();
            for iri in iris {
                if !slot.contains(&iri) {
                    slot.push(iri);
                }
            }
        }
        Ok(lex)
    }

    pub fn from_json(text: &str) -> Result<Self, SlotError> {
        let Entries(entries) = serde_json::from_str(text).map_err(|e| SlotError::Lexicon(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, SlotError> {
        let text = std::fs::read_to_string(path).map_err(|e| SlotError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.map.get(&normalize_words(key).join(" ")).map(Vec::as_slice)
    }

    /// IRIs of the given kind for every n-gram of the question, longest
    /// n-grams first, then left to right; duplicates dropped.
    pub fn matches(&self, question: &str, kind: SlotKind) -> Vec<String> {
        let words = normalize_words(question);
        let mut out: Vec<String> = Vec::new();
        for n in (1..=self.max_words.min(words.len())).rev() {
            for gram in words.windows(n) {
                let Some(iris) = self.map.get(&gram.join(" ")) else {
                    continue;
                };
                for iri in iris {
                    if iri_kind(iri) == kind && !out.contains(iri) {
                        out.push(iri.clone());
                    }
                }
            }
        }
        out
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, SlotError> {
    Lexicon::load(path)
}

pub fn match_lexicon(question: &str, lexicon: &Lexicon, kind: SlotKind) -> Vec<String> {
    lexicon.matches(question, kind)
}
