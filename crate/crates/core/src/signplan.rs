//! Text → sign plan translation.
//!
//! Input text is lowercased, stripped of punctuation, split on whitespace
//! and passed through the synonym table. The token sequence is then matched
//! greedily: at each position the longest dictionary phrase starting there
//! becomes a GIF item; a token that starts no phrase is spelled letter by
//! letter at one second per letter. A stop keyword ends the plan.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::Label;

pub const LETTER_DURATION_SECS: f64 = 1.0;
pub const DEFAULT_STOP_KEYWORDS: [&str; 2] = ["goodbye", "stop"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlanItem {
    Gif {
        asset_id: String,
        source_phrase: String,
    },
    Letter {
        character: Label,
        duration_secs: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignPlan {
    pub items: Vec<PlanItem>,
    /// A stop keyword ended the plan.
    pub terminal: bool,
    /// Characters that could not be spelled (only populated in strict mode).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SignPlan {
    pub fn gif_count(&self) -> usize {
        self.items.iter().filter(|i| matches!(i, PlanItem::Gif { .. })).count()
    }

    pub fn letter_count(&self) -> usize {
        self.items.len() - self.gif_count()
    }

    /// Total letter time; GIF durations depend on the asset and are not counted.
    pub fn letter_duration_secs(&self) -> f64 {
        self.items
            .iter()
            .map(|i| match i {
                PlanItem::Letter { duration_secs, .. } => *duration_secs,
                PlanItem::Gif { .. } => 0.0,
            })
            .sum()
    }
}

/// Phrase → asset table with synonyms and stop keywords.
#[derive(Debug, Clone)]
pub struct PhraseDictionary {
    phrases: HashMap<Vec<String>, String>,
    max_phrase_tokens: usize,
    synonyms: HashMap<String, Vec<String>>,
    stop_keywords: HashSet<String>,
    strict: bool,
}

impl Default for PhraseDictionary {
    fn default() -> Self {
        Self {
            phrases: HashMap::new(),
            max_phrase_tokens: 0,
            synonyms: HashMap::new(),
            stop_keywords: DEFAULT_STOP_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            strict: false,
        }
    }
}

/// Phrase entries in file order, duplicates kept so they can be reported.
#[derive(Debug, Default)]
struct OrderedEntries(Vec<(String, String)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of phrase → asset id")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }
        }
        d.deserialize_map(EntriesVisitor)
    }
}

#[derive(Deserialize)]
struct Manifest {
    #[serde(default)]
    phrases: OrderedEntries,
    #[serde(default)]
    synonyms: HashMap<String, String>,
    stop_keywords: Option<Vec<String>>,
}

/// Lowercases, removes punctuation, and splits on whitespace.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .chars()
        .filter(|c| !is_punctuation(*c))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '¡' | '¿' | '«' | '»' | '·' | '।' | '॥'
        )
}

impl PhraseDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dictionary; phrases are normalized the same way as input text.
    pub fn from_parts<'a>(
        phrases: impl IntoIterator<Item = (&'a str, &'a str)>,
        synonyms: impl IntoIterator<Item = (&'a str, &'a str)>,
        stop_keywords: Option<Vec<String>>,
    ) -> Result<Self> {
        let mut dict = Self::default();
        for (from, to) in synonyms {
            let key = tokenize(from);
            let [key] = key.as_slice() else {
                return Err(Error::Dictionary(format!(
                    "synonym key {from:?} must be a single word"
                )));
            };
            dict.synonyms.insert(key.clone(), tokenize(to));
        }
        if let Some(stops) = stop_keywords {
            dict.stop_keywords = stops.iter().flat_map(|s| tokenize(s)).collect();
        }
        for (phrase, asset) in phrases {
            dict.insert(phrase, asset)?;
        }
        Ok(dict)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let m: Manifest =
            serde_json::from_str(json).map_err(|e| Error::Dictionary(e.to_string()))?;
        Self::from_parts(
            m.phrases.0.iter().map(|(k, v)| (k.as_str(), v.as_str())),
            m.synonyms.iter().map(|(k, v)| (k.as_str(), v.as_str())),
            m.stop_keywords,
        )
    }

    pub fn insert(&mut self, phrase: &str, asset_id: &str) -> Result<()> {
        if asset_id.trim().is_empty() {
            return Err(Error::EmptyAssetId(phrase.to_string()));
        }
        let key = self.normalize_text(phrase);
        if key.is_empty() {
            return Err(Error::Dictionary(format!("phrase {phrase:?} is empty after normalization")));
        }
        if self.phrases.contains_key(&key) {
            return Err(Error::DuplicatePhrase(key.join(" ")));
        }
        self.max_phrase_tokens = self.max_phrase_tokens.max(key.len());
        self.phrases.insert(key, asset_id.to_string());
        Ok(())
    }

    /// Reports unspellable characters as plan warnings.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn with_stop_keywords<S: AsRef<str>>(mut self, stops: &[S]) -> Self {
        self.stop_keywords = stops.iter().flat_map(|s| tokenize(s.as_ref())).collect();
        self
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Normalized phrases, sorted.
    pub fn phrases(&self) -> Vec<String> {
        let mut v: Vec<String> = self.phrases.keys().map(|k| k.join(" ")).collect();
        v.sort();
        v
    }

    pub fn asset_for(&self, tokens: &[String]) -> Option<&str> {
        self.phrases.get(tokens).map(String::as_str)
    }

    pub fn is_stop_keyword(&self, token: &str) -> bool {
        self.stop_keywords.contains(token)
    }

    pub fn max_phrase_tokens(&self) -> usize {
        self.max_phrase_tokens
    }

    /// Tokenizes and applies synonym substitution.
    pub fn normalize_text(&self, raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for token in tokenize(raw) {
            match self.synonyms.get(&token) {
                Some(replacement) => out.extend(replacement.iter().cloned()),
                None => out.push(token),
            }
        }
        out
    }

    pub fn translate(&self, raw: &str) -> SignPlan {
        let tokens = self.normalize_text(raw);
        let mut plan = SignPlan::default();
        let mut i = 0;
        while i < tokens.len() {
            if self.is_stop_keyword(&tokens[i]) {
                plan.terminal = true;
                break;
            }
            let longest = (1..=self.max_phrase_tokens.min(tokens.len() - i))
                .rev()
                .find_map(|n| self.phrases.get(&tokens[i..i + n]).map(|a| (n, a)));
            match longest {
                Some((n, asset)) => {
                    plan.items.push(PlanItem::Gif {
                        asset_id: asset.clone(),
                        source_phrase: tokens[i..i + n].join(" "),
                    });
                    i += n;
                }
                None => {
                    self.spell(&tokens[i], &mut plan);
                    i += 1;
                }
            }
        }
        plan
    }

    fn spell(&self, token: &str, plan: &mut SignPlan) {
        for c in token.chars() {
            let mut buf = [0u8; 4];
            match Label::from_symbol(c.encode_utf8(&mut buf)) {
                Some(character) => plan.items.push(PlanItem::Letter {
                    character,
                    duration_secs: LETTER_DURATION_SECS,
                }),
                None if self.strict => plan
                    .warnings
                    .push(format!("cannot spell {c:?} in {token:?}")),
                None => {}
            }
        }
    }
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<PhraseDictionary> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PhraseDictionary::from_json(&json)
}

/// Tokenize + synonym substitution against `dict`.
pub fn normalize_text(raw: &str, dict: &PhraseDictionary) -> Vec<String> {
    dict.normalize_text(raw)
}

pub fn translate(raw: &str, dict: &PhraseDictionary) -> SignPlan {
    dict.translate(raw)
}

/// Turns captured input into text. Speech recognition plugs in here.
pub trait Transcriber {
    fn transcribe(&self, input: &[u8]) -> Result<String>;
}

/// Treats the input as UTF-8 text.
#[derive(Debug, Clone, Copy, Default)]
pub struct TextPassthrough;

impl Transcriber for TextPassthrough {
    fn transcribe(&self, input: &[u8]) -> Result<String> {
        String::from_utf8(input.to_vec()).map_err(|e| Error::Dictionary(format!("input is not UTF-8: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> PhraseDictionary {
        PhraseDictionary::from_json(
            r#"{"phrases": {"hello friend": "gif/hello_friend", "hello": "gif/hello",
                "thank you": "gif/thank_you", "how are you": "gif/how_are_you"},
                "synonyms": {"hi": "hello", "thanks": "thank you"},
                "stop_keywords": ["goodbye"]}"#,
        )
        .unwrap()
    }

    fn letters(plan: &SignPlan) -> String {
        plan.items
            .iter()
            .filter_map(|i| match i {
                PlanItem::Letter { character, .. } => Some(character.as_str()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn normalization() {
        let d = dict();
        assert_eq!(d.normalize_text("Hello, Friend!"), vec!["hello", "friend"]);
        assert_eq!(d.normalize_text("hi"), vec!["hello"]);
        assert_eq!(d.normalize_text("Thanks!!"), vec!["thank", "you"]);
        assert!(d.normalize_text("").is_empty());
        assert!(d.normalize_text("  ?! ").is_empty());
    }

    #[test]
    fn phrase_becomes_one_gif() {
        let plan = dict().translate("hello friend");
        assert_eq!(
            plan.items,
            vec![PlanItem::Gif {
                asset_id: "gif/hello_friend".into(),
                source_phrase: "hello friend".into()
            }]
        );
        assert!(!plan.terminal);
        // synonym feeds the phrase
        assert_eq!(dict().translate("Hi, friend.").gif_count(), 1);
    }

    #[test]
    fn unknown_word_is_spelled() {
        let plan = dict().translate("xyz");
        assert_eq!(letters(&plan), "XYZ");
        assert_eq!(plan.letter_duration_secs(), 3.0);
        assert!(plan.items.iter().all(|i| matches!(i, PlanItem::Letter { duration_secs, .. } if *duration_secs == 1.0)));
    }

    #[test]
    fn digits_kept_and_symbols_skipped() {
        let plan = dict().translate("r2-d2 café 2024");
        assert_eq!(letters(&plan), "R2D2CAF224");
        assert!(plan.warnings.is_empty());
        let strict = dict().strict(true).translate("café 0");
        assert_eq!(letters(&strict), "CAF");
        assert_eq!(strict.warnings.len(), 2);
    }

    #[test]
    fn stop_keyword_truncates() {
        let plan = dict().translate("hello goodbye thank you");
        assert!(plan.terminal);
        assert_eq!(plan.items.len(), 1);
        let plan = dict().with_stop_keywords(&["enough"]).translate("goodbye enough hello");
        assert!(plan.terminal);
        assert_eq!(letters(&plan), "GOODBYE");
    }

    #[test]
    fn longest_match_wins() {
        let plan = dict().translate("hello friend how are you hello");
        let sources: Vec<_> = plan
            .items
            .iter()
            .map(|i| match i {
                PlanItem::Gif { source_phrase, .. } => source_phrase.as_str(),
                _ => "?",
            })
            .collect();
        assert_eq!(sources, vec!["hello friend", "how are you", "hello"]);
    }

    #[test]
    fn manifest_errors() {
        let dup = PhraseDictionary::from_json(r#"{"phrases": {"a b": "x", "a b": "y"}}"#).unwrap_err();
        assert!(matches!(&dup, Error::DuplicatePhrase(p) if p == "a b"), "{dup}");
        let dup = PhraseDictionary::from_json(r#"{"phrases": {"A, b": "x", "a b": "y"}}"#);
        assert!(matches!(dup, Err(Error::DuplicatePhrase(_))));
        let empty = PhraseDictionary::from_json(r#"{"phrases": {"a": " "}}"#);
        assert!(matches!(empty, Err(Error::EmptyAssetId(_))));
        assert!(PhraseDictionary::from_json("{").is_err());
        let two = PhraseDictionary::from_json(r#"{"phrases": {"a": "x", "b": "y"}}"#).unwrap();
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn plan_json_shape() {
        let plan = dict().translate("hello ab");
        let v: serde_json::Value = serde_json::to_value(&plan).unwrap();
        assert_eq!(v["items"][0]["kind"], "gif");
        assert_eq!(v["items"][1]["kind"], "letter");
        assert_eq!(v["items"][1]["character"], "A");
        assert_eq!(v["items"][1]["duration_secs"], 1.0);
        assert_eq!(v["terminal"], false);
        let back: SignPlan = serde_json::from_value(v).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn passthrough_transcriber() {
        assert_eq!(TextPassthrough.transcribe("hi there".as_bytes()).unwrap(), "hi there");
        assert!(TextPassthrough.transcribe(&[0xff, 0xfe]).is_err());
    }
}
