//! Spoken news summaries: per-language article stores, topic lookup,
//! bounded summaries and speech timing plans.
//!
//! A word is a maximal run of non-whitespace characters. All word bounds
//! below use that definition.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ARTICLES: usize = 3;
pub const MIN_SUMMARY_WORDS: usize = 20;
pub const MAX_SUMMARY_WORDS: usize = 60;
pub const WORDS_PER_MINUTE: f64 = 150.0;
pub const PAUSE_AFTER_SECS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Hindi,
    Marathi,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::English, Language::Hindi, Language::Marathi];

    pub fn store_file(self) -> &'static str {
        match self {
            Language::English => "eng_news.json",
            Language::Hindi => "hindi_news.json",
            Language::Marathi => "marathi_news.json",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Hindi => "hi",
            Language::Marathi => "mr",
        }
    }
}

/// Case-insensitive language lookup; anything unrecognized is English.
pub fn resolve_language(input: &str) -> Language {
    match input.trim().to_lowercase().as_str() {
        "hindi" | "hi" | "hin" | "हिंदी" | "हिन्दी" => Language::Hindi,
        "marathi" | "mr" | "mar" | "मराठी" => Language::Marathi,
        _ => Language::English,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub content: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentRequest {
    pub language: Language,
    pub topic: String,
}

#[derive(Deserialize)]
struct StoreFile {
    topics: HashMap<String, Vec<Article>>,
}

/// Articles for one language, keyed by lowercased topic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanguageStore {
    topics: HashMap<String, Vec<Article>>,
}

impl LanguageStore {
    pub fn from_json(json: &str) -> std::result::Result<Self, String> {
        let file: StoreFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut topics: HashMap<String, Vec<Article>> = HashMap::new();
        for (topic, articles) in file.topics {
            if let Some(a) = articles.iter().find(|a| a.content.trim().is_empty()) {
                return Err(format!("article {:?} under {topic:?} has empty content", a.title));
            }
            topics.entry(topic.trim().to_lowercase()).or_default().extend(articles);
        }
        Ok(Self { topics })
    }

    pub fn topics(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.topics.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }

    pub fn articles(&self, topic: &str) -> Option<&[Article]> {
        self.topics.get(&topic.trim().to_lowercase()).map(Vec::as_slice)
    }
}

/// All language stores found in a directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewsStore {
    stores: HashMap<Language, LanguageStore>,
}

impl NewsStore {
    /// Loads every `*_news.json` present. Missing files are not an error;
    /// malformed ones are.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut stores = HashMap::new();
        for lang in Language::ALL {
            let path: PathBuf = dir.join(lang.store_file());
            let json = match std::fs::read_to_string(&path) {
                Ok(s) => s,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(Error::io(path, e)),
            };
            let store = LanguageStore::from_json(&json).map_err(|message| Error::Parse {
                path: path.clone(),
                message,
            })?;
            stores.insert(lang, store);
        }
        Ok(Self { stores })
    }

    pub fn insert(&mut self, language: Language, store: LanguageStore) {
        self.stores.insert(language, store);
    }

    pub fn get(&self, language: Language) -> Option<&LanguageStore> {
        self.stores.get(&language)
    }

    pub fn languages(&self) -> Vec<Language> {
        Language::ALL.into_iter().filter(|l| self.stores.contains_key(l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    /// The store exists but has nothing under the topic.
    NoContent,
    /// The requested language's store is missing; English was used.
    FallbackToEnglish,
    /// No usable store at all.
    StoreMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchResult {
    pub language: Language,
    pub status: FetchStatus,
    pub articles: Vec<Article>,
}

/// The three most recent articles under the topic. Equal dates are ordered by title.
pub fn fetch_articles(store: &NewsStore, request: &ContentRequest) -> FetchResult {
    let (language, lang_store, fallback) = match store.get(request.language) {
        Some(s) => (request.language, s, false),
        None => match store.get(Language::English) {
            Some(s) => (Language::English, s, true),
            None => {
                return FetchResult {
                    language: request.language,
                    status: FetchStatus::StoreMissing,
                    articles: Vec::new(),
                }
            }
        },
    };
    let mut articles: Vec<Article> = lang_store
        .articles(&request.topic)
        .map(<[Article]>::to_vec)
        .unwrap_or_default();
    articles.sort_by(|a, b| b.date.cmp(&a.date).then_with(|| a.title.cmp(&b.title)));
    articles.truncate(MAX_ARTICLES);
    let status = if articles.is_empty() {
        FetchStatus::NoContent
    } else if fallback {
        FetchStatus::FallbackToEnglish
    } else {
        FetchStatus::Ok
    };
    FetchResult {
        language,
        status,
        articles,
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Sentences with their terminators; a trailing fragment counts as a sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?' | '।' | '॥') {
            let at_boundary = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Produces a summary of `min_words..=max_words` words, or the input itself
/// when it is shorter than `min_words`.
pub trait Summarizer {
    fn summarize(&self, text: &str, min_words: usize, max_words: usize) -> String;
}

/// Whole leading sentences until at least `min_words`, cut at `max_words`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSummarizer;

impl Summarizer for ExtractiveSummarizer {
    fn summarize(&self, text: &str, min_words: usize, max_words: usize) -> String {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() < min_words {
            return text.to_string();
        }
        let mut taken = 0;
        for sentence in split_sentences(text) {
            taken += word_count(sentence);
            if taken >= min_words {
                break;
            }
        }
        words[..taken.min(max_words)].join(" ")
    }
}

pub fn summarize(text: &str, min_words: usize, max_words: usize, summarizer: &dyn Summarizer) -> String {
    summarizer.summarize(text, min_words, max_words)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub text: String,
    pub word_count: usize,
    pub estimated_duration_secs: f64,
    pub pause_after_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechPlan {
    pub language: Language,
    pub segments: Vec<SpeechSegment>,
}

impl SpeechPlan {
    pub fn speaking_secs(&self) -> f64 {
        self.segments.iter().map(|s| s.estimated_duration_secs).sum()
    }

    /// Speaking time plus pauses.
    pub fn total_secs(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.estimated_duration_secs + s.pause_after_secs)
            .sum()
    }
}

/// One segment per sentence, timed at 150 words per minute.
pub fn build_speech_plan(summary: &str, language: Language) -> SpeechPlan {
    let segments = split_sentences(summary)
        .into_iter()
        .map(|s| {
            let words = word_count(s);
            SpeechSegment {
                text: s.to_string(),
                word_count: words,
                estimated_duration_secs: words as f64 / WORDS_PER_MINUTE * 60.0,
                pause_after_secs: PAUSE_AFTER_SECS,
            }
        })
        .collect();
    SpeechPlan { language, segments }
}

/// Renders a summary for playback. Real synthesizers produce audio from the
/// plan; the default only plans.
pub trait SpeechSynthesizer {
    fn plan(&self, summary: &str, language: Language) -> SpeechPlan;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlanningSynthesizer;

impl SpeechSynthesizer for PlanningSynthesizer {
    fn plan(&self, summary: &str, language: Language) -> SpeechPlan {
        build_speech_plan(summary, language)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub article: Article,
    pub summary: String,
    pub speech: SpeechPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentBundle {
    pub request: ContentRequest,
    pub language: Language,
    pub status: FetchStatus,
    pub entries: Vec<BundleEntry>,
}

impl ContentBundle {
    pub fn total_secs(&self) -> f64 {
        self.entries.iter().map(|e| e.speech.total_secs()).sum()
    }
}

pub fn build_bundle(
    store: &NewsStore,
    request: &ContentRequest,
    summarizer: &dyn Summarizer,
    synthesizer: &dyn SpeechSynthesizer,
) -> ContentBundle {
    let fetched = fetch_articles(store, request);
    let entries = fetched
        .articles
        .into_iter()
        .map(|article| {
            let summary = summarizer.summarize(&article.content, MIN_SUMMARY_WORDS, MAX_SUMMARY_WORDS);
            let speech = synthesizer.plan(&summary, fetched.language);
            BundleEntry {
                article,
                summary,
                speech,
            }
        })
        .collect();
    ContentBundle {
        request: request.clone(),
        language: fetched.language,
        status: fetched.status,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_resolution() {
        assert_eq!(resolve_language("Marathi"), Language::Marathi);
        assert_eq!(resolve_language("français"), Language::English);
        assert_eq!(resolve_language("HINDI "), Language::Hindi);
        assert_eq!(resolve_language("हिंदी"), Language::Hindi);
        assert_eq!(resolve_language(""), Language::English);
    }

    fn article(title: &str, date: &str) -> Article {
        Article {
            title: title.into(),
            content: format!("Body of {title}."),
            date: date.parse().unwrap(),
        }
    }

    fn store_with(articles: Vec<Article>) -> NewsStore {
        let mut topics = HashMap::new();
        topics.insert("technology".to_string(), articles);
        let mut s = NewsStore::default();
        s.insert(Language::English, LanguageStore { topics });
        s
    }

    fn request(lang: Language, topic: &str) -> ContentRequest {
        ContentRequest {
            language: lang,
            topic: topic.into(),
        }
    }

    #[test]
    fn most_recent_three() {
        let s = store_with(vec![
            article("d3", "2024-01-03"),
            article("d1", "2024-01-01"),
            article("d5", "2024-01-05"),
            article("d2", "2024-01-02"),
            article("d4", "2024-01-04"),
        ]);
        let r = fetch_articles(&s, &request(Language::English, "Technology"));
        let titles: Vec<_> = r.articles.iter().map(|a| a.title.as_str()).collect();
        assert_eq!(titles, vec!["d5", "d4", "d3"]);
        assert_eq!(r.status, FetchStatus::Ok);
    }

    #[test]
    fn single_article_and_missing_topic() {
        let s = store_with(vec![article("only", "2024-02-02")]);
        assert_eq!(fetch_articles(&s, &request(Language::English, "technology")).articles.len(), 1);
        let r = fetch_articles(&s, &request(Language::English, "sports"));
        assert_eq!(r.status, FetchStatus::NoContent);
        assert!(r.articles.is_empty());
    }

    #[test]
    fn date_ties_break_on_title() {
        let s = store_with(vec![
            article("beta", "2024-03-01"),
            article("alpha", "2024-03-01"),
            article("gamma", "2024-03-01"),
            article("aardvark", "2024-03-01"),
        ]);
        let r = fetch_articles(&s, &request(Language::English, "technology"));
        let titles: Vec<_> = r.articles.iter().map(|a| a.title.as_str()).collect();
        assert_eq!(titles, vec!["aardvark", "alpha", "beta"]);
    }

    #[test]
    fn missing_language_falls_back() {
        let s = store_with(vec![article("x", "2024-01-01")]);
        let r = fetch_articles(&s, &request(Language::Hindi, "technology"));
        assert_eq!(r.status, FetchStatus::FallbackToEnglish);
        assert_eq!(r.language, Language::English);
        let r = fetch_articles(&NewsStore::default(), &request(Language::Hindi, "technology"));
        assert_eq!(r.status, FetchStatus::StoreMissing);
    }

    #[test]
    fn short_input_passes_through() {
        let text = "one two three four five six seven eight nine ten";
        assert_eq!(summarize(text, 20, 60, &ExtractiveSummarizer), text);
    }

    #[test]
    fn summary_takes_whole_sentences_then_cuts() {
        let s1 = "a b c d e f g h i j.";
        let s2 = "k l m n o p q r s t u v.";
        let s3 = "w x y z.";
        let text = format!("{s1} {s2} {s3}");
        let out = summarize(&text, 20, 60, &ExtractiveSummarizer);
        assert_eq!(out, format!("{s1} {s2}"));
        let cut = summarize(&text, 20, 15, &ExtractiveSummarizer);
        assert_eq!(word_count(&cut), 15);
        assert_eq!(summarize(&out, 20, 60, &ExtractiveSummarizer), out);
    }

    #[test]
    fn sentence_split() {
        assert_eq!(
            split_sentences("Dr. Smith arrived. It was 3.5 km! Then? ok"),
            vec!["Dr.", "Smith arrived.", "It was 3.5 km!", "Then?", "ok"]
        );
        assert_eq!(split_sentences("नमस्ते। आप कैसे हैं?"), vec!["नमस्ते।", "आप कैसे हैं?"]);
    }

    #[test]
    fn speech_timing() {
        let sentence = format!("{}.", vec!["word"; 150].join(" "));
        let plan = build_speech_plan(&sentence, Language::English);
        assert_eq!(plan.segments.len(), 1);
        assert_eq!(plan.segments[0].estimated_duration_secs, 60.0);

        let two = format!("{}. {}.", ["a"; 10].join(" "), ["b"; 20].join(" "));
        let plan = build_speech_plan(&two, Language::Hindi);
        assert_eq!(plan.segments.len(), 2);
        assert!((plan.speaking_secs() - 12.0).abs() < 1e-12);
        assert!((plan.total_secs() - 13.0).abs() < 1e-12);
        assert_eq!(plan.language, Language::Hindi);
    }

    #[test]
    fn empty_content_is_rejected() {
        let json = r#"{"topics": {"t": [{"title": "x", "content": "  ", "date": "2024-01-01"}]}}"#;
        assert!(LanguageStore::from_json(json).is_err());
        let json = r#"{"topics": {"t": [{"title": "x", "content": "y", "date": "2024-13-01"}]}}"#;
        assert!(LanguageStore::from_json(json).is_err());
    }
}
