//! Entity initialization from natural-language descriptions.
//!
//! Each description is cut to its first sentence, tokenized, optionally
//! stripped of stopwords, and averaged over the word vectors that resolve.
//! The averaged vectors are reduced to `k` dimensions with PCA fit on the
//! described entities only, then every row is scaled to unit norm. Entities
//! without a usable description get a uniform random vector instead.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kgdata::DescriptionCorpus;
use crate::matrix::Matrix;
use crate::pca::PcaModel;
use crate::wordvec::WordVectorTable;

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Returns the text up to and including the first `.`, `!` or `?` that is
/// followed by whitespace or the end of the string. Without such a
/// terminator, returns the whole trimmed text.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return text,
                Some(&(_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00BF}'
                | '\u{00A1}'
        )
}

/// Splits on whitespace and strips leading/trailing punctuation. Case is kept.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(is_punctuation))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Lowercased stopword set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// Parses one token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopWords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Result of averaging one description.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionEmbedding {
    pub vector: Option<Vec<f64>>,
    pub tokens_total: usize,
    pub tokens_matched: usize,
}

/// Averages word vectors over descriptions.
#[derive(Debug, Clone, Copy)]
pub struct DescriptionEmbedder<'a> {
    pub table: &'a WordVectorTable,
    pub stopwords: Option<&'a StopWords>,
    pub case_fold: bool,
}

impl<'a> DescriptionEmbedder<'a> {
    pub fn new(table: &'a WordVectorTable) -> Self {
        DescriptionEmbedder {
            table,
            stopwords: None,
            case_fold: true,
        }
    }

    pub fn with_stopwords(mut self, stopwords: Option<&'a StopWords>) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn with_case_fold(mut self, case_fold: bool) -> Self {
        self.case_fold = case_fold;
        self
    }

    pub fn embed(&self, text: &str) -> DescriptionEmbedding {
        let dim = self.table.dim();
        let mut sum = vec![0.0; dim];
        let mut total = 0;
        let mut matched = 0;
        for token in tokenize(first_sentence(text)) {
            if self.stopwords.is_some_and(|s| s.contains(token)) {
                continue;
            }
            total += 1;
            if let Some(v) = self.table.lookup(token, self.case_fold) {
                matched += 1;
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
        }
        let vector = (matched > 0).then(|| {
            let n = matched as f64;
            sum.into_iter().map(|s| s / n).collect()
        });
        DescriptionEmbedding {
            vector,
            tokens_total: total,
            tokens_matched: matched,
        }
    }
}

/// Mean of the resolvable word vectors of the first sentence of `text`, or
/// `None` if no token resolves. Lookup uses the lowercase fallback.
pub fn embed_description(
    text: &str,
    table: &WordVectorTable,
    stopwords: Option<&StopWords>,
) -> Option<Vec<f64>> {
    DescriptionEmbedder::new(table)
        .with_stopwords(stopwords)
        .embed(text)
        .vector
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSource {
    Described,
    FallbackRandom,
}

impl InitSource {
    pub fn as_str(self) -> &'static str {
        match self {
            InitSource::Described => "described",
            InitSource::FallbackRandom => "fallback-random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntityInit {
    pub source: InitSource,
    pub tokens_total: usize,
    pub tokens_matched: usize,
}

/// Per-entity provenance of the initial vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitReport {
    pub entities: Vec<EntityInit>,
    /// Explained variance of the kept PCA components, empty for random-only init.
    pub explained_variance: Vec<f64>,
}

impl InitReport {
    pub fn described(&self) -> usize {
        self.entities
            .iter()
            .filter(|e| e.source == InitSource::Described)
            .count()
    }

    pub fn fallback(&self) -> usize {
        self.entities.len() - self.described()
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.entities.is_empty() {
            return 0.0;
        }
        self.fallback() as f64 / self.entities.len() as f64
    }
}

/// Options for [`init_entities`].
#[derive(Debug, Clone, Copy)]
pub struct InitOptions<'a> {
    pub k: usize,
    pub stopwords: Option<&'a StopWords>,
    pub case_fold: bool,
}

/// Bound of the uniform initialization range, `6 / sqrt(k)`.
pub fn uniform_bound(k: usize) -> f64 {
    6.0 / (k as f64).sqrt()
}

/// Fills `row` with draws from `uniform[-6/sqrt(k), 6/sqrt(k)]`.
pub fn fill_uniform<R: Rng + ?Sized>(row: &mut [f64], rng: &mut R) {
    let bound = uniform_bound(row.len());
    for x in row.iter_mut() {
        *x = rng.gen_range(-bound..=bound);
    }
}

/// Uniform random entity matrix with unit rows; every entity is a fallback.
pub fn random_init<R: Rng + ?Sized>(
    num_entities: usize,
    k: usize,
    rng: &mut R,
) -> (Matrix, InitReport) {
    let mut m = Matrix::zeros(num_entities, k);
    for i in 0..num_entities {
        fill_uniform(m.row_mut(i), rng);
    }
    m.normalize_rows();
    let report = InitReport {
        entities: vec![
            EntityInit {
                source: InitSource::FallbackRandom,
                tokens_total: 0,
                tokens_matched: 0,
            };
            num_entities
        ],
        explained_variance: Vec::new(),
    };
    (m, report)
}

/// Builds the `num_entities × k` initial entity matrix from descriptions.
///
/// PCA is fit on the described entities only. Fallback rows are drawn in
/// entity-id order from `rng`. Every output row has unit L2 norm.
pub fn init_entities<R: Rng + ?Sized>(
    corpus: &DescriptionCorpus,
    table: &WordVectorTable,
    num_entities: usize,
    options: InitOptions<'_>,
    rng: &mut R,
) -> Result<(Matrix, InitReport)> {
    let k = options.k;
    if k == 0 || k > table.dim() {
        return Err(Error::Invalid(format!(
            "PCA dimension {k} must be in 1..={} (word vector dimension)",
            table.dim()
        )));
    }
    if let Some(&id) = corpus.texts.keys().next_back() {
        if id >= num_entities {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id,
                count: num_entities,
            });
        }
    }

    let embedder = DescriptionEmbedder::new(table)
        .with_stopwords(options.stopwords)
        .with_case_fold(options.case_fold);
    let embedded: Vec<Option<DescriptionEmbedding>> = (0..num_entities)
        .into_par_iter()
        .map(|id| corpus.get(id).map(|text| embedder.embed(text)))
        .collect();

    let (described_ids, samples): (Vec<usize>, Vec<Vec<f64>>) = embedded
        .iter()
        .enumerate()
        .filter_map(|(id, e)| Some((id, e.as_ref()?.vector.clone()?)))
        .unzip();
    if samples.len() < 2 {
        return Err(Error::TooFewDescribed {
            described: samples.len(),
        });
    }
    let pca = PcaModel::fit(&samples, k)?;

    let mut out = Matrix::zeros(num_entities, k);
    for (&id, sample) in described_ids.iter().zip(&samples) {
        out.row_mut(id).copy_from_slice(&pca.transform(sample)?);
    }

    let mut entities = Vec::with_capacity(num_entities);
    for (id, e) in embedded.iter().enumerate() {
        let (total, matched) = e
            .as_ref()
            .map_or((0, 0), |e| (e.tokens_total, e.tokens_matched));
        let source = if matched > 0 {
            InitSource::Described
        } else {
            fill_uniform(out.row_mut(id), rng);
            InitSource::FallbackRandom
        };
        entities.push(EntityInit {
            source,
            tokens_total: total,
            tokens_matched: matched,
        });
    }
    out.normalize_rows();

    Ok((
        out,
        InitReport {
            entities,
            explained_variance: pca.explained_variance().to_vec(),
        },
    ))
}
