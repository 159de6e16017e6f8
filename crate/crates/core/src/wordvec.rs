//! Pre-trained word vectors in the word2vec/GloVe text format.
//!
//! One entry per line: a token followed by `D` space-separated reals. A
//! leading `<count> <dim>` header line (word2vec text output) is detected
//! automatically.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

impl WordVectorTable {
    /// Builds a table from in-memory entries; first occurrence of a token wins.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::Invalid(
                "word vector dimension must be positive".into(),
            ));
        }
        let mut table = WordVectorTable::empty(dim);
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: vector.len(),
                });
            }
            table.push(token.into(), &vector);
        }
        Ok(table)
    }

    fn empty(dim: usize) -> Self {
        WordVectorTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        }
    }

    fn push(&mut self, token: String, vector: &[f64]) {
        if self.index.contains_key(&token) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of duplicate token lines that were dropped at load.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Exact-match lookup, then a lowercase retry when `case_fold` is set.
    pub fn lookup(&self, token: &str, case_fold: bool) -> Option<&[f64]> {
        let idx = match self.index.get(token) {
            Some(&i) => i,
            None if case_fold => *self.index.get(&token.to_lowercase())?,
            None => return None,
        };
        Some(&self.data[idx * self.dim..(idx + 1) * self.dim])
    }

    /// Parses a text-format table. `expected_dim`, when given, must match.
    pub fn read<R: BufRead>(reader: R, source: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let mut table: Option<WordVectorTable> = None;
        let mut row = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            let mut fields = line.split_ascii_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };

            if lineno == 1 {
                let rest: Vec<&str> = fields.clone().collect();
                if rest.len() == 1 {
                    if let (Ok(_count), Ok(dim)) = (token.parse::<u64>(), rest[0].parse::<usize>())
                    {
                        if dim == 0 {
                            return Err(Error::parse(
                                source,
                                lineno,
                                "header declares dimension 0",
                            ));
                        }
                        check_expected(source, lineno, expected_dim, dim)?;
                        table = Some(WordVectorTable::empty(dim));
                        continue;
                    }
                }
            }

            row.clear();
            for field in fields {
                let value: f64 = field.parse().map_err(|_| {
                    Error::parse(source, lineno, format!("non-numeric component `{field}`"))
                })?;
                row.push(value);
            }
            let table = match table.as_mut() {
                Some(t) => t,
                None => {
                    if row.is_empty() {
                        return Err(Error::parse(
                            source,
                            lineno,
                            "token has no vector components",
                        ));
                    }
                    check_expected(source, lineno, expected_dim, row.len())?;
                    table.insert(WordVectorTable::empty(row.len()))
                }
            };
            if row.len() != table.dim {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("expected {} components, found {}", table.dim, row.len()),
                ));
            }
            table.push(token.to_owned(), &row);
        }
        table.ok_or_else(|| Error::parse(source, 0, "no word vectors found"))
    }

    pub fn load(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path, expected_dim)
    }
}

fn check_expected(source: &Path, line: usize, expected: Option<usize>, found: usize) -> Result<()> {
    match expected {
        Some(e) if e != found => Err(Error::parse(
            source,
            line,
            format!("expected dimension {e}, file has {found}"),
        )),
        _ => Ok(()),
    }
}
