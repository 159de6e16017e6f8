//! Triple ingestion, name dictionaries, dataset splits, and the known-triple
//! set used by filtered ranking.
//!
//! Names are opaque strings: WordNet sense keys such as `photography#3` and
//! Freebase MIDs pass through byte-for-byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One `(head, relation, tail)` fact as dictionary ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Dense name <-> id mapping. Ids are assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dictionary from names in id order. Duplicates are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dict = Dictionary::new();
        for name in names {
            let name = name.into();
            if dict.index.contains_key(&name) {
                return Err(Error::Invalid(format!(
                    "duplicate dictionary name `{name}`"
                )));
            }
            dict.insert(name);
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns the id of `name`, appending it if unseen.
    pub fn get_or_insert(&mut self, name: &str) -> usize {
        if let Some(id) = self.get(name) {
            return id;
        }
        self.insert(name.to_owned())
    }

    fn insert(&mut self, name: String) -> usize {
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    /// Writes `<name>\t<id>` lines sorted by id.
    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for (id, name) in self.names.iter().enumerate() {
            writeln!(writer, "{name}\t{id}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_to(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a `<name>\t<id>` file. Ids must be dense and in order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dict = Dictionary::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let (name, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected `<name>\\t<id>`"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("invalid id `{id}`")))?;
            if id != dict.len() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "ids must be dense and sorted: expected {}, found {id}",
                        dict.len()
                    ),
                ));
            }
            if dict.get(name).is_some() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("duplicate name `{name}`"),
                ));
            }
            dict.insert(name.to_owned());
        }
        Ok(dict)
    }
}

/// Parses tab-separated triples from `reader`.
///
/// With `grow` set, unseen names are appended to the dictionaries; otherwise
/// they are an error. `source` is only used in error messages.
pub fn read_triples<R: BufRead>(
    reader: R,
    source: &Path,
    entities: &mut Dictionary,
    relations: &mut Dictionary,
    grow: bool,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let resolve = |dict: &mut Dictionary, name: &str, kind: &'static str| {
            if grow {
                Ok(dict.get_or_insert(name))
            } else {
                dict.get(name).ok_or_else(|| Error::UnknownName {
                    kind,
                    name: name.to_owned(),
                })
            }
        };
        let head = resolve(entities, cols[0], "entity")?;
        let relation = resolve(relations, cols[1], "relation")?;
        let tail = resolve(entities, cols[2], "entity")?;
        triples.push(Triple::new(head, relation, tail));
    }
    Ok(triples)
}

pub fn load_triples(
    path: impl AsRef<Path>,
    entities: &mut Dictionary,
    relations: &mut Dictionary,
    grow: bool,
) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_triples(BufReader::new(file), path, entities, relations, grow)
}

/// Writes triples back as `<head>\t<relation>\t<tail>` lines using names.
pub fn save_triples(
    path: impl AsRef<Path>,
    triples: &[Triple],
    entities: &Dictionary,
    relations: &Dictionary,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    fn name<'d>(dict: &'d Dictionary, id: usize, kind: &'static str) -> Result<&'d str> {
        dict.name(id).ok_or(Error::IdOutOfRange {
            kind,
            id,
            count: dict.len(),
        })
    }
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}",
            name(entities, t.head, "entity")?,
            name(relations, t.relation, "relation")?,
            name(entities, t.tail, "entity")?
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Set of all known-true triples, indexed for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct KnownSet {
    triples: HashSet<Triple>,
    tails: HashMap<(usize, usize), HashSet<usize>>,
    heads: HashMap<(usize, usize), HashSet<usize>>,
}

impl KnownSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.triples.insert(t) {
            return false;
        }
        self.tails
            .entry((t.head, t.relation))
            .or_default()
            .insert(t.tail);
        self.heads
            .entry((t.relation, t.tail))
            .or_default()
            .insert(t.head);
        true
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Known tails for `(head, relation, ?)`.
    pub fn tails_of(&self, head: usize, relation: usize) -> Option<&HashSet<usize>> {
        self.tails.get(&(head, relation))
    }

    /// Known heads for `(?, relation, tail)`.
    pub fn heads_of(&self, relation: usize, tail: usize) -> Option<&HashSet<usize>> {
        self.heads.get(&(relation, tail))
    }
}

impl FromIterator<Triple> for KnownSet {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut set = KnownSet::new();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// A knowledge graph with its train/valid/test splits.
///
/// Immutable once built; `known` is the union of all three splits.
#[derive(Debug, Clone)]
pub struct KgDataset {
    pub entities: Dictionary,
    pub relations: Dictionary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub known: KnownSet,
}

impl KgDataset {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Loads the three splits, growing the dictionaries across them.
    pub fn load(
        train: impl AsRef<Path>,
        valid: impl AsRef<Path>,
        test: impl AsRef<Path>,
    ) -> Result<Self> {
        let mut entities = Dictionary::new();
        let mut relations = Dictionary::new();
        let train = load_triples(train, &mut entities, &mut relations, true)?;
        let valid = load_triples(valid, &mut entities, &mut relations, true)?;
        let test = load_triples(test, &mut entities, &mut relations, true)?;
        build_dataset(train, valid, test, entities, relations)
    }
}

/// Assembles a dataset, validating every id against the dictionaries.
pub fn build_dataset(
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    entities: Dictionary,
    relations: Dictionary,
) -> Result<KgDataset> {
    let (ne, nr) = (entities.len(), relations.len());
    for t in train.iter().chain(&valid).chain(&test) {
        for id in [t.head, t.tail] {
            if id >= ne {
                return Err(Error::IdOutOfRange {
                    kind: "entity",
                    id,
                    count: ne,
                });
            }
        }
        if t.relation >= nr {
            return Err(Error::IdOutOfRange {
                kind: "relation",
                id: t.relation,
                count: nr,
            });
        }
    }
    let known = train.iter().chain(&valid).chain(&test).copied().collect();
    Ok(KgDataset {
        entities,
        relations,
        train,
        valid,
        test,
        known,
    })
}

/// Entity id -> raw description text.
#[derive(Debug, Clone, Default)]
pub struct DescriptionCorpus {
    pub texts: BTreeMap<usize, String>,
    /// Names that were not in the entity dictionary, or whose text was empty.
    pub skipped: Vec<String>,
}

impl DescriptionCorpus {
    pub fn get(&self, entity: usize) -> Option<&str> {
        self.texts.get(&entity).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

/// Parses `<entity-name>\t<text>` lines, splitting on the first tab only.
pub fn read_descriptions<R: BufRead>(
    reader: R,
    source: &Path,
    entities: &Dictionary,
) -> Result<DescriptionCorpus> {
    let mut corpus = DescriptionCorpus::default();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let (name, text) = line.split_once('\t').ok_or_else(|| {
            Error::parse(source, lineno, "expected `<entity-name>\\t<description>`")
        })?;
        let text = text.trim();
        match entities.get(name) {
            Some(id) if !text.is_empty() => {
                corpus.texts.entry(id).or_insert_with(|| text.to_owned());
            }
            _ => corpus.skipped.push(name.to_owned()),
        }
    }
    Ok(corpus)
}

pub fn load_descriptions(
    path: impl AsRef<Path>,
    entities: &Dictionary,
) -> Result<DescriptionCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_descriptions(BufReader::new(file), path, entities)
}
