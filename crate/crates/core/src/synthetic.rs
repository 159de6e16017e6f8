//! Synthetic knowledge graphs with a planted translational structure.
//!
//! Entities sit at `Σ_i s_i (a/2) ê_i + w_g` for orthonormal axes `ê_i`,
//! signs `s_i ∈ {-1, +1}` and a group offset `w_g` orthogonal to every axis,
//! scaled onto the unit sphere. Relations come in inverse pairs `±a ê_i`
//! (flip one sign up or down); with an odd relation count the last one is
//! the diagonal `a(ê_0 + ê_1)`. Because both ends of every flip lie on the
//! unit sphere, each tail is exactly `normalize(h + l_r)`. Gaussian noise is
//! added to every entity position afterwards.
//!
//! Held-out triples are chosen so their inverse triple stays in train, which
//! makes every held-out fact recoverable from the training graph.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kgdata::{build_dataset, DescriptionCorpus, Dictionary, KgDataset, Triple};
use crate::matrix::{dot, normalize, Matrix};
use crate::wordvec::WordVectorTable;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub dim: usize,
    /// Norm of every planted relation vector.
    pub relation_norm: f64,
    /// Standard deviation of the per-coordinate entity noise.
    pub noise: f64,
    /// How far group offsets spread around a shared direction; larger
    /// values make the hypercube groups easier to tell apart.
    pub group_spread: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_entities: 200,
            num_relations: 5,
            dim: 20,
            relation_norm: 0.6,
            noise: 0.01,
            group_spread: 1.0,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedKg {
    pub dataset: KgDataset,
    /// Noisy ground-truth entity positions, `|E| × dim`.
    pub entity_positions: Matrix,
    /// Planted relation vectors, `|R| × dim`.
    pub relation_vectors: Matrix,
}

/// `count` random orthonormal vectors in `R^dim` (Gram-Schmidt on Gaussians).
fn orthonormal_set<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            normalize(&mut v);
            basis.push(v);
        }
    }
    basis
}

pub fn planted_translation(cfg: &PlantedConfig) -> Result<PlantedKg> {
    let r = cfg.num_relations;
    let a = cfg.relation_norm;
    if r == 0 || r / 2 >= cfg.dim || r > 32 {
        return Err(Error::Invalid(format!(
            "planted graphs need 1 <= |R| <= 32 and |R|/2 < dim (got |R|={r}, dim={})",
            cfg.dim
        )));
    }
    let offset_sq = 1.0 - (r / 2).max(1) as f64 * a * a / 4.0;
    if !(a > 0.0 && offset_sq > 0.0) {
        return Err(Error::Invalid(format!(
            "relation norm {a} too large for {r} relations on the unit sphere"
        )));
    }
    if cfg.num_entities < 2 {
        return Err(Error::Invalid(
            "planted graphs need at least 2 entities".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_axes = (r / 2).max(1);
    let axes = orthonormal_set(n_axes, cfg.dim, &mut rng);
    let corners = 1usize << n_axes;
    let groups = cfg.num_entities.div_ceil(corners);

    // group offsets: a shared direction plus a per-group perturbation, all
    // orthogonal to every relation axis and scaled onto the unit sphere
    let project_out = |w: &mut Vec<f64>| {
        for ax in &axes {
            let p = dot(w, ax);
            for (x, y) in w.iter_mut().zip(ax) {
                *x -= p * y;
            }
        }
    };
    let mut shared: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    project_out(&mut shared);
    normalize(&mut shared);
    let offsets: Vec<Vec<f64>> = (0..groups)
        .map(|_| {
            let mut u: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
            project_out(&mut u);
            normalize(&mut u);
            let mut w: Vec<f64> = shared
                .iter()
                .zip(&u)
                .map(|(s, u)| s + cfg.group_spread * u)
                .collect();
            normalize(&mut w);
            w.iter().map(|x| x * offset_sq.sqrt()).collect()
        })
        .collect();

    let mut slots: Vec<(usize, usize)> = (0..groups)
        .flat_map(|g| (0..corners).map(move |c| (g, c)))
        .collect();
    slots.shuffle(&mut rng);
    slots.truncate(cfg.num_entities);

    let mut positions = Matrix::zeros(cfg.num_entities, cfg.dim);
    let mut lookup = HashMap::new();
    for (id, &(g, c)) in slots.iter().enumerate() {
        lookup.insert((g, c), id);
        let row = positions.row_mut(id);
        row.copy_from_slice(&offsets[g]);
        for (bit, ax) in axes.iter().enumerate() {
            let sign = if c >> bit & 1 == 1 { 1.0 } else { -1.0 };
            for (x, y) in row.iter_mut().zip(ax) {
                *x += sign * a / 2.0 * y;
            }
        }
    }

    // relation -> (axis bits it flips, whether it flips them from - to +)
    let flips: Vec<(usize, bool)> = (0..r)
        .map(|rel| match rel {
            _ if rel < 2 * n_axes => (1 << (rel / 2), rel % 2 == 0),
            _ if n_axes >= 2 => (0b11, true),
            _ => (1, true),
        })
        .collect();
    let mut triples = Vec::new();
    for (id, &(g, c)) in slots.iter().enumerate() {
        for (rel, &(mask, upward)) in flips.iter().enumerate() {
            let head_bits = if upward { 0 } else { mask };
            if c & mask == head_bits {
                if let Some(&tail) = lookup.get(&(g, c ^ mask)) {
                    triples.push(Triple::new(id, rel, tail));
                }
            }
        }
    }

    for x in positions.as_mut_slice() {
        *x += cfg.noise * rng.sample::<f64, _>(StandardNormal);
    }

    let relation_vectors = Matrix::from_rows(
        cfg.dim,
        &flips
            .iter()
            .map(|&(mask, upward)| {
                let sign = if upward { a } else { -a };
                let mut v = vec![0.0; cfg.dim];
                for (bit, ax) in axes.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        for (x, y) in v.iter_mut().zip(ax) {
                            *x += sign * y;
                        }
                    }
                }
                v
            })
            .collect::<Vec<_>>(),
    );

    triples.shuffle(&mut rng);
    let inverse: Vec<Option<usize>> = (0..r)
        .map(|rel| (rel < 2 * n_axes && r >= 2).then_some(rel ^ 1))
        .collect();
    let (train, valid, test) = split_recoverable(
        triples,
        &inverse,
        cfg.num_entities,
        cfg.valid_fraction,
        cfg.test_fraction,
    );

    let entities = Dictionary::from_names((0..cfg.num_entities).map(|i| format!("e{i}")))?;
    let relations = Dictionary::from_names((0..r).map(|i| format!("r{i}")))?;
    let dataset = build_dataset(train, valid, test, entities, relations)?;
    Ok(PlantedKg {
        dataset,
        entity_positions: positions,
        relation_vectors,
    })
}

/// Carves valid/test out of `triples` (already shuffled). A triple is only
/// held out when its inverse triple stays in train and neither of its
/// entities would be left without a training triple.
fn split_recoverable(
    triples: Vec<Triple>,
    inverse: &[Option<usize>],
    num_entities: usize,
    valid_fraction: f64,
    test_fraction: f64,
) -> (Vec<Triple>, Vec<Triple>, Vec<Triple>) {
    let n = triples.len();
    let n_valid = (n as f64 * valid_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let all: HashSet<Triple> = triples.iter().copied().collect();
    let mut degree = vec![0usize; num_entities];
    for t in &triples {
        degree[t.head] += 1;
        degree[t.tail] += 1;
    }
    let mut pinned = HashSet::new();
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in triples {
        let inv = inverse[t.relation]
            .map(|r| Triple::new(t.tail, r, t.head))
            .filter(|inv| all.contains(inv));
        let eligible =
            inv.is_some() && !pinned.contains(&t) && degree[t.head] > 1 && degree[t.tail] > 1;
        if eligible && (test.len() < n_test || valid.len() < n_valid) {
            degree[t.head] -= 1;
            degree[t.tail] -= 1;
            pinned.extend(inv);
            if test.len() < n_test {
                test.push(t);
            } else {
                valid.push(t);
            }
        } else {
            train.push(t);
        }
    }
    (train, valid, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDescriptionConfig {
    /// Word-vector dimension `D`.
    pub word_dim: usize,
    pub tokens_per_entity: usize,
    /// Standard deviation of the per-coordinate token noise.
    pub token_noise: f64,
    /// Fraction of entities that receive a description.
    pub coverage: f64,
    pub seed: u64,
}

impl Default for SyntheticDescriptionConfig {
    fn default() -> Self {
        SyntheticDescriptionConfig {
            word_dim: 50,
            tokens_per_entity: 3,
            token_noise: 0.1,
            coverage: 1.0,
            seed: 0,
        }
    }
}

/// Descriptions whose tokens carry noisy copies of the true entity positions,
/// embedded into `word_dim` dimensions by a random isometry. Each description
/// also starts with the shared filler token `the`, whose vector is pure noise.
pub fn synthetic_descriptions(
    planted: &PlantedKg,
    cfg: &SyntheticDescriptionConfig,
) -> Result<(DescriptionCorpus, WordVectorTable)> {
    let k = planted.entity_positions.cols();
    if cfg.word_dim < k {
        return Err(Error::Invalid(format!(
            "word dimension {} must be at least the planted dimension {k}",
            cfg.word_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = orthonormal_set(k, cfg.word_dim, &mut rng);

    let filler: Vec<f64> = (0..cfg.word_dim)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut entries = vec![("the".to_owned(), filler)];
    let mut corpus = DescriptionCorpus::default();
    for e in 0..planted.entity_positions.rows() {
        if !rng.gen_bool(cfg.coverage.clamp(0.0, 1.0)) {
            continue;
        }
        let pos = planted.entity_positions.row(e);
        let mut words = vec!["the".to_owned()];
        for j in 0..cfg.tokens_per_entity {
            let mut v = vec![0.0; cfg.word_dim];
            for (c, b) in pos.iter().zip(&basis) {
                for (x, y) in v.iter_mut().zip(b) {
                    *x += c * y;
                }
            }
            for x in &mut v {
                *x += cfg.token_noise * rng.sample::<f64, _>(StandardNormal);
            }
            let token = format!("tok{e}x{j}");
            words.push(token.clone());
            entries.push((token, v));
        }
        corpus.texts.insert(e, format!("{}.", words.join(" ")));
    }
    let table = WordVectorTable::from_entries(cfg.word_dim, entries)?;
    Ok((corpus, table))
}
