//! The TransE translational model: `h + l ≈ t` for true triples.
//!
//! Training minimizes the margin hinge loss
//! `[γ + d(h + l, t) - d(h' + l, t')]₊` over positive triples and one fresh
//! corruption per positive per epoch, with minibatch SGD. Entity rows touched
//! by a batch are projected back to unit L2 norm after the update; relation
//! rows are normalized once at initialization and never constrained again.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descinit::fill_uniform;
use crate::error::{Error, Result};
use crate::kgdata::{Dictionary, KgDataset, Triple};
use crate::matrix::{normalize, Matrix};

/// L2 distances below this have an undefined gradient, taken as zero.
pub const L2_GRADIENT_EPS: f64 = 1e-12;

/// Dissimilarity norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    L1,
    L2,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L1 => "L1",
            Metric::L2 => "L2",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L1" | "l1" => Ok(Metric::L1),
            "L2" | "l2" => Ok(Metric::L2),
            other => Err(Error::Invalid(format!(
                "unknown metric `{other}` (expected L1 or L2)"
            ))),
        }
    }
}

/// `d(h + l, t)` without length checks.
#[inline]
pub(crate) fn distance(h: &[f64], l: &[f64], t: &[f64], metric: Metric) -> f64 {
    let diffs = h.iter().zip(l).zip(t).map(|((h, l), t)| h + l - t);
    match metric {
        Metric::L1 => diffs.map(f64::abs).sum(),
        Metric::L2 => diffs.map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// `d(h + l, t)` under the given metric.
pub fn dissimilarity(h: &[f64], l: &[f64], t: &[f64], metric: Metric) -> Result<f64> {
    for other in [l.len(), t.len()] {
        if other != h.len() {
            return Err(Error::Dimension {
                expected: h.len(),
                found: other,
            });
        }
    }
    Ok(distance(h, l, t, metric))
}

/// `max(0, γ + d_pos - d_neg)`.
pub fn triplet_loss(d_pos: f64, d_neg: f64, margin: f64) -> f64 {
    (margin + d_pos - d_neg).max(0.0)
}

/// Which slot a corruption replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

/// Replaces the head or the tail (each with probability 1/2) by an entity
/// drawn uniformly from all entities except the current occupant.
pub fn corrupt<R: Rng + ?Sized>(
    triple: Triple,
    num_entities: usize,
    rng: &mut R,
) -> Result<Triple> {
    if num_entities < 2 {
        return Err(Error::Invalid(format!(
            "corruption needs at least 2 entities, have {num_entities}"
        )));
    }
    let side = if rng.gen_bool(0.5) {
        Side::Head
    } else {
        Side::Tail
    };
    Ok(corrupt_side(triple, side, num_entities, rng))
}

pub(crate) fn corrupt_side<R: Rng + ?Sized>(
    triple: Triple,
    side: Side,
    num_entities: usize,
    rng: &mut R,
) -> Triple {
    let current = match side {
        Side::Head => triple.head,
        Side::Tail => triple.tail,
    };
    // draw from n-1 values and skip over the current occupant
    let mut e = rng.gen_range(0..num_entities - 1);
    if e >= current {
        e += 1;
    }
    match side {
        Side::Head => Triple { head: e, ..triple },
        Side::Tail => Triple { tail: e, ..triple },
    }
}

/// Entity and relation embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub entities: Matrix,
    pub relations: Matrix,
    pub metric: Metric,
}

impl ModelParams {
    /// Relations uniform in `[-6/√k, 6/√k]` and normalized once. Entities
    /// come from `entities` when given (must be `num_entities × k` with unit
    /// rows), otherwise uniform then normalized. Entities are drawn first.
    pub fn init<R: Rng + ?Sized>(
        num_entities: usize,
        num_relations: usize,
        k: usize,
        metric: Metric,
        entities: Option<Matrix>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid(
                "embedding dimension must be positive".into(),
            ));
        }
        let entities = match entities {
            Some(m) => {
                if m.rows() != num_entities || m.cols() != k {
                    return Err(Error::Invalid(format!(
                        "initial entity matrix is {}x{}, expected {num_entities}x{k}",
                        m.rows(),
                        m.cols()
                    )));
                }
                let dev = m.max_unit_norm_deviation();
                if dev > 1e-6 {
                    return Err(Error::Invalid(format!(
                        "initial entity rows must have unit norm (max deviation {dev:e})"
                    )));
                }
                m
            }
            None => {
                let mut m = Matrix::zeros(num_entities, k);
                for i in 0..num_entities {
                    fill_uniform(m.row_mut(i), rng);
                }
                m.normalize_rows();
                m
            }
        };
        let mut relations = Matrix::zeros(num_relations, k);
        for i in 0..num_relations {
            fill_uniform(relations.row_mut(i), rng);
        }
        relations.normalize_rows();
        Ok(ModelParams {
            entities,
            relations,
            metric,
        })
    }

    pub fn k(&self) -> usize {
        self.entities.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    /// `d(h + l, t)` for a triple of ids.
    pub fn score(&self, t: &Triple) -> f64 {
        distance(
            self.entities.row(t.head),
            self.relations.row(t.relation),
            self.entities.row(t.tail),
            self.metric,
        )
    }

    /// Errors unless the parameter shapes match the given dictionary sizes.
    pub fn check_dims(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        if self.num_entities() != num_entities {
            return Err(Error::Invalid(format!(
                "checkpoint has {} entities but the dataset has {num_entities}",
                self.num_entities()
            )));
        }
        if self.num_relations() != num_relations {
            return Err(Error::Invalid(format!(
                "checkpoint has {} relations but the dataset has {num_relations}",
                self.num_relations()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            margin: 1.0,
            epochs: 1000,
            batch_size: 100,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_real = |v: f64| v.is_finite() && v > 0.0;
        if !positive_real(self.learning_rate) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !positive_real(self.margin) {
            return Err(Error::Invalid(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Invalid("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// Aggregate over one batch or one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Summed hinge loss, each term evaluated before its batch's update.
    pub loss: f64,
    /// Triplets with a nonzero hinge term.
    pub active: usize,
    pub seen: usize,
}

impl EpochStats {
    fn absorb(&mut self, other: &EpochStats) {
        self.loss += other.loss;
        self.active += other.active;
        self.seen += other.seen;
    }
}

/// Sparse gradient of the summed hinge loss over a set of (positive, negative) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
    pub loss: f64,
    pub active: usize,
}

/// Writes `∂d(h + l, t)/∂h` into `out`. L1: sign with sign(0) = 0. L2: the
/// unit residual, or zero below [`L2_GRADIENT_EPS`].
fn distance_gradient(h: &[f64], l: &[f64], t: &[f64], metric: Metric, d: f64, out: &mut [f64]) {
    for (((o, h), l), t) in out.iter_mut().zip(h).zip(l).zip(t) {
        let r = h + l - t;
        *o = match metric {
            Metric::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Metric::L2 => {
                if d < L2_GRADIENT_EPS {
                    0.0
                } else {
                    r / d
                }
            }
        };
    }
}

fn accumulate(map: &mut BTreeMap<usize, Vec<f64>>, id: usize, k: usize, g: &[f64], sign: f64) {
    let acc = map.entry(id).or_insert_with(|| vec![0.0; k]);
    for (a, x) in acc.iter_mut().zip(g) {
        *a += sign * x;
    }
}

/// Summed hinge loss over `pairs` at the current parameters.
pub fn batch_loss(params: &ModelParams, pairs: &[(Triple, Triple)], margin: f64) -> f64 {
    pairs
        .iter()
        .map(|(pos, neg)| triplet_loss(params.score(pos), params.score(neg), margin))
        .sum()
}

/// Analytic gradient of [`batch_loss`], evaluated at fixed parameters.
pub fn batch_gradient(params: &ModelParams, pairs: &[(Triple, Triple)], margin: f64) -> Gradient {
    let k = params.k();
    let mut grad = Gradient::default();
    let mut g_pos = vec![0.0; k];
    let mut g_neg = vec![0.0; k];
    for (pos, neg) in pairs {
        let d_pos = params.score(pos);
        let d_neg = params.score(neg);
        let term = triplet_loss(d_pos, d_neg, margin);
        if term <= 0.0 {
            continue;
        }
        grad.loss += term;
        grad.active += 1;

        let row = |t: &Triple| {
            (
                params.entities.row(t.head),
                params.relations.row(t.relation),
                params.entities.row(t.tail),
            )
        };
        let (h, l, t) = row(pos);
        distance_gradient(h, l, t, params.metric, d_pos, &mut g_pos);
        let (h, l, t) = row(neg);
        distance_gradient(h, l, t, params.metric, d_neg, &mut g_neg);

        accumulate(&mut grad.entities, pos.head, k, &g_pos, 1.0);
        accumulate(&mut grad.entities, pos.tail, k, &g_pos, -1.0);
        accumulate(&mut grad.relations, pos.relation, k, &g_pos, 1.0);
        accumulate(&mut grad.entities, neg.head, k, &g_neg, -1.0);
        accumulate(&mut grad.entities, neg.tail, k, &g_neg, 1.0);
        accumulate(&mut grad.relations, neg.relation, k, &g_neg, -1.0);
    }
    grad
}

/// One minibatch step: sample a corruption per positive, take a gradient
/// step of size `learning_rate` on the summed hinge loss, then renormalize
/// the entity rows that received an update.
///
/// `epoch` and `offset` (index of the batch's first triple within the epoch)
/// only label non-finite diagnostics.
pub fn sgd_batch<R: Rng + ?Sized>(
    params: &mut ModelParams,
    batch: &[Triple],
    config: &TrainConfig,
    rng: &mut R,
    epoch: usize,
    offset: usize,
) -> Result<EpochStats> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let n = params.num_entities();
    let mut pairs = Vec::with_capacity(batch.len());
    for &pos in batch {
        pairs.push((pos, corrupt(pos, n, rng)?));
    }
    for (i, (pos, neg)) in pairs.iter().enumerate() {
        let (dp, dn) = (params.score(pos), params.score(neg));
        if !dp.is_finite() || !dn.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                triple_index: offset + i,
                detail: format!("d_pos = {dp}, d_neg = {dn} for {pos:?} / {neg:?}"),
            });
        }
    }

    let grad = batch_gradient(params, &pairs, config.margin);
    let lr = config.learning_rate;
    for (&id, g) in &grad.relations {
        for (p, x) in params.relations.row_mut(id).iter_mut().zip(g) {
            *p -= lr * x;
        }
    }
    for (&id, g) in &grad.entities {
        let row = params.entities.row_mut(id);
        for (p, x) in row.iter_mut().zip(g) {
            *p -= lr * x;
        }
        normalize(row);
    }

    let touched = grad
        .entities
        .keys()
        .map(|&id| params.entities.row(id))
        .chain(grad.relations.keys().map(|&id| params.relations.row(id)));
    for row in touched {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                triple_index: offset,
                detail: "parameter became non-finite after the batch update".into(),
            });
        }
    }

    Ok(EpochStats {
        epoch,
        loss: grad.loss,
        active: grad.active,
        seen: batch.len(),
    })
}

/// What a training observer asks for after a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Stateful epoch-by-epoch trainer over a dataset's train split.
#[derive(Debug)]
pub struct Trainer<'a> {
    train: &'a [Triple],
    config: TrainConfig,
    params: ModelParams,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    /// Initializes parameters from `config.seed`. See [`ModelParams::init`].
    pub fn new(
        dataset: &'a KgDataset,
        init_entities: Option<Matrix>,
        config: TrainConfig,
        metric: Metric,
        k: usize,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.num_entities() < 2 {
            return Err(Error::Invalid("training needs at least 2 entities".into()));
        }
        if dataset.train.is_empty() {
            return Err(Error::Invalid("training split is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(
            dataset.num_entities(),
            dataset.num_relations(),
            k,
            metric,
            init_entities,
            &mut rng,
        )?;
        Ok(Trainer {
            train: &dataset.train,
            order: (0..dataset.train.len()).collect(),
            config,
            params,
            rng,
            epoch: 0,
        })
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// Shuffles the train split and runs one pass of minibatches.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        self.epoch += 1;
        let mut stats = EpochStats {
            epoch: self.epoch,
            ..EpochStats::default()
        };
        self.order.shuffle(&mut self.rng);
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for (chunk_index, chunk) in self.order.chunks(self.config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| self.train[i]));
            let part = sgd_batch(
                &mut self.params,
                &batch,
                &self.config,
                &mut self.rng,
                self.epoch,
                chunk_index * self.config.batch_size,
            )?;
            stats.absorb(&part);
        }
        Ok(stats)
    }
}

/// Trains for `config.epochs` epochs.
///
/// `observer` fires before the first epoch (epoch 0) and after every
/// `eval_every`-th epoch; returning [`Control::Stop`] ends training early.
pub fn train_with<F>(
    dataset: &KgDataset,
    init_entities: Option<Matrix>,
    config: &TrainConfig,
    metric: Metric,
    k: usize,
    mut observer: F,
) -> Result<(ModelParams, Vec<EpochStats>)>
where
    F: FnMut(usize, &ModelParams) -> Result<Control>,
{
    let mut trainer = Trainer::new(dataset, init_entities, config.clone(), metric, k)?;
    let mut history = Vec::with_capacity(config.epochs);
    if observer(0, trainer.params())? == Control::Stop {
        return Ok((trainer.into_params(), history));
    }
    while trainer.epoch() < config.epochs {
        history.push(trainer.run_epoch()?);
        let e = trainer.epoch();
        if e % config.eval_every == 0 && observer(e, trainer.params())? == Control::Stop {
            break;
        }
    }
    Ok((trainer.into_params(), history))
}

pub fn train(
    dataset: &KgDataset,
    init_entities: Option<Matrix>,
    config: &TrainConfig,
    metric: Metric,
    k: usize,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    train_with(dataset, init_entities, config, metric, k, |_, _| {
        Ok(Control::Continue)
    })
}

const CHECKPOINT_MAGIC: &str = "TRANSE v1";

/// Companion dictionary paths written next to a checkpoint.
pub fn dictionary_paths(checkpoint: &Path) -> (PathBuf, PathBuf) {
    (
        checkpoint.with_extension("entities.tsv"),
        checkpoint.with_extension("relations.tsv"),
    )
}

/// Writes the text checkpoint. Floats use Rust's shortest round-trip
/// formatting, so a reload is bit-exact.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    writeln!(
        w,
        "{} {} {} {}",
        params.num_entities(),
        params.num_relations(),
        params.k(),
        params.metric
    )?;
    for row in params
        .entities
        .iter_rows()
        .chain(params.relations.iter_rows())
    {
        let mut first = true;
        for x in row {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            write!(w, "{x:?}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Saves `params` to `path`, plus `<stem>.entities.tsv` / `<stem>.relations.tsv`
/// dictionaries when given.
pub fn save_checkpoint(
    params: &ModelParams,
    dicts: Option<(&Dictionary, &Dictionary)>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some((entities, relations)) = dicts {
        params.check_dims(entities.len(), relations.len())?;
        let (ep, rp) = dictionary_paths(path);
        entities.save(ep)?;
        relations.save(rp)?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(params, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<R: BufRead>(reader: R, source: &Path) -> Result<ModelParams> {
    let bad = |message: String| Error::Checkpoint {
        path: source.to_path_buf(),
        message,
    };
    let mut lines = reader.lines();
    let mut next_line =
        || -> Result<Option<String>> { lines.next().transpose().map_err(|e| Error::io(source, e)) };

    match next_line()? {
        Some(l) if l.trim_end() == CHECKPOINT_MAGIC => {}
        Some(l) => {
            return Err(bad(format!(
                "bad magic line `{l}`, expected `{CHECKPOINT_MAGIC}`"
            )))
        }
        None => return Err(bad("empty file".into())),
    }
    let header = next_line()?.ok_or_else(|| bad("missing dimension header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(bad(format!("malformed header `{header}`")));
    }
    let parse_count = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("invalid {what} `{s}` in header")))
    };
    let ne = parse_count(fields[0], "entity count")?;
    let nr = parse_count(fields[1], "relation count")?;
    let k = parse_count(fields[2], "dimension")?;
    let metric: Metric = fields[3]
        .parse()
        .map_err(|_| bad(format!("invalid metric `{}`", fields[3])))?;

    let expected_rows = ne + nr;
    let mut data = Vec::with_capacity(expected_rows * k);
    let mut rows = 0;
    while let Some(line) = next_line()? {
        if line.trim().is_empty() {
            continue;
        }
        if rows == expected_rows {
            return Err(bad(format!("expected {expected_rows} rows, found more")));
        }
        let before = data.len();
        for field in line.split_whitespace() {
            let x: f64 = field
                .parse()
                .map_err(|_| bad(format!("row {}: invalid number `{field}`", rows + 1)))?;
            data.push(x);
        }
        if data.len() - before != k {
            return Err(bad(format!(
                "row {}: expected {k} values, found {}",
                rows + 1,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != expected_rows {
        return Err(bad(format!("expected {expected_rows} rows, found {rows}")));
    }
    let relations = Matrix::from_vec(nr, k, data.split_off(ne * k));
    let entities = Matrix::from_vec(ne, k, data);
    Ok(ModelParams {
        entities,
        relations,
        metric,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}
