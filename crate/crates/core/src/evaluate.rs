//! Link-prediction ranking, learning-curve snapshots, and the Mann-Whitney U
//! test for comparing two runs.
//!
//! Ranks use the strict-less convention: `rank = 1 + #{e ≠ true : d(e) < d(true)}`,
//! so ties never worsen a rank. The filtered setting also drops candidates
//! whose substituted triple is a known true triple.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kgdata::{KnownSet, Triple};
use crate::transe::{distance, ModelParams, Side};

/// Raw and filtered rank of the true entity for one side of one triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideRanks {
    pub raw: usize,
    pub filtered: usize,
}

fn check_ids(params: &ModelParams, t: &Triple) -> Result<()> {
    let ne = params.num_entities();
    if ne == 0 {
        return Err(Error::Invalid(
            "cannot rank over an empty entity set".into(),
        ));
    }
    for id in [t.head, t.tail] {
        if id >= ne {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id,
                count: ne,
            });
        }
    }
    if t.relation >= params.num_relations() {
        return Err(Error::IdOutOfRange {
            kind: "relation",
            id: t.relation,
            count: params.num_relations(),
        });
    }
    Ok(())
}

/// Ranks the true entity in `side` of `triple` against every entity,
/// returning both the raw and the filtered rank.
pub fn rank_both(
    params: &ModelParams,
    triple: &Triple,
    side: Side,
    known: Option<&KnownSet>,
) -> Result<SideRanks> {
    check_ids(params, triple)?;
    let ents = &params.entities;
    let l = params.relations.row(triple.relation);
    let (h, t) = (ents.row(triple.head), ents.row(triple.tail));
    let true_d = distance(h, l, t, params.metric);
    let (truth, others) = match side {
        Side::Head => (
            triple.head,
            known.and_then(|k| k.heads_of(triple.relation, triple.tail)),
        ),
        Side::Tail => (
            triple.tail,
            known.and_then(|k| k.tails_of(triple.head, triple.relation)),
        ),
    };

    let mut raw = 1;
    let mut filtered = 1;
    for e in 0..ents.rows() {
        if e == truth {
            continue;
        }
        let d = match side {
            Side::Head => distance(ents.row(e), l, t, params.metric),
            Side::Tail => distance(h, l, ents.row(e), params.metric),
        };
        if d < true_d {
            raw += 1;
            if !others.is_some_and(|o| o.contains(&e)) {
                filtered += 1;
            }
        }
    }
    Ok(SideRanks { raw, filtered })
}

/// Rank of the true entity; filtered when `known` is given, raw otherwise.
pub fn rank_entity(
    params: &ModelParams,
    triple: &Triple,
    side: Side,
    known: Option<&KnownSet>,
) -> Result<usize> {
    let r = rank_both(params, triple, side, known)?;
    Ok(if known.is_some() { r.filtered } else { r.raw })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleRanks {
    pub head: SideRanks,
    pub tail: SideRanks,
}

/// Aggregates over the `2·n` head and tail ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSummary {
    pub mean_rank_raw: f64,
    pub mean_rank_filt: f64,
    pub hits10_raw: f64,
    pub hits10_filt: f64,
    pub mrr_raw: f64,
    pub mrr_filt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankStats {
    pub mean_rank: f64,
    pub hits10: f64,
    pub mrr: f64,
}

/// Mean rank, hits@10 and MRR of a rank list.
pub fn rank_stats(ranks: impl IntoIterator<Item = usize>) -> RankStats {
    let (mut n, mut sum, mut hits, mut rr) = (0usize, 0.0, 0usize, 0.0);
    for r in ranks {
        n += 1;
        sum += r as f64;
        rr += 1.0 / r as f64;
        if r <= 10 {
            hits += 1;
        }
    }
    if n == 0 {
        return RankStats {
            mean_rank: f64::NAN,
            hits10: f64::NAN,
            mrr: f64::NAN,
        };
    }
    let n = n as f64;
    RankStats {
        mean_rank: sum / n,
        hits10: hits as f64 / n,
        mrr: rr / n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub triples: Vec<Triple>,
    pub ranks: Vec<TripleRanks>,
    pub summary: RankSummary,
}

impl RankingReport {
    pub fn from_ranks(triples: Vec<Triple>, ranks: Vec<TripleRanks>) -> Self {
        let summary = summarize(&ranks);
        RankingReport {
            triples,
            ranks,
            summary,
        }
    }

    /// Head and tail raw ranks, interleaved per triple.
    pub fn raw_ranks(&self) -> Vec<usize> {
        self.ranks
            .iter()
            .flat_map(|r| [r.head.raw, r.tail.raw])
            .collect()
    }

    /// Head and tail filtered ranks, interleaved per triple.
    pub fn filtered_ranks(&self) -> Vec<usize> {
        self.ranks
            .iter()
            .flat_map(|r| [r.head.filtered, r.tail.filtered])
            .collect()
    }

    /// Per-rank CSV followed by a blank line and a `metric,value` summary block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("triple_id,side,rank_raw,rank_filt\n");
        for (i, r) in self.ranks.iter().enumerate() {
            let _ = writeln!(out, "{i},head,{},{}", r.head.raw, r.head.filtered);
            let _ = writeln!(out, "{i},tail,{},{}", r.tail.raw, r.tail.filtered);
        }
        let s = &self.summary;
        out.push_str("\nmetric,value\n");
        for (name, v) in [
            ("mean_rank_raw", s.mean_rank_raw),
            ("mean_rank_filt", s.mean_rank_filt),
            ("hits10_raw", s.hits10_raw),
            ("hits10_filt", s.hits10_filt),
            ("mrr_raw", s.mrr_raw),
            ("mrr_filt", s.mrr_filt),
        ] {
            let _ = writeln!(out, "{name},{v}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn summarize(ranks: &[TripleRanks]) -> RankSummary {
    let raw = rank_stats(ranks.iter().flat_map(|r| [r.head.raw, r.tail.raw]));
    let filt = rank_stats(
        ranks
            .iter()
            .flat_map(|r| [r.head.filtered, r.tail.filtered]),
    );
    RankSummary {
        mean_rank_raw: raw.mean_rank,
        mean_rank_filt: filt.mean_rank,
        hits10_raw: raw.hits10,
        hits10_filt: filt.hits10,
        mrr_raw: raw.mrr,
        mrr_filt: filt.mrr,
    }
}

/// Ranks both sides of every triple in raw and filtered settings.
///
/// Triples are ranked in parallel; the result is identical to sequential
/// evaluation.
pub fn evaluate(
    params: &ModelParams,
    triples: &[Triple],
    known: &KnownSet,
) -> Result<RankingReport> {
    if triples.is_empty() {
        return Err(Error::Invalid("no triples to evaluate".into()));
    }
    let ranks = triples
        .par_iter()
        .map(|t| {
            Ok(TripleRanks {
                head: rank_both(params, t, Side::Head, Some(known))?,
                tail: rank_both(params, t, Side::Tail, Some(known))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingReport::from_ranks(triples.to_vec(), ranks))
}

/// One row of a report CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportRow {
    pub triple_id: usize,
    pub side: Side,
    pub raw: usize,
    pub filtered: usize,
}

/// Parses the per-rank section of a report CSV (everything before the
/// first blank line).
pub fn parse_report_rows(text: &str, source: &Path) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "triple_id,side,rank_raw,rank_filt")) => {}
        _ => {
            return Err(Error::parse(
                source,
                1,
                "expected header `triple_id,side,rank_raw,rank_filt`",
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            break;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::parse(source, i + 1, format!("{what} in `{line}`"));
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let side = match f[1] {
            "head" => Side::Head,
            "tail" => Side::Tail,
            _ => return Err(bad("side must be head or tail")),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid integer"));
        rows.push(ReportRow {
            triple_id: num(f[0])?,
            side,
            raw: num(f[2])?,
            filtered: num(f[3])?,
        });
    }
    Ok(rows)
}

pub fn load_report_rows(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report_rows(&text, path)
}

/// Outcome of a two-sided Mann-Whitney U test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceResult {
    /// U for the first sample: `R_a - n_a(n_a + 1)/2`.
    pub u: f64,
    pub z: f64,
    pub p_two_sided: f64,
    /// Set when every observation is identical (zero variance); `p` is then 1.
    pub degenerate: bool,
}

/// Midranks (1-based, ties averaged) of `values`, in input order.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share the average of ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney U with average-rank ties and a normal approximation using
/// the tie-corrected variance and a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid(
            "Mann-Whitney U needs two non-empty samples".into(),
        ));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;

    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 || !variance.is_finite() {
        return Ok(SignificanceResult {
            u,
            z: 0.0,
            p_two_sided: 1.0,
            degenerate: true,
        });
    }
    let mean = n1 * n2 / 2.0;
    let dev = ((u - mean).abs() - 0.5).max(0.0);
    let z = dev / variance.sqrt() * (u - mean).signum();
    let normal = Normal::standard();
    let p = (2.0 * normal.sf(dev / variance.sqrt())).clamp(0.0, 1.0);
    Ok(SignificanceResult {
        u,
        z,
        p_two_sided: p,
        degenerate: false,
    })
}

/// Mann-Whitney on integer ranks (e.g. pooled head/tail ranks of two runs).
pub fn compare_ranks(a: &[usize], b: &[usize]) -> Result<SignificanceResult> {
    let to_f = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    mann_whitney_u(&to_f(a), &to_f(b))
}

/// One learning-curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub mean_rank_raw: f64,
    pub mean_rank_filt: f64,
    pub hits10_raw: f64,
    pub hits10_filt: f64,
}

/// Ranks a fixed sample of triples and returns a curve row for `epoch`.
pub fn curve_snapshot(
    params: &ModelParams,
    sample: &[Triple],
    known: &KnownSet,
    epoch: usize,
) -> Result<CurveRow> {
    let s = evaluate(params, sample, known)?.summary;
    Ok(CurveRow {
        epoch,
        mean_rank_raw: s.mean_rank_raw,
        mean_rank_filt: s.mean_rank_filt,
        hits10_raw: s.hits10_raw,
        hits10_filt: s.hits10_filt,
    })
}

/// Draws the curve sample once per run: `size` triples without replacement,
/// or the whole split when it is smaller. Preserves split order.
pub fn sample_triples<R: Rng + ?Sized>(split: &[Triple], size: usize, rng: &mut R) -> Vec<Triple> {
    if split.len() <= size {
        return split.to_vec();
    }
    let mut idx = index::sample(rng, split.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| split[i]).collect()
}

/// Learning curve with strictly increasing epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    rows: Vec<CurveRow>,
}

impl Curve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: CurveRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::Invalid(format!(
                    "curve epochs must increase: {} after {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[CurveRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_rank_raw,mean_rank_filt,hits10_raw,hits10_filt\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.mean_rank_raw, r.mean_rank_filt, r.hits10_raw, r.hits10_filt
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
