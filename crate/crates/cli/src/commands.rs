use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgdesc::descinit::{init_entities, InitOptions, InitReport, StopWords};
use kgdesc::evaluate::{
    compare_ranks, curve_snapshot, evaluate, load_report_rows, sample_triples, Curve, RankSummary,
    SignificanceResult,
};
use kgdesc::kgdata::load_descriptions;
use kgdesc::transe::{dictionary_paths, load_checkpoint, save_checkpoint, train_with, Control};
use kgdesc::{Dictionary, KgDataset, Matrix, ModelParams, Triple, WordVectorTable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, Split};
use crate::manifest::{RunManifest, MANIFEST_FILE};

/// Random streams carved out of the run seed. Training itself uses stream 0.
const CURVE_STREAM: u64 = 1;
const FALLBACK_STREAM: u64 = 2;

pub const INIT_CHECKPOINT: &str = "init.transe";
pub const INIT_REPORT: &str = "init_report.csv";
pub const MODEL_CHECKPOINT: &str = "model.transe";
pub const CURVE_FILE: &str = "curve.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn load_dataset(cfg: &RunConfig, manifest: Option<&mut RunManifest>) -> Result<KgDataset> {
    let (train, valid, test) = cfg.dataset_paths()?;
    let dataset = KgDataset::load(train, valid, test)?;
    if let Some(m) = manifest {
        for p in [train, valid, test] {
            m.add_input(p)?;
        }
    }
    Ok(dataset)
}

fn split_of(dataset: &KgDataset, split: Split) -> &[Triple] {
    match split {
        Split::Train => &dataset.train,
        Split::Valid => &dataset.valid,
        Split::Test => &dataset.test,
    }
}

/// Averaged-description initial entity matrix with `cfg.pca_dim()` columns.
pub fn description_init(
    cfg: &RunConfig,
    dataset: &KgDataset,
    manifest: Option<&mut RunManifest>,
) -> Result<(Matrix, InitReport)> {
    let (descriptions_path, vectors_path) = cfg.require_description_inputs()?;
    let k = cfg.pca_dim();
    let table = WordVectorTable::load(vectors_path, None)?;
    if k == 0 || k > table.dim() {
        bail!(
            "config error: pca_dim {k} must be between 1 and the word vector dimension {}",
            table.dim()
        );
    }
    let corpus = load_descriptions(descriptions_path, &dataset.entities)?;
    let stopwords = match (&cfg.stopword_path, cfg.remove_stopwords) {
        (_, false) => None,
        (Some(p), true) => Some(StopWords::load(p)?),
        (None, true) => Some(StopWords::english()),
    };
    let options = InitOptions {
        k,
        stopwords: stopwords.as_ref(),
        case_fold: cfg.case_fold,
    };
    let mut rng = stream_rng(cfg.seed, FALLBACK_STREAM);
    let out = init_entities(&corpus, &table, dataset.num_entities(), options, &mut rng)?;
    if let Some(m) = manifest {
        m.add_input(descriptions_path)?;
        m.add_input(vectors_path)?;
        if let (Some(p), true) = (&cfg.stopword_path, cfg.remove_stopwords) {
            m.add_input(p)?;
        }
    }
    Ok(out)
}

pub fn init_report_csv(report: &InitReport, entities: &Dictionary) -> String {
    let mut out = String::from("entity,source,tokens_total,tokens_matched\n");
    for (id, e) in report.entities.iter().enumerate() {
        let name = entities.name(id).unwrap_or_default();
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            e.source.as_str(),
            e.tokens_total,
            e.tokens_matched
        );
    }
    out
}

pub fn cmd_init(cfg: &RunConfig, out_dir: &Path, threads: Option<usize>) -> Result<InitReport> {
    let mut manifest = RunManifest::new("init", cfg.seed, threads, cfg.snapshot());
    let dataset = load_dataset(cfg, Some(&mut manifest))?;
    let (entities, report) = description_init(cfg, &dataset, Some(&mut manifest))?;
    create_dir(out_dir)?;

    let k = entities.cols();
    let params = ModelParams {
        entities,
        relations: Matrix::zeros(0, k),
        metric: cfg.metric,
    };
    let ckpt = out_dir.join(INIT_CHECKPOINT);
    save_checkpoint(
        &params,
        Some((&dataset.entities, &Dictionary::new())),
        &ckpt,
    )?;
    let report_path = out_dir.join(INIT_REPORT);
    std::fs::write(&report_path, init_report_csv(&report, &dataset.entities))
        .with_context(|| format!("cannot write {}", report_path.display()))?;
    manifest.add_output(&ckpt)?;
    manifest.add_output(&report_path)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;

    println!(
        "entities: {}  described: {}  fallback: {} ({:.1}%)",
        report.entities.len(),
        report.described(),
        report.fallback(),
        100.0 * report.fallback_fraction()
    );
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Curve,
    pub epochs_run: usize,
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path, threads: Option<usize>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("train", cfg.seed, threads, cfg.snapshot());
    let dataset = load_dataset(cfg, Some(&mut manifest))?;
    if cfg.patience > 0 && dataset.valid.is_empty() {
        bail!("config error: patience needs a non-empty validation split");
    }
    let init = match cfg.init {
        crate::config::InitMode::Random => None,
        crate::config::InitMode::Descriptions => {
            let (m, report) = description_init(cfg, &dataset, Some(&mut manifest))?;
            eprintln!(
                "description init: {} described, {} fallback",
                report.described(),
                report.fallback()
            );
            Some(m)
        }
    };
    let sample = sample_triples(
        split_of(&dataset, cfg.curve_split),
        cfg.curve_sample,
        &mut stream_rng(cfg.seed, CURVE_STREAM),
    );
    if sample.is_empty() {
        bail!("config error: curve split `{}` is empty", cfg.curve_split);
    }
    create_dir(out_dir)?;
    let snapshot_dir = out_dir.join(SNAPSHOT_DIR);
    if cfg.save_snapshots {
        create_dir(&snapshot_dir)?;
    }

    let mut curve = Curve::new();
    let mut best: Option<(f64, usize)> = None;
    let mut last_epoch = 0;
    let (params, history) = train_with(
        &dataset,
        init,
        &cfg.train_config(),
        cfg.metric,
        cfg.k,
        |epoch, params| {
            last_epoch = epoch;
            let row = curve_snapshot(params, &sample, &dataset.known, epoch)?;
            eprintln!(
                "epoch {epoch}: {} mean rank raw {:.2} filt {:.2}, hits@10 raw {:.4} filt {:.4}",
                cfg.curve_split,
                row.mean_rank_raw,
                row.mean_rank_filt,
                row.hits10_raw,
                row.hits10_filt
            );
            curve.push(row)?;
            if cfg.save_snapshots {
                save_checkpoint(params, None, snapshot_path(&snapshot_dir, epoch))?;
            }
            if cfg.patience == 0 {
                return Ok(Control::Continue);
            }
            let mr = evaluate(params, &dataset.valid, &dataset.known)?
                .summary
                .mean_rank_filt;
            match best {
                Some((b, _)) if mr >= b => {}
                _ => best = Some((mr, epoch)),
            }
            let (_, best_epoch) = best.expect("set above");
            if epoch - best_epoch >= cfg.patience {
                eprintln!(
                    "early stop at epoch {epoch}: best validation mean rank at epoch {best_epoch}"
                );
                return Ok(Control::Stop);
            }
            Ok(Control::Continue)
        },
    )?;
    if let Some(last) = history.last() {
        eprintln!(
            "final epoch {}: loss {:.6}, active {}/{}",
            last.epoch, last.loss, last.active, last.seen
        );
    }
    let epochs_run = history.len();

    let ckpt = out_dir.join(MODEL_CHECKPOINT);
    save_checkpoint(
        &params,
        Some((&dataset.entities, &dataset.relations)),
        &ckpt,
    )?;
    let curve_path = out_dir.join(CURVE_FILE);
    curve.save(&curve_path)?;
    manifest.add_output(&ckpt)?;
    manifest.add_output(&curve_path)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    println!(
        "trained {epochs_run} epochs (last snapshot at epoch {last_epoch}); wrote {}",
        ckpt.display()
    );
    Ok(TrainOutcome {
        params,
        curve,
        epochs_run,
    })
}

pub fn snapshot_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:06}.transe"))
}

/// Loads a checkpoint and checks it against the dataset's dimensions and,
/// when the companion files exist, its dictionaries.
pub fn load_model_for(checkpoint: &Path, dataset: &KgDataset) -> Result<ModelParams> {
    let params = load_checkpoint(checkpoint)?;
    params
        .check_dims(dataset.num_entities(), dataset.num_relations())
        .with_context(|| {
            format!(
                "checkpoint {} does not fit the dataset",
                checkpoint.display()
            )
        })?;
    let (ep, rp) = dictionary_paths(checkpoint);
    for (path, dict, kind) in [
        (ep, &dataset.entities, "entity"),
        (rp, &dataset.relations, "relation"),
    ] {
        if path.exists() && Dictionary::load(&path)?.names() != dict.names() {
            bail!(
                "{kind} dictionary {} does not match the dataset's {kind} ids",
                path.display()
            );
        }
    }
    Ok(params)
}

pub fn format_summary(s: &RankSummary) -> String {
    format!(
        "mean rank  raw {:.2}  filt {:.2}\nhits@10    raw {:.4}  filt {:.4}\nMRR        raw {:.4}  filt {:.4}",
        s.mean_rank_raw, s.mean_rank_filt, s.hits10_raw, s.hits10_filt, s.mrr_raw, s.mrr_filt
    )
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    split: Split,
    output: &Path,
) -> Result<RankSummary> {
    let dataset = load_dataset(cfg, None)?;
    let params = load_model_for(checkpoint, &dataset)?;
    let triples = split_of(&dataset, split);
    if triples.is_empty() {
        bail!("{split} split is empty");
    }
    let report = evaluate(&params, triples, &dataset.known)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    report.save(output)?;
    println!(
        "{split}: {} triples, {} ranks",
        triples.len(),
        report.ranks.len() * 2
    );
    println!("{}", format_summary(&report.summary));
    Ok(report.summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Raw,
    Filtered,
}

impl std::str::FromStr for Setting {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Setting::Raw),
            "filtered" | "filt" => Ok(Setting::Filtered),
            other => bail!("setting must be raw or filtered, got `{other}`"),
        }
    }
}

pub fn cmd_compare(a: &Path, b: &Path, setting: Setting) -> Result<SignificanceResult> {
    let rows_a = load_report_rows(a)?;
    let rows_b = load_report_rows(b)?;
    let key = |r: &kgdesc::evaluate::ReportRow| (r.triple_id, r.side);
    if rows_a.len() != rows_b.len() || rows_a.iter().map(key).ne(rows_b.iter().map(key)) {
        bail!(
            "reports cover different triple lists ({} has {} ranks, {} has {})",
            a.display(),
            rows_a.len(),
            b.display(),
            rows_b.len()
        );
    }
    let pick = |rows: &[kgdesc::evaluate::ReportRow]| -> Vec<usize> {
        rows.iter()
            .map(|r| match setting {
                Setting::Raw => r.raw,
                Setting::Filtered => r.filtered,
            })
            .collect()
    };
    let result = compare_ranks(&pick(&rows_a), &pick(&rows_b))?;
    println!("n = {} per system", rows_a.len());
    println!("U = {}", result.u);
    println!("z = {:.6}", result.z);
    println!("p = {:.6e}", result.p_two_sided);
    Ok(result)
}

/// Re-ranks the snapshots a training run saved, producing a curve over `split`.
pub fn cmd_curve(cfg: &RunConfig, run_dir: &Path, split: Split, output: &Path) -> Result<Curve> {
    let dataset = load_dataset(cfg, None)?;
    let dir = run_dir.join(SNAPSHOT_DIR);
    let mut snapshots = Vec::new();
    for entry in
        std::fs::read_dir(&dir).with_context(|| format!("cannot list {}", dir.display()))?
    {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch_"))
            .and_then(|n| n.strip_suffix(".transe"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(epoch) = epoch {
            snapshots.push((epoch, path));
        }
    }
    if snapshots.is_empty() {
        bail!(
            "no snapshots in {} (train with save_snapshots = true)",
            dir.display()
        );
    }
    snapshots.sort();
    let sample = sample_triples(
        split_of(&dataset, split),
        cfg.curve_sample,
        &mut stream_rng(cfg.seed, CURVE_STREAM),
    );
    if sample.is_empty() {
        bail!("{split} split is empty");
    }
    let mut curve = Curve::new();
    for (epoch, path) in snapshots {
        let params = load_model_for(&path, &dataset)?;
        curve.push(curve_snapshot(&params, &sample, &dataset.known, epoch)?)?;
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    curve.save(output)?;
    println!(
        "wrote {} curve rows to {}",
        curve.rows().len(),
        output.display()
    );
    Ok(curve)
}
