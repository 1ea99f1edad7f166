//! Command implementations behind the CLI: inject, train, score, eval,
//! sweep. Each command validates its config before writing anything, and
//! (config, seed) fully determines every output byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Requirements, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_scores, EvalResult};
use crate::graph::{load_graph, write_label_csv, AttributedGraph, LoadStats, LoadedDataset};
use crate::inject::{inject_benchmark, AnomalyKind, AnomalyRecord, InjectionSpec};
use crate::model::{Hyperparams, Model, Strategy, TrainingHistory};
use crate::pca::pca_reduce;
use crate::{save_graph, selfcheck};

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))
}

fn load_dataset(cfg: &RunConfig) -> Result<LoadedDataset> {
    let edges = cfg.edges.as_deref().expect("validated");
    let attrs = cfg.attributes.as_deref().expect("validated");
    load_graph(edges, attrs, cfg.labels.as_deref())
}

/// Apply the configured PCA reduction to a loaded graph (pca_dim = 0 turns
/// it off).
fn reduce_attributes(cfg: &RunConfig, g: &AttributedGraph) -> Result<AttributedGraph> {
    if cfg.pca_dim == 0 {
        return Ok(g.clone());
    }
    let reduced = pca_reduce(g.attributes(), cfg.pca_dim)?;
    g.with_attributes(reduced)
}

/// The graph a model trains and scores on: PCA runs here unless the config
/// moved it ahead of injection.
fn training_input(cfg: &RunConfig) -> Result<LoadedDataset> {
    let mut ds = load_dataset(cfg)?;
    if !cfg.pca_before_injection {
        ds.graph = reduce_attributes(cfg, &ds.graph)?;
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub spec: InjectionSpec,
    pub root_seed: u64,
    pub k_used: usize,
    pub pca_before_injection: bool,
    pub n_nodes: usize,
    pub n_edges_before: usize,
    pub n_edges_after: usize,
    pub structural_anomalies: usize,
    pub attribute_anomalies: usize,
    pub anomalies: Vec<AnomalyRecord>,
    pub load: ManifestLoadStats,
    pub files: InjectFiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestLoadStats {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectFiles {
    pub edges: PathBuf,
    pub attributes: PathBuf,
    pub labels: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug)]
pub struct InjectOutputs {
    pub files: InjectFiles,
    pub stats: LoadStats,
    pub structural: usize,
    pub attribute: usize,
}

pub fn cmd_inject(cfg: &RunConfig) -> Result<InjectOutputs> {
    cfg.validate(Requirements {
        edges: true,
        attributes: true,
        labels: false,
    })?;
    let spec = cfg.injection_spec();
    let ds = load_dataset(cfg)?;
    let mut graph = ds.graph;
    if cfg.pca_before_injection {
        graph = reduce_attributes(cfg, &graph)?;
    }
    spec.validate(graph.n())?;
    ensure_output_dir(cfg)?;

    let result = inject_benchmark(&graph, &spec)?;
    let files = InjectFiles {
        edges: cfg.output_dir.join("injected_edges.txt"),
        attributes: cfg.output_dir.join("injected_attributes.csv"),
        labels: cfg.output_dir.join("injected_labels.csv"),
        manifest: cfg.output_dir.join("injection_manifest.json"),
    };
    save_graph(&result.graph, &files.edges, &files.attributes)?;
    write_label_csv(&files.labels, &result.labels)?;

    let structural = result
        .records
        .iter()
        .filter(|r| r.kind == AnomalyKind::Structural)
        .count();
    let attribute = result.records.len() - structural;
    let manifest = InjectionManifest {
        spec,
        root_seed: cfg.seed,
        k_used: result.k_used,
        pca_before_injection: cfg.pca_before_injection,
        n_nodes: graph.n(),
        n_edges_before: graph.m(),
        n_edges_after: result.graph.m(),
        structural_anomalies: structural,
        attribute_anomalies: attribute,
        anomalies: result.records.clone(),
        load: ManifestLoadStats {
            self_loops_dropped: ds.stats.self_loops_dropped,
            duplicate_edges_dropped: ds.stats.duplicate_edges_dropped,
        },
        files: files.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&files.manifest, json).map_err(|e| Error::io(&files.manifest, e))?;

    Ok(InjectOutputs {
        files,
        stats: ds.stats,
        structural,
        attribute,
    })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history_csv: PathBuf,
    pub history: TrainingHistory,
}

pub fn history_to_csv(history: &TrainingHistory) -> String {
    let mut out = String::from("epoch,E_S,E_A,L\n");
    for e in &history.epochs {
        writeln!(
            out,
            "{},{},{},{}",
            e.epoch, e.structure_error, e.attribute_error, e.loss
        )
        .expect("write to String cannot fail");
    }
    out
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutputs> {
    cfg.validate(Requirements {
        edges: true,
        attributes: true,
        labels: false,
    })?;
    let ds = training_input(cfg)?;
    let hp = cfg.hyperparams()?;
    let (model, history) = Model::train(&ds.graph, &hp)?;
    ensure_output_dir(cfg)?;

    let checkpoint = cfg.output_dir.join("checkpoint.json");
    let history_csv = cfg.output_dir.join("history.csv");
    model.save(&checkpoint)?;
    fs::write(&history_csv, history_to_csv(&history))
        .map_err(|e| Error::io(&history_csv, e))?;
    Ok(TrainOutputs {
        checkpoint,
        history_csv,
        history,
    })
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

pub struct ScoreOutputs {
    pub files: Vec<PathBuf>,
}

pub fn cmd_score(cfg: &RunConfig, checkpoint: &Path) -> Result<ScoreOutputs> {
    cfg.validate(Requirements {
        edges: true,
        attributes: true,
        labels: false,
    })?;
    if !checkpoint.exists() {
        return Err(Error::Config(format!(
            "checkpoint file not found: {}",
            checkpoint.display()
        )));
    }
    let ds = training_input(cfg)?;
    let model = Model::load(checkpoint)?;
    ensure_output_dir(cfg)?;

    let mut files = Vec::new();
    for strategy in cfg.strategies()? {
        let report = model.score(&ds.graph, strategy)?;
        let path = cfg.output_dir.join(format!("scores_{strategy}.csv"));
        let mut out = String::from("rank,node_id,score\n");
        for (rank, &node) in report.ranking.iter().enumerate() {
            writeln!(out, "{},{},{}", rank + 1, node, report.scores[node])
                .expect("write to String cannot fail");
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(ScoreOutputs { files })
}

/// Parse a scores CSV (rank,node_id,score) back into a per-node score
/// vector.
pub fn read_scores_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: format!("expected rank,node_id,score, found {} fields", fields.len()),
            });
        }
        let node: usize = fields[1].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: format!("invalid node id {:?}", fields[1]),
        })?;
        let score: f64 = fields[2].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: format!("invalid score {:?}", fields[2]),
        })?;
        entries.push((node, score));
    }
    let n = entries.len();
    let mut scores = vec![f64::NAN; n];
    for (node, score) in entries {
        if node >= n {
            return Err(Error::InvalidInput(format!(
                "node id {node} out of range for {n} score rows"
            )));
        }
        scores[node] = score;
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!(
            "scores file {} does not cover every node exactly once",
            path.display()
        )));
    }
    Ok(scores)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalOutputs {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub result: EvalResult,
}

pub fn cmd_eval(cfg: &RunConfig, scores_path: &Path) -> Result<EvalOutputs> {
    cfg.validate(Requirements {
        labels: true,
        ..Requirements::default()
    })?;
    let scores = read_scores_csv(scores_path)?;
    let labels_path = cfg.labels.as_deref().expect("validated");
    let labels = crate::graph::read_label_csv(labels_path, scores.len())?;
    let result = evaluate_scores(&scores, &labels, &cfg.ks)?;
    ensure_output_dir(cfg)?;

    let stem = scores_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scores");
    let json = cfg.output_dir.join(format!("eval_{stem}.json"));
    let csv = cfg.output_dir.join(format!("eval_{stem}.csv"));
    fs::write(&json, serde_json::to_string_pretty(&result)?).map_err(|e| Error::io(&json, e))?;
    let mut table = format!("{}\n", EvalResult::csv_header(&cfg.ks));
    table.push_str(&result.csv_row());
    table.push('\n');
    fs::write(&csv, table).map_err(|e| Error::io(&csv, e))?;
    Ok(EvalOutputs { json, csv, result })
}

/// Strategy-comparison table over a trained checkpoint (one row per
/// strategy).
pub fn cmd_compare(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    cfg.validate(Requirements {
        edges: true,
        attributes: true,
        labels: true,
    })?;
    let ds = training_input(cfg)?;
    let labels = ds
        .labels
        .clone()
        .ok_or_else(|| Error::Config("labels are required for compare".into()))?;
    let model = Model::load(checkpoint)?;
    ensure_output_dir(cfg)?;

    let mut table = format!("strategy,{}\n", EvalResult::csv_header(&cfg.ks));
    for strategy in Strategy::ALL {
        let report = model.score(&ds.graph, strategy)?;
        let result = evaluate(&report, &labels, &cfg.ks)?;
        writeln!(table, "{strategy},{}", result.csv_row()).expect("write to String cannot fail");
    }
    let path = cfg.output_dir.join("strategy_comparison.csv");
    fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter {other:?} (expected alpha or lambda)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Lambda => "lambda",
        })
    }
}

pub struct SweepOutputs {
    pub csv: PathBuf,
    pub rows: Vec<(f64, EvalResult)>,
}

/// Train one model per grid value (concurrently; each point owns an
/// independent model) and tabulate metric-vs-parameter for the configured
/// strategy.
pub fn cmd_sweep(cfg: &RunConfig, param: SweepParam, grid: &[f64]) -> Result<SweepOutputs> {
    cfg.validate(Requirements {
        edges: true,
        attributes: true,
        labels: true,
    })?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let strategy = match cfg.strategies()?.as_slice() {
        [single] => *single,
        _ => {
            return Err(Error::InvalidArgument(
                "sweep needs a single strategy, not \"all\"".into(),
            ))
        }
    };
    for &v in grid {
        let ok = match param {
            SweepParam::Alpha => (0.0..=1.0).contains(&v),
            SweepParam::Lambda => v >= 0.0 && v.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "sweep value {v} out of range for {param}"
            )));
        }
    }

    let ds = training_input(cfg)?;
    let labels = ds
        .labels
        .clone()
        .ok_or_else(|| Error::Config("labels are required for sweep".into()))?;
    let hp = cfg.hyperparams()?;
    let graph = &ds.graph;
    let labels_ref = &labels;
    let hp_ref = &hp;
    let ks = &cfg.ks;

    let results: Vec<Result<EvalResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|&value| {
                scope.spawn(move || -> Result<EvalResult> {
                    let mut point_hp: Hyperparams = hp_ref.clone();
                    match param {
                        SweepParam::Alpha => point_hp.alpha = value,
                        SweepParam::Lambda => point_hp.lambda = value,
                    }
                    let (model, _) = Model::train(graph, &point_hp)?;
                    let report = model.score(graph, strategy)?;
                    evaluate(&report, labels_ref, ks)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut rows = Vec::with_capacity(grid.len());
    for (&value, result) in grid.iter().zip(results) {
        rows.push((value, result?));
    }
    ensure_output_dir(cfg)?;
    let mut table = format!("parameter,value,{}\n", EvalResult::csv_header(&cfg.ks));
    for (value, result) in &rows {
        writeln!(table, "{param},{value},{}", result.csv_row())
            .expect("write to String cannot fail");
    }
    let csv = cfg.output_dir.join(format!("sweep_{param}.csv"));
    fs::write(&csv, table).map_err(|e| Error::io(&csv, e))?;
    Ok(SweepOutputs { csv, rows })
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

pub fn cmd_selfcheck() -> Vec<selfcheck::CheckOutcome> {
    selfcheck::run_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SyntheticSpec};

    fn synthetic_files(dir: &Path, seed: u64) -> RunConfig {
        let spec = SyntheticSpec {
            nodes: 60,
            seed,
            ..SyntheticSpec::default()
        };
        let g = synth::generate(&spec).unwrap();
        let edges = dir.join("edges.txt");
        let attrs = dir.join("attrs.csv");
        save_graph(&g, &edges, &attrs).unwrap();
        RunConfig {
            edges: Some(edges),
            attributes: Some(attrs),
            output_dir: dir.join("out"),
            pca_dim: 0,
            s: 3,
            t: 2,
            k: 10,
            epochs: 2,
            gcn_dims: vec![8, 4],
            seed: 7,
            ..RunConfig::default()
        }
    }

    #[test]
    fn inject_writes_four_files_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synthetic_files(dir.path(), 1);
        let out = cmd_inject(&cfg).unwrap();
        for f in [
            &out.files.edges,
            &out.files.attributes,
            &out.files.labels,
            &out.files.manifest,
        ] {
            assert!(f.exists(), "{}", f.display());
        }
        let first: Vec<Vec<u8>> = [
            &out.files.edges,
            &out.files.attributes,
            &out.files.labels,
            &out.files.manifest,
        ]
        .iter()
        .map(|f| fs::read(f).unwrap())
        .collect();
        let out2 = cmd_inject(&cfg).unwrap();
        let second: Vec<Vec<u8>> = [
            &out2.files.edges,
            &out2.files.attributes,
            &out2.files.labels,
            &out2.files.manifest,
        ]
        .iter()
        .map(|f| fs::read(f).unwrap())
        .collect();
        assert_eq!(first, second);
        assert_eq!(out.structural, 6);
        assert_eq!(out.attribute, 6);
    }

    #[test]
    fn train_emits_history_with_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_files(dir.path(), 2);
        cfg.epochs = 1;
        let out = cmd_train(&cfg).unwrap();
        let text = fs::read_to_string(&out.history_csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,E_S,E_A,L");
        assert_eq!(lines.len(), 2);
        assert!(out.checkpoint.exists());
    }

    #[test]
    fn score_eval_roundtrip_preserves_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_files(dir.path(), 3);
        cfg.ks = vec![5, 10];
        let inject = cmd_inject(&cfg).unwrap();
        // retarget training at the injected benchmark
        cfg.edges = Some(inject.files.edges.clone());
        cfg.attributes = Some(inject.files.attributes.clone());
        cfg.labels = Some(inject.files.labels.clone());
        let train = cmd_train(&cfg).unwrap();
        let score = cmd_score(&cfg, &train.checkpoint).unwrap();
        assert_eq!(score.files.len(), 1);
        let text = fs::read_to_string(&score.files[0]).unwrap();
        assert_eq!(text.lines().count(), 61); // header + one row per node

        let eval_out = cmd_eval(&cfg, &score.files[0]).unwrap();
        assert!(eval_out.json.exists() && eval_out.csv.exists());

        // library-level metrics must match the file-level roundtrip
        let ds = training_input(&cfg).unwrap();
        let model = Model::load(&train.checkpoint).unwrap();
        let report = model.score(&ds.graph, Strategy::Residual).unwrap();
        let direct = evaluate(&report, ds.labels.as_ref().unwrap(), &cfg.ks).unwrap();
        assert_eq!(
            serde_json::to_string(&direct).unwrap(),
            serde_json::to_string(&eval_out.result).unwrap()
        );
    }

    #[test]
    fn eval_perfect_ranking_reports_auc_one() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("out");
        fs::create_dir_all(&out_dir).unwrap();
        let scores_path = dir.path().join("scores_residual.csv");
        fs::write(&scores_path, "rank,node_id,score\n1,0,5.0\n2,1,4.0\n3,2,1.0\n4,3,0.5\n")
            .unwrap();
        let labels_path = dir.path().join("labels.csv");
        fs::write(&labels_path, "node_id,label\n0,1\n1,1\n2,0\n3,0\n").unwrap();
        let cfg = RunConfig {
            labels: Some(labels_path),
            output_dir: out_dir,
            ks: vec![2],
            ..RunConfig::default()
        };
        let out = cmd_eval(&cfg, &scores_path).unwrap();
        assert_eq!(out.result.auc, 1.0);
        let json = fs::read_to_string(&out.json).unwrap();
        assert!(json.contains("\"auc\": 1.0"));
    }

    #[test]
    fn sweep_produces_one_row_per_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_files(dir.path(), 4);
        cfg.ks = vec![5];
        cfg.epochs = 1;
        let inject = cmd_inject(&cfg).unwrap();
        cfg.edges = Some(inject.files.edges.clone());
        cfg.attributes = Some(inject.files.attributes.clone());
        cfg.labels = Some(inject.files.labels.clone());
        let grid = [0.0, 0.5, 1.0];
        let out = cmd_sweep(&cfg, SweepParam::Alpha, &grid).unwrap();
        assert_eq!(out.rows.len(), 3);
        let text = fs::read_to_string(&out.csv).unwrap();
        assert_eq!(text.lines().count(), 4);

        // endpoint rows equal single runs at those values
        let mut single = cfg.clone();
        single.alpha = 0.0;
        let train = cmd_train(&single).unwrap();
        let ds = training_input(&single).unwrap();
        let model = Model::load(&train.checkpoint).unwrap();
        let report = model.score(&ds.graph, Strategy::Residual).unwrap();
        let direct = evaluate(&report, ds.labels.as_ref().unwrap(), &single.ks).unwrap();
        assert_eq!(out.rows[0].1, direct);
    }

    #[test]
    fn missing_attribute_file_fails_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_files(dir.path(), 5);
        cfg.attributes = Some(dir.path().join("nope.csv"));
        let err = cmd_inject(&cfg).unwrap_err();
        assert!(err.to_string().contains("nope.csv"), "{err}");
        assert!(!cfg.output_dir.exists());
    }
}
