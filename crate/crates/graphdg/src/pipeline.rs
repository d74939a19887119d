//! The five pipeline stages behind the command-line subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use graphdg_core::boltzmann::{is_estimate, min_pairwise_separation, Observable};
use graphdg_core::cvae::{sample_prior, Cvae, GaussianEdgeDist, Sample, Trainer, TrainingSet};
use graphdg_core::edg::{embed_batch, EmbedConfig, EmbedSummary};
use graphdg_core::evalmmd::{protocol_report, GraphEval, MmdReport};
use graphdg_core::molgraph::{extract_distances, EdgeKind, Element, ExtendedGraph};
use graphdg_core::{rng_stream, Executor};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, EpochDoc};
use crate::config::ResolvedConfig;
use crate::dataio::{
    group_molecules, make_synthetic_benchmark, read_dataset, split_disjoint, write_dataset, BenchmarkSpec,
    DatasetRecord, Molecule, SplitManifest, SplitRole, SyntheticBenchmark,
};
use crate::energy::EnergyFile;
use crate::error::{Error, Result};

/// Reads a benchmark spec, generates it and writes the dataset and the
/// matching energy-model file.
pub fn make_data(
    spec_path: &Path,
    out: &Path,
    energy_out: &Path,
    seed: u64,
    exec: &impl Executor,
) -> Result<SyntheticBenchmark> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec = BenchmarkSpec::from_toml(&text).map_err(|e| Error::config(spec_path, e))?;
    let bench = make_synthetic_benchmark(&spec, seed, exec)?;
    write_dataset(out, &bench.records)?;
    let energy = EnergyFile {
        temperature: Some(bench.temperature),
        molecules: bench.molecules.iter().map(|m| (m.id.clone(), m.energy.clone())).collect(),
    };
    energy.write(energy_out)?;
    Ok(bench)
}

/// Builds the training set from the train and validation molecules of
/// `split`; validation molecules are the ones held out for model selection.
pub fn training_set(molecules: &[Molecule], split: &SplitManifest) -> Result<TrainingSet> {
    let mut graphs = Vec::new();
    let mut mask = Vec::new();
    let mut samples = Vec::new();
    for m in molecules {
        let held_out = match split.role(&m.id) {
            Some(SplitRole::Train) => false,
            Some(SplitRole::Validation) => true,
            _ => continue,
        };
        let g = graphs.len();
        for c in &m.conformations {
            samples.push(Sample { graph: g, distances: extract_distances(&m.graph, c)? });
        }
        graphs.push(m.graph.clone());
        mask.push(held_out);
    }
    Ok(TrainingSet::new(graphs, samples)?.with_validation_graphs(mask)?)
}

pub struct TrainRequest<'a> {
    pub data: &'a Path,
    pub checkpoint: &'a Path,
    pub metrics: &'a Path,
    /// Continue from the checkpoint at `checkpoint` instead of starting over.
    pub resume: bool,
    /// Stop after this many epochs in this invocation.
    pub stop_after: Option<usize>,
}

/// Trains (or resumes training), writing the checkpoint and one metrics
/// line after every epoch.
pub fn train(req: &TrainRequest<'_>, config: &ResolvedConfig, exec: &impl Executor) -> Result<Checkpoint> {
    let records = read_dataset(req.data)?;
    let molecules = group_molecules(&records)?;
    let mut ck = if req.resume {
        Checkpoint::read(req.checkpoint)?
    } else {
        let split = split_disjoint(&records, config.split_fractions, config.split_seed)?;
        let trainer = Trainer::new(Cvae::new(config.model.clone())?, config.training.clone())?;
        Checkpoint { trainer, split }
    };
    drop(records);
    let data = training_set(&molecules, &ck.split)?;
    let metrics_file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(req.resume)
        .truncate(!req.resume)
        .open(req.metrics)
        .map_err(|e| Error::io(req.metrics, e))?;
    let mut metrics = std::io::BufWriter::new(metrics_file);
    let mut done = 0;
    while !ck.trainer.is_finished() && req.stop_after.is_none_or(|s| done < s) {
        let m = ck.trainer.run_epoch(&data, exec)?;
        let line = serde_json::to_string(&EpochDoc::from_metrics(&m)).expect("metrics serialize");
        writeln!(metrics, "{line}").and_then(|_| metrics.flush()).map_err(|e| Error::io(req.metrics, e))?;
        ck.write(req.checkpoint)?;
        done += 1;
    }
    if done == 0 {
        ck.write(req.checkpoint)?;
    }
    Ok(ck)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Sample latent codes from the prior and decode with the trained model.
    Model,
    /// Every edge fixed at the training-set mean distance of its edge type,
    /// with zero variance.
    MeanDistance,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Model => "model",
            Method::MeanDistance => "mean-distance",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub n_per_molecule: usize,
    /// Which split to generate for; `None` means every molecule.
    pub role: Option<SplitRole>,
    pub method: Method,
    pub seed: u64,
    pub embed: EmbedConfig,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { n_per_molecule: 50, role: Some(SplitRole::Test), method: Method::Model, seed: 0, embed: EmbedConfig::default() }
    }
}

/// Embedding outcome counts for one molecule (or the total).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedStats {
    pub molecule: String,
    pub attempted: usize,
    pub smoothing_passed: usize,
    pub embedded: usize,
    pub converged: usize,
    /// Fraction of distance sets whose bounds passed triangle smoothing.
    pub triangle_consistency_rate: f64,
    /// Fraction of distance sets embedded within the violation tolerance.
    pub success_rate: f64,
    pub mean_violation: f64,
    pub max_violation: f64,
}

impl EmbedStats {
    fn from_summary(molecule: &str, s: &EmbedSummary) -> Self {
        Self {
            molecule: molecule.into(),
            attempted: s.attempted,
            smoothing_passed: s.smoothing_passed,
            embedded: s.embedded,
            converged: s.converged,
            triangle_consistency_rate: s.smoothing_pass_rate(),
            success_rate: s.convergence_rate(),
            mean_violation: s.mean_violation,
            max_violation: s.max_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub method: String,
    pub seed: u64,
    pub n_per_molecule: usize,
    pub molecules: Vec<EmbedStats>,
    pub total: EmbedStats,
}

pub struct Generated {
    pub records: Vec<DatasetRecord>,
    pub report: EmbeddingReport,
}

fn type_key(eg: &ExtendedGraph, k: usize) -> (EdgeKind, Element, Element) {
    let e = &eg.edges()[k];
    let atoms = eg.source().atoms();
    let (a, b) = (atoms[e.r].element, atoms[e.s].element);
    (e.kind, a.min(b), a.max(b))
}

/// Mean distance per edge type `(kind, element pair)` over the training
/// molecules, with per-kind and global means as fallbacks for types the
/// training set lacks.
pub struct MeanDistances {
    by_type: BTreeMap<(EdgeKind, Element, Element), f64>,
    by_kind: BTreeMap<EdgeKind, f64>,
    global: f64,
}

impl MeanDistances {
    pub fn fit<'a>(molecules: impl IntoIterator<Item = &'a Molecule>) -> Result<Self> {
        let mut by_type: BTreeMap<(EdgeKind, Element, Element), (f64, usize)> = BTreeMap::new();
        let mut by_kind: BTreeMap<EdgeKind, (f64, usize)> = BTreeMap::new();
        let mut global = (0.0, 0usize);
        for m in molecules {
            let keys: Vec<_> = (0..m.graph.n_edges()).map(|k| type_key(&m.graph, k)).collect();
            for c in &m.conformations {
                let d = extract_distances(&m.graph, c)?;
                for (key, &v) in keys.iter().zip(d.values()) {
                    for acc in [by_type.entry(*key).or_default(), by_kind.entry(key.0).or_default(), &mut global] {
                        acc.0 += v;
                        acc.1 += 1;
                    }
                }
            }
        }
        if global.1 == 0 {
            return Err(Error::Domain("no training distances for the mean-distance baseline".into()));
        }
        let mean = |(s, n): (f64, usize)| s / n as f64;
        Ok(Self {
            by_type: by_type.into_iter().map(|(k, v)| (k, mean(v))).collect(),
            by_kind: by_kind.into_iter().map(|(k, v)| (k, mean(v))).collect(),
            global: mean(global),
        })
    }

    pub fn predict(&self, eg: &ExtendedGraph) -> Vec<f64> {
        (0..eg.n_edges())
            .map(|k| {
                let key = type_key(eg, k);
                self.by_type.get(&key).or_else(|| self.by_kind.get(&key.0)).copied().unwrap_or(self.global)
            })
            .collect()
    }
}

/// Generates `n_per_molecule` conformations for each selected molecule.
///
/// Molecule `m` (position in `molecules`) draws latent codes from RNG
/// stream `2m` of the seed and embeds with a seed drawn from stream `2m+1`.
pub fn generate(
    ck: &Checkpoint,
    molecules: &[Molecule],
    opts: &GenerateOptions,
    exec: &impl Executor,
) -> Result<Generated> {
    let model = ck.trainer.best_model();
    let baseline = match opts.method {
        Method::MeanDistance => {
            Some(MeanDistances::fit(molecules.iter().filter(|m| ck.split.role(&m.id) == Some(SplitRole::Train)))?)
        }
        Method::Model => None,
    };
    let mut records = Vec::new();
    let mut stats = Vec::new();
    let mut all = Vec::new();
    for (m, mol) in molecules.iter().enumerate() {
        if opts.role.is_some_and(|r| ck.split.role(&mol.id) != Some(r)) {
            continue;
        }
        let geds: Vec<GaussianEdgeDist> = match &baseline {
            Some(b) => vec![GaussianEdgeDist::point(b.predict(&mol.graph), 0.0); opts.n_per_molecule],
            None => sample_prior(&model, &mol.graph, opts.n_per_molecule, &mut rng_stream(opts.seed, 2 * m as u64))?,
        };
        let embed_seed: u64 = rng_stream(opts.seed, 2 * m as u64 + 1).random();
        let results = embed_batch(&mol.graph, &geds, embed_seed, &opts.embed, exec);
        stats.push(EmbedStats::from_summary(&mol.id, &EmbedSummary::from_results(&results)));
        for (k, r) in results.iter().enumerate() {
            if let Ok(e) = r {
                records.push(DatasetRecord {
                    molecule: mol.id.clone(),
                    graph: mol.graph.source().clone(),
                    build_seed: mol.graph.build_seed(),
                    seed: embed_seed,
                    index: k,
                    conformation: e.conformation.clone(),
                });
            }
        }
        all.extend(results);
    }
    if !all.is_empty() && records.is_empty() {
        return Err(Error::Domain(format!("all {} embeddings failed", all.len())));
    }
    let total = EmbedStats::from_summary("total", &EmbedSummary::from_results(&all));
    let report = EmbeddingReport {
        method: opts.method.name().into(),
        seed: opts.seed,
        n_per_molecule: opts.n_per_molecule,
        molecules: stats,
        total,
    };
    Ok(Generated { records, report })
}

fn distance_rows(m: &Molecule) -> Result<Vec<Vec<f64>>> {
    m.conformations.iter().map(|c| Ok(extract_distances(&m.graph, c)?.values().to_vec())).collect()
}

/// Keeps at most `limit` evenly spaced rows.
fn thin_rows(rows: Vec<Vec<f64>>, limit: Option<usize>) -> Vec<Vec<f64>> {
    match limit {
        Some(l) if rows.len() > l && l > 0 => {
            let step = rows.len() as f64 / l as f64;
            (0..l).map(|i| rows[(i as f64 * step) as usize].clone()).collect()
        }
        _ => rows,
    }
}

/// Per-graph inputs of the MMD protocol: every truth molecule that at
/// least one method generated for, compared on its heavy-atom edges (all
/// edges when it has none).
pub fn evaluation_inputs(
    truth: &[Molecule],
    methods: &[(String, Vec<Molecule>)],
    truth_limit: Option<usize>,
    split: usize,
) -> Result<Vec<GraphEval>> {
    let mut out = Vec::new();
    for t in truth {
        let mut rows = Vec::with_capacity(methods.len());
        for (name, mols) in methods {
            match mols.iter().find(|m| m.id == t.id) {
                Some(m) => {
                    if m.graph.source() != t.graph.source() || m.graph.build_seed() != t.graph.build_seed() {
                        return Err(Error::Domain(format!(
                            "method {name:?}: molecule {:?} does not match the reference graph",
                            t.id
                        )));
                    }
                    rows.push(Some(distance_rows(m)?));
                }
                None => rows.push(None),
            }
        }
        if rows.iter().all(Option::is_none) {
            continue;
        }
        let mut edges = t.graph.heavy_edges();
        if edges.is_empty() {
            edges = (0..t.graph.n_edges()).collect();
        }
        out.push(GraphEval {
            graph: t.id.clone(),
            split,
            edges,
            truth: thin_rows(distance_rows(t)?, truth_limit),
            methods: rows,
        });
    }
    Ok(out)
}

pub fn evaluate(evals: &[GraphEval], method_names: &[String], exec: &impl Executor) -> MmdReport {
    protocol_report(method_names, evals, exec)
}

/// Parses `one`, `rg` (radius of gyration) or `distance:I,J`.
pub fn parse_observable(s: &str) -> std::result::Result<Observable, String> {
    match s {
        "one" => Ok(Observable::One),
        "rg" | "radius_of_gyration" => Ok(Observable::RadiusOfGyration),
        _ => {
            let rest = s.strip_prefix("distance:").ok_or_else(|| format!("unknown observable {s:?}"))?;
            let (i, j) = rest.split_once(',').ok_or_else(|| format!("expected distance:I,J, got {s:?}"))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
            Ok(Observable::Distance(parse(i)?, parse(j)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub molecule: String,
    pub observable: String,
    pub temperature: f64,
    pub estimate: f64,
    pub standard_error: f64,
    pub effective_sample_size: f64,
    pub n: usize,
    pub max_weight: f64,
    /// Smallest RMS distance-matrix difference between two proposals.
    pub min_pairwise_separation: f64,
}

/// Importance-sampling estimate of `obs` for every generated molecule that
/// has an energy model.
pub fn estimate(
    generated: &[Molecule],
    energies: &EnergyFile,
    obs: Observable,
    temperature: f64,
) -> Result<Vec<EstimateRow>> {
    let mut out = Vec::new();
    for m in generated {
        let Some(model) = energies.get(&m.id) else { continue };
        let e = is_estimate(&obs, &m.conformations, model, temperature)?;
        out.push(EstimateRow {
            molecule: m.id.clone(),
            observable: obs.name(),
            temperature,
            estimate: e.estimate,
            standard_error: e.standard_error,
            effective_sample_size: e.effective_sample_size,
            n: e.n,
            max_weight: e.max_weight,
            min_pairwise_separation: min_pairwise_separation(&m.conformations),
        });
    }
    if out.is_empty() {
        return Err(Error::Domain("no generated molecule has an energy model".into()));
    }
    Ok(out)
}
