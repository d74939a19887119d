use std::path::Path;

use graphdg::checkpoint::Checkpoint;
use graphdg::config::{ResolvedConfig, RunConfigFile};
use graphdg::dataio::{group_molecules, make_synthetic_benchmark, read_dataset, write_dataset, BenchmarkSpec, Molecule};
use graphdg::energy::EnergyFile;
use graphdg::pipeline::{
    estimate, evaluation_inputs, generate, parse_observable, train, training_set, GenerateOptions, MeanDistances,
    Method, TrainRequest,
};
use graphdg::report::{fmt_stat, write_evaluation};
use graphdg::Rayon;
use graphdg_core::boltzmann::Observable;
use graphdg_core::evalmmd::{protocol_report, ComparisonKind};
use graphdg_core::molgraph::{EdgeKind, Element};
use graphdg_core::Sequential;

const SPEC: &str = r#"
conformations = 40
burn_in = 2000
thin = 20
[[molecule]]
id = "ethane"
chain = "CC"
[[molecule]]
id = "methanol"
chain = "CO"
[[molecule]]
id = "ethanol"
chain = "CCO"
[[molecule]]
id = "ether"
chain = "COC"
[[molecule]]
id = "propane"
chain = "CCC"
"#;

const CONFIG: &str = r#"
[model]
message_passes = 2
hidden = [12]
readout_hidden = [12]
[training]
batch_size = 8
epochs = 4
learning_rate = 0.005
max_batches_per_epoch = 3
[split]
fractions = [0.6, 0.2, 0.2]
"#;

fn fixture(dir: &Path) -> (std::path::PathBuf, EnergyFile, ResolvedConfig) {
    let spec = BenchmarkSpec::from_toml(SPEC).unwrap();
    let bench = make_synthetic_benchmark(&spec, 5, &Sequential).unwrap();
    let data = dir.join("data.jsonl");
    write_dataset(&data, &bench.records).unwrap();
    let energy = EnergyFile {
        temperature: Some(spec.temperature),
        molecules: bench.molecules.iter().map(|m| (m.id.clone(), m.energy.clone())).collect(),
    };
    let config: RunConfigFile = toml::from_str(CONFIG).unwrap();
    (data, energy, config.resolve(11))
}

fn run_train(dir: &Path, data: &Path, config: &ResolvedConfig, name: &str, resume: bool, stop: Option<usize>) -> Checkpoint {
    let ck = dir.join(format!("{name}.json"));
    let metrics = dir.join(format!("{name}.metrics.jsonl"));
    let req = TrainRequest { data, checkpoint: &ck, metrics: &metrics, resume, stop_after: stop };
    train(&req, config, &Sequential).unwrap()
}

#[test]
fn omitted_config_fields_take_the_defaults() {
    let r = RunConfigFile::default().resolve(3);
    assert_eq!(r.training.batch_size, 32);
    assert_eq!(r.training.learning_rate, 0.001);
    assert_eq!(r.model.message_passes, 3);
    assert_eq!((r.training.seed, r.model.init_seed, r.split_seed), (3, 3, 3));
    let partial: RunConfigFile = toml::from_str("[training]\nepochs = 2").unwrap();
    assert_eq!(partial.resolve(0).training.batch_size, 32);
    assert!(toml::from_str::<RunConfigFile>("[training]\nepoch = 2").is_err());
}

#[test]
fn checkpoint_round_trip_and_resume_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, config) = fixture(dir.path());

    let full = run_train(dir.path(), &data, &config, "full", false, None);
    assert_eq!(full.trainer.epoch, 4);
    let back = Checkpoint::from_json(&full.to_json()).unwrap();
    assert_eq!(back, full);

    let part = run_train(dir.path(), &data, &config, "part", false, Some(2));
    assert_eq!(part.trainer.epoch, 2);
    let resumed = run_train(dir.path(), &data, &config, "part", true, None);
    assert_eq!(resumed, full);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("part.json")).unwrap(),
        std::fs::read_to_string(dir.path().join("full.json")).unwrap()
    );

    let log = std::fs::read_to_string(dir.path().join("part.metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for (k, l) in lines.iter().enumerate() {
        assert_eq!(l["epoch"], k);
        assert!(l["train_elbo"].is_f64());
        assert!(l["validation_elbo"].is_f64());
    }
}

#[test]
fn training_uses_only_train_and_validation_molecules() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, config) = fixture(dir.path());
    let ck = run_train(dir.path(), &data, &config, "ck", false, Some(1));
    let mols = group_molecules(&read_dataset(&data).unwrap()).unwrap();
    let set = training_set(&mols, &ck.split).unwrap();
    let n = ck.split.train.len() + ck.split.validation.len();
    assert_eq!(set.graphs().len(), n);
    assert_eq!(set.samples().len(), 40 * n);
    assert_eq!((ck.split.train.len(), ck.split.validation.len(), ck.split.test.len()), (3, 1, 1));
}

fn trained(dir: &Path) -> (Checkpoint, Vec<Molecule>, EnergyFile) {
    let (data, energy, config) = fixture(dir);
    let ck = run_train(dir, &data, &config, "ck", false, None);
    let mols = group_molecules(&read_dataset(&data).unwrap()).unwrap();
    (ck, mols, energy)
}

#[test]
fn generation_is_reproducible_and_reports_rates() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, mols, _) = trained(dir.path());
    let opts = GenerateOptions { n_per_molecule: 6, ..GenerateOptions::default() };
    assert_eq!(GenerateOptions::default().n_per_molecule, 50);
    let a = generate(&ck, &mols, &opts, &Sequential).unwrap();
    let b = generate(&ck, &mols, &opts, &Rayon::new(2).unwrap()).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.report, b.report);
    let test = &ck.split.test;
    assert!(a.records.iter().all(|r| test.contains(&r.molecule)));
    let t = &a.report.total;
    assert_eq!(t.attempted, 6 * test.len());
    assert!((0.0..=1.0).contains(&t.triangle_consistency_rate));
    assert!((0.0..=1.0).contains(&t.success_rate));
    let json = serde_json::to_value(&a.report).unwrap();
    assert!(json["total"]["triangle_consistency_rate"].is_f64());
    assert!(json["total"]["success_rate"].is_f64());
    let other = generate(&ck, &mols, &GenerateOptions { seed: 1, ..opts.clone() }, &Sequential).unwrap();
    assert_ne!(other.records, a.records);
}

#[test]
fn mean_distance_baseline_averages_by_edge_type() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _, _) = fixture(dir.path());
    let mols = group_molecules(&read_dataset(&data).unwrap()).unwrap();
    let find = |id: &str| mols.iter().find(|m| m.id == id).unwrap();
    let (methanol, ether) = (find("methanol"), find("ether"));
    let fit = MeanDistances::fit([methanol]).unwrap();

    let heavy = |m: &Molecule| {
        let atoms = m.graph.source().atoms();
        (0..atoms.len()).filter(|&i| atoms[i].element != Element::H).collect::<Vec<_>>()
    };
    let (c, o) = (heavy(methanol)[0], heavy(methanol)[1]);
    let direct: f64 =
        methanol.conformations.iter().map(|x| x.distance(c, o)).sum::<f64>() / methanol.conformations.len() as f64;

    let pred = fit.predict(&ether.graph);
    let ha = heavy(ether);
    let mut checked = 0;
    for (k, e) in ether.graph.edges().iter().enumerate() {
        if e.kind == EdgeKind::Bond && ha.contains(&e.r) && ha.contains(&e.s) {
            assert!((pred[k] - direct).abs() < 1e-12, "{} vs {direct}", pred[k]);
            checked += 1;
        }
    }
    assert_eq!(checked, 2);

    let ck = run_train(dir.path(), &data, &fixture(dir.path()).2, "ck", false, Some(1));
    let opts = GenerateOptions { n_per_molecule: 3, method: Method::MeanDistance, ..GenerateOptions::default() };
    let g = generate(&ck, &mols, &opts, &Sequential).unwrap();
    assert_eq!(g.report.method, "mean-distance");
    assert_eq!(g.records.len(), 3 * ck.split.test.len());
}

#[test]
fn copy_of_truth_ranks_first_and_reports_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, mols, _) = trained(dir.path());
    let g = generate(&ck, &mols, &GenerateOptions { n_per_molecule: 20, role: None, ..GenerateOptions::default() }, &Sequential)
        .unwrap();
    let generated = group_molecules(&g.records).unwrap();
    let copy: Vec<Molecule> = mols
        .iter()
        .map(|m| Molecule { conformations: m.conformations[..20].to_vec(), ..m.clone() })
        .collect();
    let truth: Vec<Molecule> =
        mols.iter().map(|m| Molecule { conformations: m.conformations[20..].to_vec(), ..m.clone() }).collect();
    let methods = vec![("model".to_string(), generated), ("copy".to_string(), copy)];
    let evals = evaluation_inputs(&truth, &methods, None, 0).unwrap();
    let names = vec!["model".to_string(), "copy".to_string()];
    let report = protocol_report(&names, &evals, &Sequential);
    for kind in ComparisonKind::ALL {
        assert!(report.summary(kind, 1).unwrap().mean_ranking < report.summary(kind, 0).unwrap().mean_ranking);
    }

    let out = dir.path().join("eval");
    let doc = write_evaluation(&out, &report, &evals).unwrap();
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    for kind in ["marginal", "pairwise", "joint"] {
        assert!(text.contains(&format!("{kind} MMD^2")));
    }
    for e in &doc.entries {
        let line = text
            .lines()
            .skip_while(|l| !l.starts_with(&e.comparison))
            .find(|l| l.trim_start().starts_with(&format!("{} ", e.method)))
            .unwrap();
        assert!(line.contains(&fmt_stat(e.median)) && line.contains(&fmt_stat(e.mean)), "{line}");
    }
    let tsv = std::fs::read_to_string(out.join("rows.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), report.rows.len() + 1);
    let machine: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(machine["entries"].as_array().unwrap().len(), doc.entries.len());
    assert!(std::fs::read_to_string(out.join("histograms.tsv")).unwrap().lines().count() > 1);
}

#[test]
fn estimate_of_one_is_exact_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, mols, energy) = trained(dir.path());
    let g = generate(&ck, &mols, &GenerateOptions { n_per_molecule: 10, role: None, ..GenerateOptions::default() }, &Sequential)
        .unwrap();
    let generated = group_molecules(&g.records).unwrap();
    let rows = estimate(&generated, &energy, Observable::One, 500.0).unwrap();
    assert_eq!(rows.len(), generated.len());
    for r in &rows {
        assert_eq!(r.estimate, 1.0);
        assert!(r.effective_sample_size >= 1.0 && r.effective_sample_size <= r.n as f64 + 1e-9);
        assert!(r.max_weight > 0.0 && r.max_weight <= 1.0);
        assert!(r.min_pairwise_separation > 0.0);
    }
}

#[test]
fn observables_parse() {
    assert_eq!(parse_observable("one"), Ok(Observable::One));
    assert_eq!(parse_observable("rg"), Ok(Observable::RadiusOfGyration));
    assert_eq!(parse_observable("distance:0,3"), Ok(Observable::Distance(0, 3)));
    assert!(parse_observable("distance:0").is_err());
    assert!(parse_observable("energy").is_err());
}
