use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use blockmc::graph::{build_graph, ModelGraph, PredictOptions};
use blockmc::model::{ModelSampler, SamplerConfig, StatefulModel};
use blockmc::par::map_jobs;
use blockmc::spec::{load_template, parse_spec, DataSet, ModelSpec, TEMPLATES};
use blockmc::stateful::{flat_labels, substream, History, Value};
use blockmc::validation::report::{run_chain, NamedEstimate, MAX_ADAPT};
use blockmc::validation::{ess_bulk, ess_tail, rank_normalized_rhat, run_validation_graph, ChainSet, ValidationConfig};
use serde::{Deserialize, Serialize};

use crate::chains::{chain_file_name, render_csv, ChainFile, Manifest, Timings, MANIFEST};
use crate::Failure;

/// A parsed model together with the data it is fitted to.
pub struct Loaded {
    pub name: String,
    pub source: String,
    pub spec: ModelSpec,
    pub data: DataSet,
}

/// `spec` is a model file or the name of a bundled template. Templates without
/// `--data` are fitted to data simulated from the template with `data_seed`.
pub fn load_model(spec: &str, data: Option<&Path>, data_seed: u64) -> Result<Loaded, Failure> {
    let path = Path::new(spec);
    let load_data = |p: &Path| DataSet::load(p).map_err(Failure::build);
    if path.is_file() {
        let source = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {spec}: {e}")))?;
        let parsed = parse_spec(&source).map_err(|d| Failure::build(blockmc::Error::Spec(d)))?;
        let data = match data {
            Some(p) => load_data(p)?,
            None => DataSet::new(),
        };
        return Ok(Loaded {
            name: parsed.name.clone(),
            source,
            spec: parsed,
            data,
        });
    }
    if TEMPLATES.iter().any(|t| t.name == spec) {
        let (parsed, template) = load_template(spec).map_err(Failure::build)?;
        let data = match data {
            Some(p) => load_data(p)?,
            None => template.generate(data_seed),
        };
        return Ok(Loaded {
            name: spec.to_string(),
            source: template.source.to_string(),
            spec: parsed,
            data,
        });
    }
    Err(Failure::config(format!(
        "`{spec}` is neither a file nor a bundled template ({})",
        blockmc::spec::template_names().join(", ")
    )))
}

pub struct RunOptions {
    pub seed: u64,
    pub burnin: usize,
    pub keep: usize,
    pub chains: usize,
    pub history: bool,
    pub out: PathBuf,
}

fn layout(h: &History) -> Vec<(String, blockmc::stateful::ValueKind, Vec<usize>)> {
    h.fields().iter().map(|f| (f.name.clone(), f.kind, f.shape.clone())).collect()
}

/// One chain without a recorded trajectory: only kept draws are collected.
fn run_chain_streaming(model: &Loaded, graph: &ModelGraph, opts: &RunOptions, chain: u64) -> Result<History, Failure> {
    let config = SamplerConfig {
        seed: opts.seed,
        chain: Some(chain),
        keep_history: false,
        warmup: opts.burnin.min(MAX_ADAPT) as u64,
    };
    let mut sampler = ModelSampler::from_graph(&model.spec, graph.clone(), &config).map_err(Failure::build)?;
    sampler.step(opts.burnin).map_err(Failure::runtime)?;
    let mut kept = History::new(&layout(sampler.get_history()), true);
    for i in 0..opts.keep {
        sampler.step(1).map_err(Failure::runtime)?;
        let last = sampler.get_history().last().expect("one draw retained");
        kept.record_flat((opts.burnin + i + 1) as u64, last).map_err(Failure::runtime)?;
    }
    Ok(kept)
}

pub fn cmd_run(model: &Loaded, opts: &RunOptions) -> Result<Manifest, Failure> {
    if opts.keep == 0 {
        return Err(Failure::config("--keep must be at least 1"));
    }
    if opts.chains == 0 {
        return Err(Failure::config("--chains must be at least 1"));
    }
    let graph = build_graph(&model.spec, &model.data).map_err(Failure::build)?;
    // Surface construction errors before any long run.
    ModelSampler::from_graph(&model.spec, graph.clone(), &SamplerConfig::seeded(opts.seed)).map_err(Failure::build)?;

    let start = Instant::now();
    let results = map_jobs(opts.chains, |k| {
        let t = Instant::now();
        let h = if opts.history {
            run_chain(&model.spec, &graph, opts.seed, k as u64, opts.burnin, opts.keep).map_err(Failure::runtime)
        } else {
            run_chain_streaming(model, &graph, opts, k as u64)
        }?;
        Ok::<_, Failure>((h, t.elapsed().as_secs_f64()))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let total = start.elapsed().as_secs_f64();

    fs::create_dir_all(&opts.out).map_err(|e| Failure::config(format!("cannot create {}: {e}", opts.out.display())))?;
    let mut files = Vec::new();
    for (k, (h, _)) in results.iter().enumerate() {
        let name = chain_file_name(k);
        write(&opts.out.join(&name), &render_csv(h))?;
        files.push(name);
    }
    let manifest = Manifest {
        model: model.name.clone(),
        source: model.source.clone(),
        data: model.data.to_json(),
        seed: opts.seed,
        burnin: opts.burnin,
        keep: opts.keep,
        chains: opts.chains,
        history: opts.history,
        files,
        columns: results[0].0.labels(),
        timings: Timings {
            chain_seconds: results.iter().map(|(_, s)| *s).collect(),
            total_seconds: total,
        },
    };
    write(&opts.out.join(MANIFEST), &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

pub struct ValidateOptions {
    pub config: ValidationConfig,
    pub out: PathBuf,
    pub gradient_fault: Option<String>,
}

/// Runs the checklist and writes the report; returns whether it passed.
pub fn cmd_validate(model: &Loaded, opts: &ValidateOptions) -> Result<bool, Failure> {
    let mut graph = build_graph(&model.spec, &model.data).map_err(Failure::build)?;
    if let Some(label) = &opts.gradient_fault {
        let f = graph
            .factor_labels()
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Failure::config(format!("no factor labelled `{label}`; factors: {}", graph.factor_labels().join(", "))))?;
        graph.inject_gradient_fault(f);
    }
    let report = run_validation_graph(&model.spec, graph, &opts.config).map_err(Failure::build)?;
    if let Some(dir) = opts.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    write(&opts.out, &report.to_json())?;
    Ok(report.passed())
}

/// Diagnostics over external chains: one entry per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chains: usize,
    pub draws: usize,
    pub rhat: Vec<NamedEstimate>,
    pub ess_bulk: Vec<NamedEstimate>,
    pub ess_tail: Vec<NamedEstimate>,
}

pub fn cmd_diagnose(files: &[PathBuf]) -> Result<ChainDiagnostics, Failure> {
    if files.len() < 2 {
        return Err(Failure::config(format!("diagnose needs at least 2 chain files, got {}", files.len())));
    }
    let chains = files.iter().map(|p| ChainFile::read(p)).collect::<Result<Vec<_>, _>>()?;
    let columns = &chains[0].columns;
    if let Some(bad) = chains.iter().find(|c| &c.columns != columns) {
        return Err(Failure::config(format!(
            "{} has a different header than {}",
            bad.path.display(),
            chains[0].path.display()
        )));
    }
    let draws = chains.iter().map(|c| (0..columns.len()).map(|j| c.column(j)).collect()).collect();
    let set = ChainSet::new(columns.clone(), draws).map_err(Failure::build)?;
    let mut out = ChainDiagnostics {
        chains: set.n_chains(),
        draws: set.n_draws(),
        rhat: Vec::new(),
        ess_bulk: Vec::new(),
        ess_tail: Vec::new(),
    };
    for (p, name) in set.names().iter().enumerate() {
        let c = set.param(p);
        let named = |e: blockmc::validation::Estimate| NamedEstimate {
            name: name.clone(),
            value: e.value,
            degenerate: e.degenerate,
        };
        out.rhat.push(named(rank_normalized_rhat(&c).map_err(Failure::build)?));
        out.ess_bulk.push(named(ess_bulk(&c).map_err(Failure::build)?));
        out.ess_tail.push(named(ess_tail(&c).map_err(Failure::build)?));
    }
    Ok(out)
}

/// Predictions written by `cmd_predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutcome {
    pub columns: Vec<String>,
    pub rows: usize,
    pub note: Option<String>,
}

pub fn note_path(out: &Path) -> PathBuf {
    out.with_extension("note.txt")
}

pub fn cmd_predict(chains_dir: &Path, inputs: &Path, out: &Path) -> Result<PredictOutcome, Failure> {
    let manifest = Manifest::load(chains_dir)?;
    let spec = parse_spec(&manifest.source).map_err(|d| Failure::build(blockmc::Error::Spec(d)))?;
    let data = DataSet::from_json_str(&manifest.data.to_string()).map_err(Failure::build)?;
    let graph = build_graph(&spec, &data).map_err(Failure::build)?;
    let probe = ModelSampler::from_graph(&spec, graph.clone(), &SamplerConfig::seeded(manifest.seed)).map_err(Failure::build)?;
    let mut draws = History::new(&layout(probe.get_history()), true);
    if draws.labels() != manifest.columns {
        return Err(Failure::config("chain columns do not match the model in the manifest"));
    }
    for name in &manifest.files {
        let file = ChainFile::read(&chains_dir.join(name))?;
        if file.columns != manifest.columns {
            return Err(Failure::config(format!("{name} does not match the manifest columns")));
        }
        for (i, row) in file.rows.iter().enumerate() {
            draws.record_flat(i as u64 + 1, row).map_err(Failure::build)?;
        }
    }

    let supplied: BTreeMap<String, Value> = DataSet::load(inputs)
        .map_err(Failure::build)?
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    let mut rng = substream(manifest.seed, 1);
    let prediction = blockmc::graph::predict_at(&graph, &draws, &supplied, &PredictOptions::default(), &mut rng)
        .map_err(Failure::build)?;

    let mut columns = Vec::new();
    for (name, values) in &prediction.outputs {
        columns.extend(flat_labels(name, &values[0].shape()));
    }
    let mut text = String::new();
    if !columns.is_empty() {
        text.push_str(&columns.join(","));
        text.push('\n');
        for d in 0..prediction.draws {
            let row: Vec<String> = prediction
                .outputs
                .values()
                .flat_map(|v| v[d].to_flat())
                .map(|x| format!("{x:.16e}"))
                .collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
    }
    write(out, &text)?;

    let mut note = Vec::new();
    if columns.is_empty() {
        note.push("no prediction is possible from the supplied inputs".to_string());
    }
    for n in &prediction.unpredictable {
        note.push(format!("not predictable from the supplied inputs: {n}"));
    }
    let note_file = note_path(out);
    let note = if note.is_empty() {
        let _ = fs::remove_file(&note_file);
        None
    } else {
        let body = note.join("\n") + "\n";
        write(&note_file, &body)?;
        Some(body)
    };
    Ok(PredictOutcome {
        rows: if columns.is_empty() { 0 } else { prediction.draws },
        columns,
        note,
    })
}
