use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use argfill_core::data::{fingerprint, generate_synthetic, write_jsonl, EventInstance, EventRecord, SyntheticSpec, SYNTH_IMAGE_SIZE};
use argfill_core::evaluation::{default_grid, predict as run_predict, score_arguments, score_instances, sweep_thresholds, MetricReport, Task};
use argfill_core::matching::{AblationFlags, Model, Thresholds};
use argfill_core::ontology::Ontology;
use argfill_core::training::{self, RunManifest, TrainingData};
use argfill_core::Error;
use serde_json::json;

use crate::config::{FileConfig, RunConfig};
use crate::failure::{usage, CliResult, Failure};
use crate::output::{resolve, OutputDir};
use crate::source::{self, DataFormat, Dataset, LoadOptions, SplitName};
use crate::{AblateArgs, DataArgs, EvalArgs, PredictArgs, RunArgs, SweepArgs, SynthArgs, TrainArgs, TrainOverrides};

/// Variant names accepted by `ablate --suite`.
pub const ABLATIONS: [&str; 3] = ["no_cross_attention", "no_joint_prompts", "no_prompts"];

fn ablation_flags(name: &str) -> Option<AblationFlags> {
    let mut f = AblationFlags::default();
    match name {
        "baseline" => {}
        "no_cross_attention" => f.no_cross_attention = true,
        "no_joint_prompts" => f.joint_prompts = false,
        "no_prompts" => f.use_prototypes = true,
        _ => return None,
    }
    Some(f)
}

fn base_config(subcommand: &str, run: &RunArgs) -> CliResult<(RunConfig, bool)> {
    let (file, pinned) = FileConfig::load(run.config.as_deref())?;
    let rc = RunConfig {
        subcommand: subcommand.into(),
        output_dir: resolve(&run.out),
        force: run.force,
        config_file: run.config.clone(),
        inputs: Default::default(),
        training: file.training,
        model: file.model,
        eval: file.eval,
    };
    Ok((rc, pinned))
}

fn apply_overrides(rc: &mut RunConfig, o: &TrainOverrides) {
    let t = &mut rc.training;
    if let Some(s) = o.strategy {
        t.strategy = s;
    }
    if let Some(seed) = o.seed {
        t.seed = seed;
        rc.model.seed = seed;
    }
    if let Some(n) = o.text_epochs {
        t.text_epochs = n;
    }
    if let Some(n) = o.visual_epochs {
        t.visual_epochs = n;
    }
    if let Some(lr) = o.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(n) = o.evaluations {
        t.evaluations = n;
    }
}

fn load_data(args: &DataArgs, default_split: SplitName, rc: &mut RunConfig) -> CliResult<Dataset> {
    let opts = LoadOptions { format: args.format, split: args.split.unwrap_or(default_split), detections: args.detections.as_deref() };
    let ds = source::load(&args.data, &opts)?;
    rc.input("data", json!({ "path": ds.path, "format": ds.format, "split": opts.split, "fingerprint": ds.fingerprint() }));
    Ok(ds)
}

/// Explicit file, then the data's own ontology, then the checkpoint's, then M2E2.
fn resolve_ontology(flag: Option<&Path>, data: &Dataset, checkpoint: Option<&Path>) -> CliResult<Ontology> {
    if let Some(p) = flag {
        return Ok(Ontology::from_file(p)?);
    }
    if let Some(o) = &data.ontology {
        return Ok(o.clone());
    }
    if let Some(p) = checkpoint.filter(|p| p.exists()) {
        return Ok(Ontology::from_file(p)?);
    }
    Ok(Ontology::m2e2())
}

/// Checkpoint file and the ontology file saved next to it.
fn checkpoint_paths(p: &Path) -> (PathBuf, PathBuf) {
    if p.is_dir() {
        (p.join("model.ckpt"), p.join("ontology.toml"))
    } else {
        (p.to_path_buf(), p.parent().unwrap_or(Path::new(".")).join("ontology.toml"))
    }
}

fn write_manifest(out: &OutputDir, rc: &RunConfig, body: serde_json::Value) -> CliResult<()> {
    let mut m = json!({ "run_config": rc.to_value() });
    if let (Some(m), serde_json::Value::Object(b)) = (m.as_object_mut(), body) {
        m.extend(b);
    }
    out.write_json("manifest.json", &m)?;
    Ok(())
}

fn report_lines(report: &MetricReport) -> String {
    let mut s = String::new();
    for task in [Task::Textual, Task::Visual, Task::Multimedia] {
        let a = &report.task(task).arguments;
        let _ = writeln!(
            s,
            "{}\tP={:.4}\tR={:.4}\tF1={:.4}\t({} predicted, {} gold, {} matched)",
            task.as_str(),
            a.precision,
            a.recall,
            a.f1,
            a.predicted,
            a.gold,
            a.matched
        );
    }
    s
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let spec: SyntheticSpec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| crate::failure::io_failure(p, e))?;
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    let corpus = generate_synthetic(&spec)?;
    let out = OutputDir::create(resolve(&a.out), a.force)?;
    let mut files = BTreeMap::new();
    out.write("spec.toml", toml::to_string(&spec).expect("spec serializes"))?;
    out.write("ontology.toml", corpus.ontology.to_toml_string())?;
    for (name, docs) in [("train", &corpus.train), ("heldout", &corpus.heldout)] {
        let instances = corpus.instances(docs)?;
        let path = out.file(&format!("{name}.jsonl"))?;
        write_jsonl(&path, &instances)?;
        let doc_path = out.file(&format!("{name}_docs.jsonl"))?;
        write_jsonl(&doc_path, docs)?;
        files.insert(name, json!({ "instances": instances.len(), "documents": docs.len(), "fingerprint": fingerprint(docs) }));
    }
    let manifest = json!({
        "run_config": { "subcommand": "synth", "output_dir": out.path, "force": a.force, "spec_file": a.spec, "spec": spec },
        "splits": files,
    });
    out.write_json("manifest.json", &manifest)?;
    println!("wrote synthetic corpus to {}", out.path.display());
    Ok(())
}

struct Prepared {
    instances: Vec<EventInstance>,
    heldout: Vec<EventInstance>,
    ontology: Ontology,
    data_format: DataFormat,
}

fn prepare_training(rc: &mut RunConfig, data: &DataArgs, o: &TrainOverrides, pinned: bool) -> CliResult<Prepared> {
    apply_overrides(rc, o);
    let ds = load_data(data, SplitName::Train, rc)?;
    let ontology = resolve_ontology(data.ontology.as_deref(), &ds, None)?;
    if ds.format == DataFormat::Synthetic && !pinned {
        rc.model.vision.image_size = SYNTH_IMAGE_SIZE;
    }
    let instances = ds.training_instances(&ontology)?;
    let heldout = match &o.heldout {
        Some(p) => {
            let opts = LoadOptions { format: None, split: SplitName::Heldout, detections: data.detections.as_deref() };
            let h = source::load(p, &opts)?;
            rc.input("heldout", json!({ "path": h.path, "format": h.format, "fingerprint": h.fingerprint() }));
            h.training_instances(&ontology)?
        }
        None => ds.heldout_instances(&ontology)?.unwrap_or_default(),
    };
    rc.input("ontology", ontology.name());
    Ok(Prepared { instances, heldout, ontology, data_format: ds.format })
}

fn attach(mut manifest: RunManifest, rc: &RunConfig) -> RunManifest {
    manifest.run_config = Some(rc.to_value());
    manifest
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let (mut rc, pinned) = base_config("train", &a.run)?;
    let p = prepare_training(&mut rc, &a.data, &a.overrides, pinned)?;
    let target = a.target_ontology.as_deref().map(Ontology::from_file).transpose()?;
    if let Some(t) = &target {
        rc.input("target_ontology", t.name());
    }
    let out = OutputDir::create(rc.output_dir.clone(), rc.force)?;
    let ckpt = out.file("model.ckpt")?;
    out.file("manifest.json")?;
    out.file("ontology.toml")?;

    let (text, image) = TrainingData::split(&p.instances);
    let data = TrainingData { text: &text, image: &image, selection: &p.heldout };
    log::info!("training on {} text and {} image events ({:?})", text.len(), image.len(), p.data_format);
    let result = match &target {
        Some(t) => training::transfer_train(&rc.training, &rc.model, &p.ontology, t, data),
        None => training::train(&rc.training, &rc.model, &p.ontology, data),
    };
    let (model, manifest) = match result {
        Ok(ok) => ok,
        Err(Error::NonFinite { step, manifest }) => {
            let manifest = attach(*manifest, &rc);
            out.write("manifest.json", manifest.to_json())?;
            return Err(Error::NonFinite { step, manifest: Box::new(manifest) }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let manifest = attach(manifest, &rc);
    model.save(&ckpt)?;
    out.write("ontology.toml", p.ontology.to_toml_string())?;
    if let Some(t) = &target {
        out.write("target_ontology.toml", t.to_toml_string())?;
    }
    out.write("manifest.json", manifest.to_json())?;
    for s in &manifest.stages {
        println!(
            "stage {}: {} text + {} image steps, selected {}, frozen unchanged: {}",
            s.name, s.text_steps, s.image_steps, s.selected, s.frozen_unchanged
        );
    }
    if let Some(r) = &manifest.final_report {
        print!("{}", report_lines(r));
    }
    println!("checkpoint written to {}", ckpt.display());
    Ok(())
}

struct Scoring {
    rc: RunConfig,
    out: OutputDir,
    model: Model,
    ontology: Ontology,
    instances: Vec<EventInstance>,
    gold: Vec<EventRecord>,
    thresholds: Thresholds,
}

fn prepare_scoring(
    cmd: &str,
    run: &RunArgs,
    data: &DataArgs,
    eval: &EvalArgs,
    tau_text: Option<f64>,
    tau_vis: Option<f64>,
) -> CliResult<Scoring> {
    let (mut rc, _) = base_config(cmd, run)?;
    if let Some(m) = eval.mode {
        rc.eval.mode = m;
    }
    if let Some(t) = tau_text {
        rc.eval.tau_text = t;
    }
    if let Some(t) = tau_vis {
        rc.eval.tau_vis = t;
    }
    let thresholds = rc.eval.thresholds()?;
    let (ckpt, ckpt_ontology) = checkpoint_paths(&eval.checkpoint);
    let model = Model::load(&ckpt)?;
    rc.input("checkpoint", &ckpt);
    let ds = load_data(data, SplitName::Heldout, &mut rc)?;
    let ontology = resolve_ontology(data.ontology.as_deref(), &ds, Some(&ckpt_ontology))?;
    if ontology.name() != model.ontology_name() {
        log::warn!("checkpoint was trained on '{}', scoring against '{}'", model.ontology_name(), ontology.name());
    }
    rc.input("ontology", ontology.name());
    let triggers = source::load_triggers(eval.triggers.as_deref())?;
    if let Some(t) = &triggers {
        rc.input("triggers", json!({ "path": eval.triggers, "fingerprint": fingerprint(t) }));
    }
    let (instances, gold) = ds.evaluation_inputs(&ontology, rc.eval.mode, triggers.as_deref())?;
    let out = OutputDir::create(rc.output_dir.clone(), rc.force)?;
    Ok(Scoring { rc, out, model, ontology, instances, gold, thresholds })
}

pub fn predict(a: PredictArgs) -> CliResult<()> {
    let s = prepare_scoring("predict", &a.run, &a.data, &a.eval, a.tau_text, a.tau_vis)?;
    let path = s.out.file("predictions.jsonl")?;
    s.out.file("manifest.json")?;
    let pred = run_predict(&s.model, &s.ontology, &s.instances, &s.thresholds)?;
    write_jsonl(&path, &pred)?;
    let arguments: usize = pred.iter().map(|r| r.arguments.len()).sum();
    write_manifest(
        &s.out,
        &s.rc,
        json!({ "outputs": { "predictions": path }, "events": pred.len(), "arguments": arguments, "fingerprint": fingerprint(&pred) }),
    )?;
    println!("{} events, {arguments} arguments written to {}", pred.len(), path.display());
    Ok(())
}

pub fn eval(a: PredictArgs) -> CliResult<()> {
    let s = prepare_scoring("eval", &a.run, &a.data, &a.eval, a.tau_text, a.tau_vis)?;
    s.out.file("metrics.json")?;
    s.out.file("manifest.json")?;
    let pred = run_predict(&s.model, &s.ontology, &s.instances, &s.thresholds)?;
    let report = score_arguments(&pred, &s.gold, &s.rc.eval.policy, &s.ontology)?;
    s.out.write_json("metrics.json", &report)?;
    write_manifest(&s.out, &s.rc, json!({ "report": report }))?;
    print!("{}", report_lines(&report));
    Ok(())
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let s = prepare_scoring("sweep", &a.run, &a.data, &a.eval, None, None)?;
    let grid = |g: &Vec<f64>| if g.is_empty() { default_grid() } else { g.clone() };
    let (gt, gv) = (grid(&a.grid_text), grid(&a.grid_vis));
    s.out.file("sweep.tsv")?;
    s.out.file("manifest.json")?;
    let results = score_instances(&s.model, &s.ontology, &s.instances, &s.thresholds)?;
    let table = sweep_thresholds(&s.instances, &results, &s.gold, &gt, &gv, &s.rc.eval.policy, &s.ontology)?;
    s.out.write("sweep.tsv", table.to_tsv())?;
    write_manifest(
        &s.out,
        &s.rc,
        json!({ "grid_text": gt, "grid_vis": gv, "best_tau_text": table.best_tau_text, "best_tau_vis": table.best_tau_vis, "rows": table.rows }),
    )?;
    println!("best tau_text {} best tau_vis {}", table.best_tau_text, table.best_tau_vis);
    Ok(())
}

pub fn ablate(a: AblateArgs) -> CliResult<()> {
    let mut variants = vec!["baseline".to_string()];
    for v in &a.suite {
        if !ABLATIONS.contains(&v.as_str()) {
            return usage(format!("unknown ablation '{v}' (expected one of {})", ABLATIONS.join(", ")));
        }
        if !variants.contains(v) {
            variants.push(v.clone());
        }
    }
    let (mut rc, pinned) = base_config("ablate", &a.run)?;
    let p = prepare_training(&mut rc, &a.data, &a.overrides, pinned)?;
    if p.heldout.is_empty() {
        return usage("ablate needs a held-out split: pass --heldout or use a synthetic spec");
    }
    rc.input("suite", &variants);
    let thresholds = rc.eval.thresholds()?;
    let out = OutputDir::create(rc.output_dir.clone(), rc.force)?;
    out.file("ablation.tsv")?;
    out.file("manifest.json")?;
    let (text, image) = TrainingData::split(&p.instances);
    let data = TrainingData { text: &text, image: &image, selection: &p.heldout };
    let gold = argfill_core::evaluation::instance_gold(&p.heldout);

    let mut tsv = String::from("variant\ttextual_f1\tvisual_f1\tmultimedia_f1\ttrainable_groups\n");
    let mut rows = Vec::new();
    for name in &variants {
        let mut model_cfg = rc.model.clone();
        model_cfg.ablation = ablation_flags(name).expect("validated above");
        log::info!("ablation variant {name}");
        let (model, manifest) = training::train(&rc.training, &model_cfg, &p.ontology, data)?;
        let pred = run_predict(&model, &p.ontology, &p.heldout, &thresholds)?;
        let report = score_arguments(&pred, &gold, &rc.eval.policy, &p.ontology)?;
        let mut groups: Vec<String> = manifest.stages.iter().flat_map(|s| s.trainable_groups.clone()).collect();
        groups.sort();
        groups.dedup();
        let _ = writeln!(
            tsv,
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{}",
            report.textual.arguments.f1,
            report.visual.arguments.f1,
            report.multimedia.arguments.f1,
            groups.join(",")
        );
        let mut variant_rc = rc.clone();
        variant_rc.model = model_cfg;
        out.subdir(name)?.write("manifest.json", attach(manifest, &variant_rc).to_json())?;
        rows.push(json!({ "variant": name, "report": report, "trainable_groups": groups }));
    }
    out.write("ablation.tsv", &tsv)?;
    write_manifest(&out, &rc, json!({ "rows": rows }))?;
    print!("{tsv}");
    Ok(())
}
