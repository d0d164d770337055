//! Resolves `--data` arguments into documents or event instances.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use argfill_core::data::{
    build_instances, fingerprint, generate_synthetic, load_m2e2, read_jsonl, CandidateSource, EventInstance,
    EventRecord, M2e2Options, MultimediaDocument, SyntheticSpec, TriggerSource,
};
use argfill_core::evaluation::{instance_gold, instances_for_mode, EvalMode};
use argfill_core::ontology::Ontology;
use argfill_core::Error;
use serde::Serialize;

use crate::failure::{io_failure, usage, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Synthetic,
    M2e2,
    Documents,
    Instances,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "m2e2" => Ok(Self::M2e2),
            "documents" => Ok(Self::Documents),
            "instances" => Ok(Self::Instances),
            other => Err(format!("unknown data format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    #[default]
    Train,
    Heldout,
}

/// Format guessed from the path: spec files are TOML, M2E2 is a directory,
/// anything else is a file of normalized instances.
pub fn detect(path: &Path) -> DataFormat {
    if path.is_dir() {
        DataFormat::M2e2
    } else if path.extension().is_some_and(|e| e == "toml") {
        DataFormat::Synthetic
    } else {
        DataFormat::Instances
    }
}

#[derive(Debug, Clone)]
pub enum Records {
    Documents(Vec<MultimediaDocument>),
    Instances(Vec<EventInstance>),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub path: PathBuf,
    pub format: DataFormat,
    pub records: Records,
    /// Ontology carried by the data itself (synthetic corpora).
    pub ontology: Option<Ontology>,
    /// Held-out split shipped with the data (synthetic corpora).
    pub heldout: Option<Vec<MultimediaDocument>>,
}

pub struct LoadOptions<'a> {
    pub format: Option<DataFormat>,
    pub split: SplitName,
    pub detections: Option<&'a Path>,
}

pub fn load(path: &Path, opts: &LoadOptions<'_>) -> CliResult<Dataset> {
    if !path.exists() {
        return usage(format!("data path {} does not exist", path.display()));
    }
    let format = opts.format.unwrap_or_else(|| detect(path));
    let mut ds = Dataset { path: path.to_path_buf(), format, records: Records::Instances(Vec::new()), ontology: None, heldout: None };
    match format {
        DataFormat::Synthetic => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let spec: SyntheticSpec = match toml::from_str(&text) {
                Ok(s) => s,
                Err(e) => return usage(format!("{}: {e}", path.display())),
            };
            let corpus = generate_synthetic(&spec)?;
            let (docs, other) = match opts.split {
                SplitName::Train => (corpus.train, corpus.heldout),
                SplitName::Heldout => (corpus.heldout, corpus.train),
            };
            ds.records = Records::Documents(docs);
            ds.heldout = (opts.split == SplitName::Train).then_some(other);
            ds.ontology = Some(corpus.ontology);
        }
        DataFormat::M2e2 => {
            let options = M2e2Options { detections: opts.detections.map(Path::to_path_buf), image_dir: None };
            ds.records = Records::Documents(load_m2e2(path, &options)?);
        }
        DataFormat::Documents => ds.records = Records::Documents(read_jsonl(path)?),
        DataFormat::Instances => ds.records = Records::Instances(read_jsonl(path)?),
    }
    Ok(ds)
}

/// Instance file for predicted triggers, read as event records.
pub fn load_triggers(path: Option<&Path>) -> CliResult<Option<Vec<EventRecord>>> {
    path.map(|p| read_jsonl(p).map_err(Failure::from)).transpose()
}

impl Dataset {
    pub fn fingerprint(&self) -> String {
        match &self.records {
            Records::Documents(d) => fingerprint(d),
            Records::Instances(i) => fingerprint(i),
        }
    }

    /// Gold-trigger training instances.
    pub fn training_instances(&self, ontology: &Ontology) -> CliResult<Vec<EventInstance>> {
        match &self.records {
            Records::Documents(d) => Ok(build_instances(d, ontology.name(), TriggerSource::Gold, CandidateSource::Detected)?),
            Records::Instances(i) => Ok(i.clone()),
        }
    }

    /// Instances to score and the gold records to score them against.
    pub fn evaluation_inputs(
        &self,
        ontology: &Ontology,
        mode: EvalMode,
        triggers: Option<&[EventRecord]>,
    ) -> CliResult<(Vec<EventInstance>, Vec<EventRecord>)> {
        match &self.records {
            Records::Documents(d) => {
                let instances = instances_for_mode(d, ontology, mode, triggers)?;
                Ok((instances, argfill_core::data::gold_records(d)))
            }
            Records::Instances(i) => {
                if mode == EvalMode::PredTriggers {
                    return Err(Error::Config(
                        "pred_triggers mode needs documents; instance files already fix their triggers".into(),
                    )
                    .into());
                }
                Ok((i.clone(), instance_gold(i)))
            }
        }
    }

    pub fn heldout_instances(&self, ontology: &Ontology) -> CliResult<Option<Vec<EventInstance>>> {
        self.heldout
            .as_ref()
            .map(|d| build_instances(d, ontology.name(), TriggerSource::Gold, CandidateSource::Detected).map_err(Failure::from))
            .transpose()
    }
}
