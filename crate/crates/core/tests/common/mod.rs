#![allow(dead_code)]
pub mod criteria;
pub mod oracles;


use argfill_core::data::{generate_synthetic, EventInstance, SyntheticCorpus, SyntheticSpec};
use argfill_core::matching::{Model, ModelConfig};
use argfill_core::training::{train, RunManifest, TrainingConfig, TrainingData};

pub struct Split {
    pub corpus: SyntheticCorpus,
    pub train: Vec<EventInstance>,
    pub heldout: Vec<EventInstance>,
    pub text: Vec<EventInstance>,
    pub image: Vec<EventInstance>,
}

impl Split {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let corpus = generate_synthetic(spec).unwrap();
        let train = corpus.train_instances().unwrap();
        let heldout = corpus.heldout_instances().unwrap();
        let (text, image) = TrainingData::split(&train);
        Self { corpus, train, heldout, text, image }
    }

    pub fn data(&self) -> TrainingData<'_> {
        TrainingData { text: &self.text, image: &self.image, selection: &self.heldout }
    }
}

pub fn small_spec(events: usize) -> SyntheticSpec {
    SyntheticSpec { events_per_modality: events, heldout_events_per_modality: events, ..Default::default() }
}

pub fn synthetic_model_config() -> ModelConfig {
    let mut mc = ModelConfig::default();
    mc.vision.image_size = argfill_core::data::SYNTH_IMAGE_SIZE;
    mc
}

/// 100 text and 100 image steps on 64 events per modality.
pub fn overfit_config() -> TrainingConfig {
    TrainingConfig {
        learning_rate: 1e-2,
        text_epochs: 50,
        visual_epochs: 50,
        text_batch: 32,
        visual_batch: 32,
        evaluations: 0,
        ..Default::default()
    }
}

pub fn short_config(strategy: argfill_core::training::Strategy) -> TrainingConfig {
    TrainingConfig {
        strategy,
        learning_rate: 1e-2,
        text_epochs: 2,
        visual_epochs: 2,
        text_batch: 4,
        visual_batch: 4,
        evaluations: 2,
        ..Default::default()
    }
}

pub fn overfit_run() -> (Split, Model, RunManifest) {
    let split = Split::new(&SyntheticSpec::default());
    let (model, manifest) = train(&overfit_config(), &synthetic_model_config(), &split.corpus.ontology, split.data()).unwrap();
    (split, model, manifest)
}
