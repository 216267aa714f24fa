use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use fnt_core::classlm::ClassModel;
use fnt_core::decoder::{DecoderConfig, ExitRule, ExternalLms};
use fnt_core::fusion::{FusionMethod, SecondStage};
use fnt_core::lm::{ExternalLm, Vocabulary};
use fnt_core::ngram::{load_arpa, CachedNgram};
use fnt_core::sim::{files, load_references, EncoderOutput, FntScorer, Reference, ScenarioSpec};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub models: ModelPaths,
    pub scorer: ScorerConfig,
    pub decoder: DecoderConfig,
    pub data: DataPaths,
    pub scenario: ScenarioSpec,
    pub bench: BenchConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    /// Defaults to the scenario's vocab.txt.
    pub vocab: Option<PathBuf>,
    pub predictor: Option<PathBuf>,
    pub lexical: Option<PathBuf>,
    pub clm: Option<PathBuf>,
    /// Defaults to the scenario's classes.tsv.
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    /// Blank penalty per emission; defaults to the scenario's gamma.txt.
    pub gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Directory written by `fnt synth`.
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub vocab_size: usize,
    pub small_tokens: usize,
    pub large_tokens: usize,
    pub order: usize,
    pub queries: usize,
    /// Timed passes per top_r measurement.
    pub repeats: usize,
    /// Timed decodes per utterance and configuration.
    pub decode_repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            vocab_size: 1000,
            small_tokens: 3_000,
            large_tokens: 500_000,
            order: 4,
            queries: 2000,
            repeats: 10,
            decode_repeats: 3,
        }
    }
}

/// Flags that override the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Fusion method: none, sf, li, lli, cli or clm.
    #[arg(long)]
    pub method: Option<FusionMethod>,
    /// Weight of the first fusion stage.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adds a class LM stage with this weight after the first stage.
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Rank limit r of conditional interpolation.
    #[arg(long)]
    pub rank_r: Option<usize>,
    /// Encoder rank gate r' for class entry and class-internal steps.
    #[arg(long)]
    pub rank_rprime: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub nbest: Option<usize>,
    /// standard or require-cat1.
    #[arg(long)]
    pub exit_rule: Option<ExitRule>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let d = &mut self.decoder;
        if let Some(m) = o.method {
            d.fusion.method = m;
        }
        if let Some(a) = o.alpha {
            d.fusion.alpha = a;
        }
        if let Some(a) = o.alpha2 {
            d.fusion.second = Some(SecondStage {
                method: FusionMethod::Clm,
                alpha: a,
            });
        }
        if let Some(r) = o.rank_r {
            d.fusion.rank_r = r;
        }
        if let Some(r) = o.rank_rprime {
            d.rank_rprime = r;
        }
        if let Some(b) = o.beam {
            d.beam = b;
        }
        if let Some(n) = o.nbest {
            d.nbest = n;
        }
        if let Some(e) = o.exit_rule {
            d.exit_rule = e;
        }
        if let Some(s) = o.seed {
            self.scenario.seed = s;
        }
        d.validate()?;
        Ok(())
    }

    fn scenario_file(&self, name: &str) -> Option<PathBuf> {
        self.data.scenario.as_ref().map(|d| d.join(name))
    }

    pub fn vocab(&self) -> Result<Arc<Vocabulary>> {
        let path = self
            .models
            .vocab
            .clone()
            .or_else(|| self.scenario_file(files::VOCAB))
            .context("no vocabulary: set models.vocab or data.scenario")?;
        Ok(Arc::new(Vocabulary::load(&path)?))
    }

    pub fn scorer(&self, vocab: &Arc<Vocabulary>) -> Result<FntScorer> {
        let path = self.models.predictor.as_ref().context("models.predictor is not set")?;
        let predictor = CachedNgram::new(Arc::new(load_arpa(path, Some(vocab.clone()))?));
        let gamma = match (self.scorer.gamma, self.scenario_file(files::GAMMA)) {
            (Some(g), _) => g,
            (None, Some(p)) if p.exists() => std::fs::read_to_string(&p)?
                .trim()
                .parse()
                .with_context(|| format!("parsing {}", p.display()))?,
            _ => 0.0,
        };
        Ok(FntScorer::new(Arc::new(predictor), gamma))
    }

    /// Loads whichever external models are configured.
    pub fn external(&self, vocab: &Arc<Vocabulary>) -> Result<ExternalLms> {
        let mut lms = ExternalLms::default();
        if let Some(path) = &self.models.lexical {
            let lm = CachedNgram::new(Arc::new(load_arpa(path, Some(vocab.clone()))?));
            lms.lexical = Some(Arc::new(lm) as Arc<dyn ExternalLm>);
        }
        if let Some(path) = &self.models.clm {
            let classes = self
                .models
                .classes
                .clone()
                .or_else(|| self.scenario_file(files::CLASSES))
                .context("class LM needs models.classes or data.scenario")?;
            lms.clm = Some(Arc::new(ClassModel::load(vocab.clone(), path, classes)?));
        }
        Ok(lms)
    }
}

/// References and encoder outputs of a scenario directory.
pub struct TestSet {
    pub refs: Vec<Reference>,
    pub encoders: Vec<EncoderOutput>,
}

impl TestSet {
    pub fn load(dir: &Path, vocab: &Vocabulary) -> Result<TestSet> {
        let refs = load_references(dir.join(files::REFERENCES), vocab)?;
        if refs.is_empty() {
            bail!("{} lists no utterances", dir.join(files::REFERENCES).display());
        }
        let encoders = refs
            .iter()
            .map(|r| EncoderOutput::load(dir.join(files::SCORES).join(format!("{}.scores", r.id)), Some(vocab)))
            .collect::<fnt_core::Result<_>>()?;
        Ok(TestSet { refs, encoders })
    }

    pub fn encoders(&self) -> Vec<&EncoderOutput> {
        self.encoders.iter().collect()
    }
}
