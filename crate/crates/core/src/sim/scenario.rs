use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use super::EncoderOutput;
use crate::classlm::ClassDefinitions;
use crate::lm::{is_class_tag, log_softmax, TokenId, Vocabulary, BOS, EOS, LOG_ZERO, WORD_BOUNDARY};
use crate::{Error, Result};

const CONSONANTS: [&str; 16] = [
    "b", "p", "d", "t", "g", "k", "f", "v", "s", "z", "m", "n", "l", "r", "h", "j",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
const CODAS: [&str; 2] = ["", "n"];

/// Generator parameters for a synthetic entity-rich corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// In-domain sentence templates; `⟨TAG⟩` marks a class slot.
    pub templates: Vec<String>,
    /// Out-of-domain templates mixed into the predictor's training text.
    pub background_templates: Vec<String>,
    pub classes: Vec<ClassSpec>,
    pub background_sentences: usize,
    pub adaptation_sentences: usize,
    /// Tagged sentences for the class LM; 0 means one per template.
    pub tagged_sentences: usize,
    pub test_utterances: usize,
    /// Fraction of test entities drawn from the class lists.
    pub coverage: f64,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassSpec {
    pub tag: String,
    pub size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_syllables: usize,
    pub max_syllables: usize,
    /// Zipf exponent of the entity weights; 0 is uniform.
    pub skew: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Logit boost of the spoken token.
    pub scale: f64,
    /// Gumbel noise temperature.
    pub tau: f64,
    /// Confuser boost per unit of `tau`.
    pub similarity: f64,
    /// Probability that a confuser takes the full boost instead of the spoken token.
    pub substitution_rate: f64,
    /// Added to log(1 − p_peak) on token frames, subtracted on blank-only frames.
    pub blank_bias: f64,
    pub blank_floor: f64,
    /// Probability of a blank-only frame before each token.
    pub blank_frame_rate: f64,
    /// Blank penalty per symbol emitted in the current frame.
    pub gamma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            scale: 12.0,
            tau: 1.3,
            similarity: 6.5,
            substitution_rate: 0.1,
            blank_bias: -12.0,
            blank_floor: 1e-4,
            blank_frame_rate: 0.0,
            gamma: 14.0,
        }
    }
}

impl Default for ClassSpec {
    fn default() -> Self {
        ClassSpec {
            tag: String::new(),
            size: 10,
            min_words: 1,
            max_words: 1,
            min_syllables: 2,
            max_syllables: 3,
            skew: 0.0,
        }
    }
}

fn class(tag: &str, size: usize, max_words: usize) -> ClassSpec {
    ClassSpec {
        tag: format!("\u{27e8}{tag}\u{27e9}"),
        size,
        max_words,
        ..Default::default()
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let templates = [
            "call ⟨NAME⟩",
            "call ⟨NAME⟩ on ⟨DAY⟩",
            "send a message to ⟨NAME⟩",
            "order a ⟨SIZE⟩ ⟨COLOR⟩ ⟨ITEM⟩",
            "order ⟨ITEM⟩ from ⟨STORE⟩",
            "add ⟨ITEM⟩ to my list",
            "remind me to call ⟨NAME⟩ on ⟨DAY⟩",
            "is ⟨STORE⟩ open on ⟨DAY⟩",
            "buy a ⟨COLOR⟩ ⟨ITEM⟩ for ⟨NAME⟩",
            "where is my ⟨ITEM⟩ order",
            "ship the ⟨ITEM⟩ to ⟨NAME⟩",
            "i want the ⟨SIZE⟩ one in ⟨COLOR⟩",
            "text ⟨NAME⟩ that i am late",
            "cancel my order from ⟨STORE⟩",
            "show me ⟨COLOR⟩ ⟨ITEM⟩ at ⟨STORE⟩",
            "schedule a meeting with ⟨NAME⟩ on ⟨DAY⟩",
            "reorder the ⟨ITEM⟩ i bought last week",
            "does ⟨STORE⟩ have ⟨ITEM⟩ in ⟨SIZE⟩",
            "tell ⟨NAME⟩ i will be there on ⟨DAY⟩",
            "track the package for ⟨NAME⟩",
            "play the voice message from ⟨NAME⟩",
            "get me two ⟨ITEM⟩ from ⟨STORE⟩",
            "change the color to ⟨COLOR⟩",
            "deliver it on ⟨DAY⟩ please",
            "how much is the ⟨SIZE⟩ ⟨ITEM⟩",
            "video call with ⟨NAME⟩ and ⟨NAME⟩",
            "return the ⟨ITEM⟩ to ⟨STORE⟩",
            "find a ⟨ITEM⟩ in ⟨COLOR⟩ and ⟨SIZE⟩",
            "what did ⟨NAME⟩ say",
            "pick up my order at ⟨STORE⟩ on ⟨DAY⟩",
            "is the ⟨ITEM⟩ available in ⟨SIZE⟩",
            "share my location with ⟨NAME⟩",
            "add ⟨NAME⟩ to the family plan",
            "when will my ⟨ITEM⟩ arrive",
            "call back ⟨NAME⟩ after lunch",
        ];
        let background = [
            "what is the weather like today",
            "set an alarm for seven in the morning",
            "turn the lights off in the kitchen",
            "how long does it take to get to work",
            "play some music please",
            "what time is it",
            "i am on my way home",
            "read my new messages",
            "turn up the volume",
            "how do you say thank you in ⟨NAME⟩",
            "navigate to ⟨NAME⟩",
            "who won the game last night",
            "tell me a joke",
            "open the ⟨NAME⟩ app",
            "is it going to rain this week",
        ];
        ScenarioSpec {
            seed: 17,
            templates: templates.iter().map(|s| s.to_string()).collect(),
            background_templates: background.iter().map(|s| s.to_string()).collect(),
            classes: vec![
                class("NAME", 1212, 2),
                class("ITEM", 121, 2),
                class("STORE", 8, 1),
                class("DAY", 8, 1),
                class("COLOR", 7, 1),
                class("SIZE", 4, 1),
            ],
            background_sentences: 4000,
            adaptation_sentences: 1500,
            tagged_sentences: 0,
            test_utterances: 500,
            coverage: 1.0,
            noise: NoiseSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.templates.is_empty() {
            return bad("scenario has no templates".into());
        }
        if self.classes.is_empty() {
            return bad("scenario has no classes".into());
        }
        for c in &self.classes {
            if !is_class_tag(&c.tag) {
                return bad(format!("{:?} is not a class tag", c.tag));
            }
            if c.size == 0
                || c.min_words == 0
                || c.min_words > c.max_words
                || c.min_syllables == 0
                || c.min_syllables > c.max_syllables
                || c.skew.is_nan()
                || c.skew < 0.0
            {
                return bad(format!("class {} has an empty or inverted shape", c.tag));
            }
        }
        for t in self.templates.iter().chain(&self.background_templates) {
            for w in t.split_whitespace() {
                if is_class_tag(w) && !self.classes.iter().any(|c| c.tag == w) {
                    return bad(format!("template {t:?} uses undeclared class {w}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return bad(format!("coverage {} outside [0, 1]", self.coverage));
        }
        let n = &self.noise;
        if !(n.tau >= 0.0 && n.scale >= 0.0 && n.blank_floor > 0.0 && n.blank_floor < 1.0) {
            return bad("noise scale, tau and blank floor must be non-negative".into());
        }
        for (name, p) in [
            ("substitution_rate", n.substitution_rate),
            ("blank_frame_rate", n.blank_frame_rate),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1)"));
            }
        }
        if self.test_utterances == 0 || self.background_sentences == 0 {
            return bad("scenario needs background and test sentences".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TestUtterance {
    pub id: String,
    pub reference: Vec<TokenId>,
    /// One flag per reference word: true inside an entity mention.
    pub entity_words: Vec<bool>,
    pub encoder: EncoderOutput,
}

/// A generated corpus: model training texts, class lists and a scored test set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub vocab: Arc<Vocabulary>,
    pub background: Vec<Vec<TokenId>>,
    pub adaptation: Vec<Vec<TokenId>>,
    pub tagged: Vec<Vec<String>>,
    pub classes: ClassDefinitions,
    pub test: Vec<TestUtterance>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Syllable {
    c: usize,
    v: usize,
    coda: usize,
}

impl Syllable {
    fn text(self) -> String {
        format!("{}{}{}", CONSONANTS[self.c], VOWELS[self.v], CODAS[self.coda])
    }

    fn confusers(self) -> [Syllable; 3] {
        [
            Syllable { c: self.c ^ 1, ..self },
            Syllable {
                v: (self.v + 1) % VOWELS.len(),
                ..self
            },
            Syllable {
                coda: 1 - self.coda,
                ..self
            },
        ]
    }

    fn all() -> impl Iterator<Item = Syllable> {
        (0..CONSONANTS.len()).flat_map(|c| {
            (0..VOWELS.len()).flat_map(move |v| (0..CODAS.len()).map(move |coda| Syllable { c, v, coda }))
        })
    }
}

fn piece(word_initial: bool, text: &str) -> String {
    if word_initial {
        format!("{WORD_BOUNDARY}{text}")
    } else {
        text.to_string()
    }
}

type Entity = Vec<String>;

struct Generator<'a> {
    spec: &'a ScenarioSpec,
    rng: ChaCha8Rng,
    vocab: Arc<Vocabulary>,
    confusers: Vec<Vec<TokenId>>,
    lists: Vec<(Vec<Entity>, WeightedIndex<f64>)>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut carriers = BTreeSet::new();
        for t in spec.templates.iter().chain(&spec.background_templates) {
            carriers.extend(t.split_whitespace().filter(|w| !is_class_tag(w)).map(str::to_string));
        }
        let mut tokens = vec![BOS.to_string(), EOS.to_string()];
        tokens.extend(carriers.iter().map(|w| piece(true, w)));
        let syllables: Vec<Syllable> = Syllable::all().collect();
        for initial in [true, false] {
            for s in &syllables {
                let p = piece(initial, &s.text());
                if !tokens.contains(&p) {
                    tokens.push(p);
                }
            }
        }
        let vocab = Arc::new(Vocabulary::new(tokens)?);

        let mut confusers = vec![Vec::new(); vocab.len()];
        let carrier_ids: Vec<TokenId> = carriers
            .iter()
            .map(|w| vocab.id(&piece(true, w)))
            .collect::<Result<_>>()?;
        for &id in &carrier_ids {
            let others: Vec<TokenId> = carrier_ids.iter().copied().filter(|&o| o != id).collect();
            confusers[id as usize] = others.choose_multiple(&mut rng, 2.min(others.len())).copied().collect();
        }
        for initial in [true, false] {
            for s in &syllables {
                let Some(id) = vocab.get(&piece(initial, &s.text())) else {
                    continue;
                };
                confusers[id as usize] = s
                    .confusers()
                    .iter()
                    .filter_map(|c| vocab.get(&piece(initial, &c.text())))
                    .filter(|&c| c != id)
                    .collect();
            }
        }

        let mut g = Generator {
            spec,
            rng,
            vocab,
            confusers,
            lists: Vec::new(),
        };
        let mut seen = BTreeSet::new();
        for c in &spec.classes {
            let mut entries = Vec::with_capacity(c.size);
            let mut attempts = 0;
            while entries.len() < c.size {
                let e = g.fresh_entity(c);
                attempts += 1;
                if seen.insert(e.clone()) {
                    entries.push(e);
                } else if attempts > 100 * c.size + 1000 {
                    return Err(Error::Config(format!(
                        "class {} cannot hold {} distinct entries",
                        c.tag, c.size
                    )));
                }
            }
            let weights: Vec<f64> = (0..entries.len()).map(|i| (i as f64 + 1.0).powf(-c.skew)).collect();
            let index = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
            g.lists.push((entries, index));
        }
        Ok(g)
    }

    fn fresh_entity(&mut self, c: &ClassSpec) -> Entity {
        let words = self.rng.random_range(c.min_words..=c.max_words);
        let mut pieces = Vec::new();
        for _ in 0..words {
            let n = self.rng.random_range(c.min_syllables..=c.max_syllables);
            for k in 0..n {
                let s = Syllable {
                    c: self.rng.random_range(0..CONSONANTS.len()),
                    v: self.rng.random_range(0..VOWELS.len()),
                    coda: self.rng.random_range(0..CODAS.len()),
                };
                pieces.push(piece(k == 0, &s.text()));
            }
        }
        pieces
    }

    fn class_index(&self, tag: &str) -> usize {
        self.spec.classes.iter().position(|c| c.tag == tag).expect("validated")
    }

    fn listed_entity(&mut self, class: usize) -> Entity {
        let (entries, index) = &self.lists[class];
        entries[index.sample(&mut self.rng)].clone()
    }

    /// Fills a template. Returns pieces with one entity flag per word.
    fn fill(&mut self, template: &str, listed: impl Fn(&mut Self) -> bool) -> (Vec<String>, Vec<bool>) {
        let mut pieces = Vec::new();
        let mut flags = Vec::new();
        for w in template.split_whitespace() {
            if is_class_tag(w) {
                let k = self.class_index(w);
                let e = if listed(self) {
                    self.listed_entity(k)
                } else {
                    let c = self.spec.classes[k].clone();
                    self.fresh_entity(&c)
                };
                flags.extend(e.iter().filter(|p| p.starts_with(WORD_BOUNDARY)).map(|_| true));
                pieces.extend(e);
            } else {
                pieces.push(piece(true, w));
                flags.push(false);
            }
        }
        (pieces, flags)
    }

    fn ids(&self, pieces: &[String]) -> Result<Vec<TokenId>> {
        pieces.iter().map(|p| self.vocab.id(p)).collect()
    }

    fn encode(&mut self, reference: &[TokenId]) -> Result<EncoderOutput> {
        let n = self.spec.noise;
        let v = self.vocab.len();
        let gumbel = Gumbel::new(0.0, 1.0).expect("valid Gumbel");
        let specials = [self.vocab.bos()?, self.vocab.eos()?];
        let mut scores = Vec::new();
        let mut blank = Vec::new();
        let mut frame = |rng: &mut ChaCha8Rng, token: Option<TokenId>| {
            let mut logits: Vec<f64> = (0..v).map(|_| n.tau * gumbel.sample(rng)).collect();
            if let Some(t) = token {
                let conf = &self.confusers[t as usize];
                let mut peak = t;
                if !conf.is_empty() && rng.random_bool(n.substitution_rate) {
                    peak = *conf.choose(rng).expect("non-empty");
                }
                let bonus = n.similarity * n.tau;
                for &c in conf {
                    logits[c as usize] += bonus;
                }
                if peak != t {
                    logits[t as usize] += bonus;
                    logits[peak as usize] += n.scale - bonus;
                } else {
                    logits[t as usize] += n.scale;
                }
            }
            for &s in &specials {
                logits[s as usize] = LOG_ZERO;
            }
            let z = log_softmax(&logits).expect("finite logits");
            let peak = z.iter().copied().fold(LOG_ZERO, f64::max).exp();
            let base = (1.0 - peak).max(n.blank_floor).ln();
            blank.push(if token.is_some() {
                base + n.blank_bias
            } else {
                base - n.blank_bias
            });
            scores.extend(z);
        };
        for &t in reference {
            if n.blank_frame_rate > 0.0 && self.rng.random_bool(n.blank_frame_rate) {
                frame(&mut self.rng, None);
            }
            frame(&mut self.rng, Some(t));
        }
        EncoderOutput::new(v, scores, blank)
    }
}

/// Generates a scenario. The same spec always yields the same scenario.
pub fn synthesize_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut g = Generator::new(spec)?;

    let mut background = Vec::with_capacity(spec.background_sentences);
    for _ in 0..spec.background_sentences {
        let pool = if spec.background_templates.is_empty() || g.rng.random_bool(0.5) {
            &spec.templates
        } else {
            &spec.background_templates
        };
        let t = pool.choose(&mut g.rng).expect("non-empty").clone();
        let (pieces, _) = g.fill(&t, |_| false);
        background.push(g.ids(&pieces)?);
    }

    let mut adaptation = Vec::with_capacity(spec.adaptation_sentences);
    for _ in 0..spec.adaptation_sentences {
        let t = spec.templates.choose(&mut g.rng).expect("non-empty").clone();
        let (pieces, _) = g.fill(&t, |_| true);
        adaptation.push(g.ids(&pieces)?);
    }

    let tag_pieces = |t: &str| -> Vec<String> {
        t.split_whitespace()
            .map(|w| if is_class_tag(w) { w.to_string() } else { piece(true, w) })
            .collect()
    };
    let tagged: Vec<Vec<String>> = if spec.tagged_sentences == 0 {
        spec.templates.iter().map(|t| tag_pieces(t)).collect()
    } else {
        (0..spec.tagged_sentences)
            .map(|_| tag_pieces(spec.templates.choose(&mut g.rng).expect("non-empty")))
            .collect()
    };

    let mut classes = ClassDefinitions::default();
    for (c, (entries, _)) in spec.classes.iter().zip(&g.lists) {
        for (i, e) in entries.iter().enumerate() {
            classes.add(&c.tag, e.clone(), (i as f64 + 1.0).powf(-c.skew))?;
        }
    }

    let width = spec.test_utterances.to_string().len();
    let mut test = Vec::with_capacity(spec.test_utterances);
    for i in 0..spec.test_utterances {
        let t = spec.templates.choose(&mut g.rng).expect("non-empty").clone();
        let coverage = spec.coverage;
        let (pieces, entity_words) = g.fill(&t, |g| g.rng.random_bool(coverage));
        let reference = g.ids(&pieces)?;
        let encoder = g.encode(&reference)?;
        test.push(TestUtterance {
            id: format!("utt{i:0width$}"),
            reference,
            entity_words,
            encoder,
        });
    }

    Ok(Scenario {
        vocab: g.vocab,
        background,
        adaptation,
        tagged,
        classes,
        test,
        gamma: spec.noise.gamma,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn token_lines(vocab: &Vocabulary, corpus: &[Vec<TokenId>]) -> String {
    let mut out = String::new();
    for s in corpus {
        out.push_str(&vocab.decode(s).join(" "));
        out.push('\n');
    }
    out
}

/// File names used by [`Scenario::save`].
pub mod files {
    pub const VOCAB: &str = "vocab.txt";
    pub const BACKGROUND: &str = "background.txt";
    pub const ADAPTATION: &str = "adaptation.txt";
    pub const TAGGED: &str = "tagged.txt";
    pub const CLASSES: &str = "classes.tsv";
    pub const REFERENCES: &str = "refs.tsv";
    pub const SCORES: &str = "scores";
    pub const GAMMA: &str = "gamma.txt";
}

impl Scenario {
    /// Writes every artifact under `dir`, one score file per test utterance.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let scores = dir.join(files::SCORES);
        fs::create_dir_all(&scores).map_err(|e| Error::io(&scores, e))?;
        self.vocab.save(dir.join(files::VOCAB))?;
        write(
            &dir.join(files::BACKGROUND),
            &token_lines(&self.vocab, &self.background),
        )?;
        write(
            &dir.join(files::ADAPTATION),
            &token_lines(&self.vocab, &self.adaptation),
        )?;
        let tagged: String = self.tagged.iter().map(|s| s.join(" ") + "\n").collect();
        write(&dir.join(files::TAGGED), &tagged)?;
        self.classes.save(dir.join(files::CLASSES))?;
        write(&dir.join(files::GAMMA), &format!("{}\n", self.gamma))?;
        let mut refs = String::new();
        for u in &self.test {
            let mask: String = u.entity_words.iter().map(|&e| if e { '1' } else { '0' }).collect();
            let _ = writeln!(
                refs,
                "{}\t{}\t{}",
                u.id,
                self.vocab.decode(&u.reference).join(" "),
                mask
            );
            u.encoder.save(scores.join(format!("{}.scores", u.id)))?;
        }
        write(&dir.join(files::REFERENCES), &refs)
    }
}

/// A reference transcript as stored in `refs.tsv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub id: String,
    pub tokens: Vec<TokenId>,
    pub entity_words: Vec<bool>,
}

/// Reads `id \t pieces \t mask` lines; the mask column is optional.
pub fn load_references(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Reference>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut refs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().to_string();
        let tokens = vocab
            .encode(cols.next().ok_or_else(|| parse_err("missing transcript".into()))?)
            .map_err(|e| parse_err(e.to_string()))?;
        let words = vocab.detokenize(&tokens).len();
        let entity_words = match cols.next() {
            Some(mask) => {
                let flags: Vec<bool> = mask
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(parse_err(format!("bad mask character {c:?}"))),
                    })
                    .collect::<Result<_>>()?;
                if flags.len() != words {
                    return Err(parse_err(format!("mask has {} flags for {words} words", flags.len())));
                }
                flags
            }
            None => vec![false; words],
        };
        refs.push(Reference {
            id,
            tokens,
            entity_words,
        });
    }
    Ok(refs)
}
