mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fnt_core::classlm::{ClassDefinitions, ClassModel};
use fnt_core::decoder::{format_nbest, DecoderConfig};
use fnt_core::eval::{
    bench_topr_interleaved, decode_corpus, decode_slowdown, random_histories, sweep, synthetic_ngram, EvalReport,
    SweepCorpus, ALPHA_GRID,
};
use fnt_core::fusion::{FusionConfig, FusionMethod};
use fnt_core::lm::{Vocabulary, WORD_BOUNDARY};
use fnt_core::ngram::{save_arpa, train_kneser_ney};
use fnt_core::sim::synthesize_scenario;

use config::{Config, Overrides, TestSet};

#[derive(Parser)]
#[command(
    name = "fnt",
    version,
    about = "Transducer beam search with external language model fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Kneser-Ney n-gram model and write it as ARPA.
    TrainNgram {
        #[arg(long)]
        vocab: PathBuf,
        /// One sentence of space-separated word-pieces per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the n-gram part of a class LM from tagged text.
    BuildClm {
        #[arg(long)]
        vocab: PathBuf,
        /// Tagged sentences, tags written as ⟨NAME⟩.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Acoustic confusion temperature.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Decode a scenario's score files and write n-best lists.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hypotheses against references.
    ///
    /// With --hyps, scores the given n-best files. Otherwise decodes the
    /// scenario without fusion and with the configured fusion and compares.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        hyps: Option<PathBuf>,
        #[arg(long, requires = "hyps")]
        baseline_hyps: Option<PathBuf>,
    },
    /// WERR over the interpolation weight grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "sf,li,lli,cli,clm")]
        methods: Vec<FusionMethod>,
        /// Extra scenario directories decoded with the same models.
        #[arg(long)]
        corpus: Vec<PathBuf>,
    },
    /// top_r latency on two model sizes and decode slowdown of the configured fusion.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainNgram {
            vocab,
            corpus,
            order,
            out,
        } => {
            let vocab = Arc::new(Vocabulary::load(&vocab)?);
            let sentences = read_corpus(&corpus, |t| vocab.id(t).map_err(Into::into))?;
            let model = train_kneser_ney(&sentences, vocab.clone(), order)?;
            save_arpa(&model, &out)?;
            eprintln!("{}: order {order}, {} n-grams", out.display(), model.num_ngrams());
        }
        Command::BuildClm {
            vocab,
            corpus,
            classes,
            order,
            out,
        } => {
            let vocab = Arc::new(Vocabulary::load(&vocab)?);
            let defs = ClassDefinitions::load(&classes)?;
            let sentences = read_corpus(&corpus, |t| Ok(t.to_string()))?;
            let clm = ClassModel::train(vocab, &sentences, &defs, order)?;
            save_arpa(clm.ngram().model(), &out)?;
            eprintln!(
                "{}: {} classes, {} n-grams",
                out.display(),
                clm.classes().len(),
                clm.ngram().model().num_ngrams()
            );
        }
        Command::Synth { config, out, seed, tau } => {
            let mut spec = Config::load(config.as_deref())?.scenario;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = tau {
                spec.noise.tau = t;
            }
            let scenario = synthesize_scenario(&spec)?;
            scenario.save(&out)?;
            eprintln!(
                "{}: {} tokens, {} test utterances, {} classes",
                out.display(),
                scenario.vocab.len(),
                scenario.test.len(),
                scenario.classes.len()
            );
        }
        Command::Decode { config, overrides, out } => {
            let (cfg, vocab, test) = setup(&config, &overrides)?;
            let decoded = decode_corpus(
                &test.encoders(),
                &cfg.scorer(&vocab)?,
                &cfg.decoder,
                &cfg.external(&vocab)?,
                true,
            )?;
            let mut text = String::new();
            for (r, d) in test.refs.iter().zip(&decoded) {
                text.push_str(&format_nbest(&r.id, &d.output.nbest, &vocab));
            }
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Command::Eval {
            config,
            overrides,
            hyps,
            baseline_hyps,
        } => {
            let (cfg, vocab, test) = setup(&config, &overrides)?;
            let (base, adapted) = match hyps {
                Some(path) => {
                    let adapted = EvalReport::from_words("hyps", &test.refs, &read_hyps(&path, &test)?, &vocab)?;
                    let base = baseline_hyps
                        .map(|p| -> Result<_> {
                            Ok(EvalReport::from_words(
                                "baseline",
                                &test.refs,
                                &read_hyps(&p, &test)?,
                                &vocab,
                            )?)
                        })
                        .transpose()?;
                    (base, adapted)
                }
                None => {
                    let scorer = cfg.scorer(&vocab)?;
                    let lms = cfg.external(&vocab)?;
                    let plain = plain(&cfg.decoder);
                    let d = decode_corpus(&test.encoders(), &scorer, &plain, &lms, true)?;
                    let base = EvalReport::new("baseline", &test.refs, &d, &vocab)?;
                    let d = decode_corpus(&test.encoders(), &scorer, &cfg.decoder, &lms, true)?;
                    (
                        Some(base),
                        EvalReport::new(&describe(&cfg.decoder.fusion), &test.refs, &d, &vocab)?,
                    )
                }
            };
            let adapted = match &base {
                Some(b) => adapted.with_baseline(b),
                None => adapted,
            };
            for r in base.iter().chain([&adapted]) {
                println!("{r}\n");
            }
            for r in base.iter().chain([&adapted]) {
                println!("{}", r.machine_line());
            }
        }
        Command::Sweep {
            config,
            overrides,
            methods,
            corpus,
        } => {
            let (cfg, vocab, test) = setup(&config, &overrides)?;
            let scorer = cfg.scorer(&vocab)?;
            let lms = cfg.external(&vocab)?;
            let extra: Vec<(String, TestSet)> = corpus
                .iter()
                .map(|d| Ok((d.display().to_string(), TestSet::load(d, &vocab)?)))
                .collect::<Result<_>>()?;
            let main_name = cfg
                .data
                .scenario
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            let mut corpora = vec![SweepCorpus {
                name: main_name,
                encoders: test.encoders(),
                refs: test.refs.clone(),
                vocab: vocab.clone(),
                scorer: scorer.clone(),
                lms: lms.clone(),
            }];
            for (name, t) in &extra {
                corpora.push(SweepCorpus {
                    name: name.clone(),
                    encoders: t.encoders(),
                    refs: t.refs.clone(),
                    vocab: vocab.clone(),
                    scorer: scorer.clone(),
                    lms: lms.clone(),
                });
            }
            let table = sweep(&corpora, &methods, &ALPHA_GRID, &cfg.decoder)?;
            println!("{table}\n");
            for line in table.machine_lines() {
                println!("{line}");
            }
        }
        Command::Bench { config, overrides } => {
            let mut cfg = Config::load(config.as_deref())?;
            cfg.apply(&overrides)?;
            bench(&cfg)?;
        }
    }
    Ok(())
}

fn setup(config: &Path, overrides: &Overrides) -> Result<(Config, Arc<Vocabulary>, TestSet)> {
    let mut cfg = Config::load(Some(config))?;
    cfg.apply(overrides)?;
    let vocab = cfg.vocab()?;
    let dir = cfg.data.scenario.clone().context("data.scenario is not set")?;
    let test = TestSet::load(&dir, &vocab)?;
    Ok((cfg, vocab, test))
}

fn plain(d: &DecoderConfig) -> DecoderConfig {
    DecoderConfig {
        fusion: FusionConfig {
            rank_r: d.fusion.rank_r,
            ..FusionConfig::default()
        },
        ..*d
    }
}

fn describe(f: &FusionConfig) -> String {
    match f.second {
        Some(s) => format!("{}@{}+{}@{}", f.method, f.alpha, s.method, s.alpha),
        None => format!("{}@{}", f.method, f.alpha),
    }
}

fn read_corpus<T>(path: &Path, token: impl Fn(&str) -> Result<T>) -> Result<Vec<Vec<T>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(&token)
                .collect::<Result<Vec<T>>>()
                .with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

/// Rank-1 hypotheses of an n-best file in reference order; missing ones are empty.
fn read_hyps(path: &Path, test: &TestSet) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut best = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() < 3 {
            bail!("{}:{}: expected utt, rank, score, text", path.display(), i + 1);
        }
        if cols[1] == "1" {
            let words = cols
                .get(3)
                .map(|t| t.split_whitespace().map(str::to_string).collect())
                .unwrap_or_default();
            best.insert(cols[0].to_string(), words);
        }
    }
    Ok(test
        .refs
        .iter()
        .map(|r| best.remove(&r.id).unwrap_or_default())
        .collect())
}

fn bench(cfg: &Config) -> Result<()> {
    let b = &cfg.bench;
    let mut tokens = vec!["<s>".to_string(), "</s>".to_string()];
    tokens.extend((0..b.vocab_size).map(|i| format!("{WORD_BOUNDARY}w{i}")));
    let vocab = Arc::new(Vocabulary::new(tokens)?);
    let seed = cfg.scenario.seed;
    let models = [b.small_tokens, b.large_tokens]
        .into_iter()
        .map(|size| synthetic_ngram(vocab.clone(), size, b.order, seed))
        .collect::<fnt_core::Result<Vec<_>>>()?;
    let histories: Vec<_> = models.iter().map(|m| random_histories(m, b.queries, seed)).collect();
    let pairs: Vec<_> = models.iter().zip(&histories).map(|(m, h)| (m, h.as_slice())).collect();
    let r = cfg.decoder.fusion.rank_r;
    for res in bench_topr_interleaved(&pairs, 1, b.repeats)? {
        println!("{res}");
    }
    let at_r = bench_topr_interleaved(&pairs, r, b.repeats)?;
    for res in &at_r {
        println!("{res}");
    }
    println!(
        "BENCH_TOPR_RATIO small_ngrams={} large_ngrams={} r={r} ratio={:.3}",
        at_r[0].ngrams,
        at_r[1].ngrams,
        at_r[1].mean_ns / at_r[0].mean_ns
    );

    if let Some(dir) = &cfg.data.scenario {
        let vocab = cfg.vocab()?;
        let test = TestSet::load(dir, &vocab)?;
        let fused = &cfg.decoder;
        if fused.fusion.first_active().is_none() && fused.fusion.clm_alpha().is_none() {
            bail!("decode benchmark needs an active fusion method");
        }
        let s = decode_slowdown(
            &test.encoders(),
            &cfg.scorer(&vocab)?,
            &plain(fused),
            fused,
            &cfg.external(&vocab)?,
            b.decode_repeats,
        )?;
        println!("{s} method={}", describe(&fused.fusion));
    }
    Ok(())
}
