//! Fusion of external LM scores with the predictor stream.
//!
//! [`shallow_fuse`] works on joint scores. The interpolation operators work on
//! predictor scores before the join. An interpolation weight of zero returns
//! the input unchanged bit for bit.

use serde::{Deserialize, Serialize};

use crate::classlm::{Transition, TransitionSets};
use crate::lm::{log_add, weighted, ScoreVector, TokenId};
use crate::ngram::SparseLmQueryResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    #[default]
    None,
    Sf,
    Li,
    Lli,
    Cli,
    Clm,
}

impl FusionMethod {
    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::None => "none",
            FusionMethod::Sf => "sf",
            FusionMethod::Li => "li",
            FusionMethod::Lli => "lli",
            FusionMethod::Cli => "cli",
            FusionMethod::Clm => "clm",
        }
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "").as_str() {
            "none" => FusionMethod::None,
            "sf" => FusionMethod::Sf,
            "li" => FusionMethod::Li,
            "lli" => FusionMethod::Lli,
            "cli" => FusionMethod::Cli,
            "clm" => FusionMethod::Clm,
            _ => return Err(Error::Config(format!("unknown fusion method {s:?}"))),
        })
    }
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Class LM stage applied after the first stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondStage {
    pub method: FusionMethod,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub alpha: f64,
    /// n-gram rank gate for C-LI and the CLM word block.
    pub rank_r: usize,
    pub second: Option<SecondStage>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            method: FusionMethod::None,
            alpha: 0.0,
            rank_r: crate::ngram::DEFAULT_RANK_R,
            second: None,
        }
    }
}

impl FusionConfig {
    pub fn new(method: FusionMethod, alpha: f64) -> Self {
        FusionConfig {
            method,
            alpha,
            ..Default::default()
        }
    }

    pub fn with_second(mut self, method: FusionMethod, alpha: f64) -> Self {
        self.second = Some(SecondStage { method, alpha });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_alpha = |a: f64| {
            if (0.0..=1.0).contains(&a) {
                Ok(())
            } else {
                Err(Error::Config(format!("interpolation weight {a} outside [0, 1]")))
            }
        };
        check_alpha(self.alpha)?;
        if matches!(self.method, FusionMethod::Cli | FusionMethod::Clm) && self.rank_r == 0 {
            return Err(Error::Config("rank limit r must be at least 1".into()));
        }
        if let Some(second) = self.second {
            check_alpha(second.alpha)?;
            if second.method != FusionMethod::Clm {
                return Err(Error::Config("only a class LM can be the second stage".into()));
            }
            if !matches!(self.method, FusionMethod::Li | FusionMethod::Lli | FusionMethod::Cli) {
                return Err(Error::Config(format!("a class LM stage cannot follow {}", self.method)));
            }
            if self.rank_r == 0 {
                return Err(Error::Config("rank limit r must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// First stage, unless it is absent or has zero weight.
    pub fn first_active(&self) -> Option<FusionMethod> {
        (self.method != FusionMethod::None && self.alpha > 0.0).then_some(self.method)
    }

    /// Weight of the class LM stage, from either position, if active.
    pub fn clm_alpha(&self) -> Option<f64> {
        match (self.method, self.second) {
            (FusionMethod::Clm, _) if self.alpha > 0.0 => Some(self.alpha),
            (_, Some(s)) if s.method == FusionMethod::Clm && s.alpha > 0.0 => Some(s.alpha),
            _ => None,
        }
    }
}

/// `log(α·e^lp + (1−α)·e^z)`.
#[inline]
pub fn li(z: f64, lp: f64, alpha: f64) -> f64 {
    Mix::new(alpha).li(z, lp)
}

/// [`li`] with the weight logarithms computed once.
#[derive(Clone, Copy)]
struct Mix {
    alpha: f64,
    la: f64,
    lb: f64,
}

impl Mix {
    fn new(alpha: f64) -> Self {
        Mix {
            alpha,
            la: alpha.ln(),
            lb: (1.0 - alpha).ln(),
        }
    }

    #[inline]
    fn li(&self, z: f64, lp: f64) -> f64 {
        if self.alpha == 0.0 {
            z
        } else if self.alpha == 1.0 {
            lp
        } else {
            log_add(self.la + lp, self.lb + z)
        }
    }
}

/// `α·lp + (1−α)·z`, with `0·(−∞) = 0`.
#[inline]
pub fn lli(z: f64, lp: f64, alpha: f64) -> f64 {
    weighted(alpha, lp) + weighted(1.0 - alpha, z)
}

fn zip_full(a: &ScoreVector, b: &ScoreVector, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    a.same_full_support(b)?;
    Ok(a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect())
}

/// Shallow fusion of joint scores `z` with LM log-probabilities.
pub fn shallow_fuse(z: &ScoreVector, logp: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    Ok(ScoreVector::full_unchecked(
        zip_full(z, logp, |a, b| lli(a, b, alpha))?,
        false,
    ))
}

/// Linear interpolation in the probability domain; stays normalized.
pub fn linear_interp(z: &ScoreVector, logp: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    let mix = Mix::new(alpha);
    let out = zip_full(z, logp, |a, b| mix.li(a, b))?;
    Ok(ScoreVector::full_unchecked(
        out,
        z.is_normalized() && logp.is_normalized(),
    ))
}

/// Log-linear interpolation of predictor scores.
pub fn loglinear_interp(z: &ScoreVector, logp: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    Ok(ScoreVector::full_unchecked(
        zip_full(z, logp, |a, b| lli(a, b, alpha))?,
        false,
    ))
}

/// Linear interpolation restricted to the words in `sparse`; other words keep `z`.
pub fn conditional_linear_interp(z: &ScoreVector, sparse: &SparseLmQueryResult, alpha: f64) -> Result<ScoreVector> {
    gated_interp(z, sparse.entries.iter().map(|e| (e.word, e.log_prob)), alpha)
}

/// [`conditional_linear_interp`] for a sparse score vector such as
/// [`ExternalLm::top_r`](crate::lm::ExternalLm::top_r) output.
pub fn conditional_linear_interp_scores(z: &ScoreVector, sparse: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    if sparse.is_full() {
        return Err(Error::SupportMismatch("expected sparse support".into()));
    }
    gated_interp(z, sparse.iter(), alpha)
}

fn gated_interp(z: &ScoreVector, entries: impl Iterator<Item = (TokenId, f64)>, alpha: f64) -> Result<ScoreVector> {
    if !z.is_full() {
        return Err(Error::SupportMismatch("expected full support".into()));
    }
    let mix = Mix::new(alpha);
    let mut out = z.values().to_vec();
    let mut seen = vec![false; out.len()];
    for (word, lp) in entries {
        let w = word as usize;
        if w >= out.len() {
            return Err(Error::TokenOutOfRange {
                id: word,
                size: out.len(),
            });
        }
        if std::mem::replace(&mut seen[w], true) {
            return Err(Error::InvalidArgument(format!("word {word} listed twice")));
        }
        out[w] = mix.li(out[w], lp);
    }
    Ok(ScoreVector::full_unchecked(out, alpha == 0.0 && z.is_normalized()))
}

/// One channel of the augmented predictor tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedEntry {
    pub transition: Transition,
    pub z_u: f64,
}

/// Class LM interpolation of predictor scores `z_u` over `S¹ ∥ S² ∥ S³`.
///
/// The CAT1 block covers every word and applies C-LI gated by `ranked`, the
/// rank-limited n-gram result at the exit history (tags are skipped). CAT2
/// entries are fully interpolated. CAT3 entries keep the class probability.
pub fn clm_interp(
    z_u: &ScoreVector,
    sets: &TransitionSets,
    ranked: &SparseLmQueryResult,
    alpha: f64,
) -> Result<Vec<AugmentedEntry>> {
    if !z_u.is_full() {
        return Err(Error::SupportMismatch("expected full support".into()));
    }
    let mix = Mix::new(alpha);
    let z = z_u.values();
    let mut out = Vec::with_capacity(z.len() + sets.cat2.len() + sets.cat3.len());
    if let Some(dist) = sets.ngram_dist() {
        if dist.len() < z.len() {
            return Err(Error::SupportMismatch(format!(
                "class LM covers {} words, predictor {}",
                dist.len(),
                z.len()
            )));
        }
        let start = out.len();
        out.extend(z.iter().enumerate().map(|(w, &zw)| AugmentedEntry {
            transition: Transition {
                category: crate::classlm::Category::Cat1,
                word: w as TokenId,
                log_prob: sets.exit_log_prob + dist[w],
            },
            z_u: zw,
        }));
        for e in ranked.entries.iter().filter(|e| (e.word as usize) < z.len()) {
            let entry = &mut out[start + e.word as usize];
            entry.z_u = mix.li(entry.z_u, sets.exit_log_prob + e.log_prob);
        }
    }
    for t in &sets.cat2 {
        out.push(AugmentedEntry {
            transition: *t,
            z_u: mix.li(z[t.word as usize], t.log_prob),
        });
    }
    for t in &sets.cat3 {
        out.push(AugmentedEntry {
            transition: *t,
            z_u: t.log_prob,
        });
    }
    Ok(out)
}

/// Result of a two-stage combination.
#[derive(Debug, Clone, PartialEq)]
pub enum Fused {
    Plain(ScoreVector),
    Augmented(Vec<AugmentedEntry>),
}

/// Linear interpolation with a dense LM, then class LM interpolation of the result.
pub fn three_way(
    z: &ScoreVector,
    dense: &ScoreVector,
    alpha1: f64,
    clm: Option<(&TransitionSets, &SparseLmQueryResult)>,
    alpha2: f64,
) -> Result<Fused> {
    let stage1 = linear_interp(z, dense, alpha1)?;
    match clm {
        Some((sets, ranked)) if alpha2 > 0.0 => Ok(Fused::Augmented(clm_interp(&stage1, sets, ranked, alpha2)?)),
        _ => Ok(Fused::Plain(stage1)),
    }
}
