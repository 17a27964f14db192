//! Caption-conditioned Markov token corpus (`KDTC` format) and the exact
//! conditional-KL oracle it enables.
//!
//! Each caption's first token is its class; codebook `k` of a clip is an
//! independent Markov chain over `[0, C)` with class-specific initial and
//! transition distributions. The true next-token distribution is therefore
//! known at every position.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{LanguageModel, TokenBatch};
use crate::Scalar;

pub const MAGIC: [u8; 4] = *b"KDTC";
pub const VERSION: u32 = 1;

/// Recipe for a random [`MarkovSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    pub classes: usize,
    pub caption_vocab: usize,
    /// Class token plus filler tokens.
    pub caption_len: usize,
    pub codebooks: usize,
    pub cardinality: usize,
    pub clip_len: usize,
    /// Dirichlet concentration of every row; small values give peaked rows.
    pub concentration: f64,
    /// Partition the code range between classes.
    #[serde(default)]
    pub disjoint_support: bool,
    pub seed: u64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            caption_vocab: 32,
            caption_len: 3,
            codebooks: 4,
            cardinality: 64,
            clip_len: 16,
            concentration: 0.1,
            disjoint_support: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub classes: usize,
    pub caption_vocab: usize,
    pub caption_len: usize,
    pub codebooks: usize,
    pub cardinality: usize,
    pub clip_len: usize,
    /// `[classes][K][C]`
    pub initial: Vec<f64>,
    /// `[classes][K][C][C]`, row = previous code.
    pub transition: Vec<f64>,
}

fn dirichlet_row(rng: &mut impl Rng, gamma: &Gamma<f64>, support: std::ops::Range<usize>, c: usize) -> Vec<f64> {
    let mut row = vec![0.0; c];
    loop {
        for v in &mut row[support.clone()] {
            *v = gamma.sample(rng);
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
            return row;
        }
    }
}

impl MarkovSpec {
    pub fn from_config(cfg: &MarkovConfig) -> Result<Self> {
        if cfg.classes == 0 || cfg.classes > cfg.caption_vocab {
            return invalid("need 1 <= classes <= caption_vocab");
        }
        if cfg.caption_len == 0 || cfg.codebooks == 0 || cfg.cardinality < 2 || cfg.clip_len == 0 {
            return invalid("caption_len, codebooks, clip_len must be positive and cardinality >= 2");
        }
        if cfg.disjoint_support && cfg.cardinality < cfg.classes {
            return invalid("disjoint support needs at least one code per class");
        }
        let gamma = Gamma::new(cfg.concentration, 1.0).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let c = cfg.cardinality;
        let (mut initial, mut transition) = (Vec::new(), Vec::new());
        for cls in 0..cfg.classes {
            let support = if cfg.disjoint_support {
                let w = c / cfg.classes;
                cls * w..(cls + 1) * w
            } else {
                0..c
            };
            for _ in 0..cfg.codebooks {
                initial.extend(dirichlet_row(&mut rng, &gamma, support.clone(), c));
                for _ in 0..c {
                    transition.extend(dirichlet_row(&mut rng, &gamma, support.clone(), c));
                }
            }
        }
        Self::new(
            cfg.classes,
            cfg.caption_vocab,
            cfg.caption_len,
            cfg.codebooks,
            cfg.cardinality,
            cfg.clip_len,
            initial,
            transition,
        )
    }

    /// Validated spec from explicit distributions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        classes: usize,
        caption_vocab: usize,
        caption_len: usize,
        codebooks: usize,
        cardinality: usize,
        clip_len: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let c = cardinality;
        if initial.len() != classes * codebooks * c || transition.len() != classes * codebooks * c * c {
            return Err(Error::ShapeMismatch {
                op: "markov spec",
                lhs: vec![initial.len(), transition.len()],
                rhs: vec![classes * codebooks * c, classes * codebooks * c * c],
            });
        }
        if c > u16::MAX as usize + 1 || caption_vocab > u16::MAX as usize + 1 {
            return invalid("codes and caption tokens must fit in u16");
        }
        for (i, row) in initial.chunks(c).chain(transition.chunks(c)).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return invalid(format!("row {i} is not stochastic (sum {s})"));
            }
        }
        Ok(Self {
            classes,
            caption_vocab,
            caption_len,
            codebooks,
            cardinality,
            clip_len,
            initial,
            transition,
        })
    }

    /// True distribution of code `(k, t)` given the previous code of the
    /// same codebook (`None` at `t = 0`).
    pub fn conditional(&self, class: usize, k: usize, prev: Option<usize>) -> &[f64] {
        let c = self.cardinality;
        match prev {
            None => {
                let o = (class * self.codebooks + k) * c;
                &self.initial[o..o + c]
            }
            Some(p) => {
                let o = ((class * self.codebooks + k) * c + p) * c;
                &self.transition[o..o + c]
            }
        }
    }

    /// Class encoded by a caption (its first token).
    pub fn class_of(&self, caption: &[usize]) -> Result<usize> {
        match caption.first() {
            Some(&cls) if cls < self.classes => Ok(cls),
            _ => invalid(format!("caption {caption:?} does not start with a class token")),
        }
    }

    /// Clip `index` of the stream seeded by `seed`.
    pub fn sample_clip(&self, seed: u64, index: u64) -> TokenClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let class = rng.random_range(0..self.classes);
        let mut caption = vec![class];
        for _ in 1..self.caption_len {
            caption.push(if self.caption_vocab > self.classes {
                rng.random_range(self.classes..self.caption_vocab)
            } else {
                class
            });
        }
        let t = self.clip_len;
        let mut codes = vec![0usize; self.codebooks * t];
        for k in 0..self.codebooks {
            let mut prev = None;
            for ti in 0..t {
                let code = draw(&mut rng, self.conditional(class, k, prev));
                codes[k * t + ti] = code;
                prev = Some(code);
            }
        }
        TokenClip {
            caption,
            time: t,
            codes,
        }
    }
}

fn draw(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: last code with nonzero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenClip {
    pub caption: Vec<usize>,
    pub time: usize,
    /// `[K, T]` row-major.
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCorpus {
    pub codebooks: usize,
    pub cardinality: usize,
    pub clips: Vec<TokenClip>,
}

pub fn gen_token_corpus(spec: &MarkovSpec, n_clips: usize, seed: u64) -> TokenCorpus {
    TokenCorpus {
        codebooks: spec.codebooks,
        cardinality: spec.cardinality,
        clips: (0..n_clips as u64).map(|i| spec.sample_clip(seed, i)).collect(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl TokenCorpus {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.codebooks as u32).to_le_bytes());
        out.extend_from_slice(&(self.cardinality as u32).to_le_bytes());
        out.extend_from_slice(&(self.clips.len() as u32).to_le_bytes());
        for clip in &self.clips {
            if clip.caption.len() > u16::MAX as usize || clip.codes.len() != self.codebooks * clip.time {
                return invalid("clip does not fit the corpus format");
            }
            out.extend_from_slice(&(clip.caption.len() as u16).to_le_bytes());
            for &tok in &clip.caption {
                out.extend_from_slice(&u16::try_from(tok).map_err(|_| Error::Invalid("caption token exceeds u16".into()))?.to_le_bytes());
            }
            out.extend_from_slice(&(clip.time as u32).to_le_bytes());
            for &code in &clip.codes {
                if code >= self.cardinality {
                    return Err(Error::OutOfRange {
                        what: "corpus code",
                        index: code,
                        size: self.cardinality,
                    });
                }
                out.extend_from_slice(&(code as u16).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4, "magic").map_err(|_| Error::BadMagic {
            expected: MAGIC,
            found: buf.to_vec(),
        })?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic.to_vec(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let codebooks = r.u32("codebooks")? as usize;
        let cardinality = r.u32("cardinality")? as usize;
        let n = r.u32("clip count")? as usize;
        let mut clips = Vec::new();
        for _ in 0..n {
            let len = r.u16("caption length")? as usize;
            let caption = (0..len).map(|_| r.u16("caption").map(usize::from)).collect::<Result<_>>()?;
            let time = r.u32("clip length")? as usize;
            let codes: Vec<usize> = (0..codebooks * time).map(|_| r.u16("codes").map(usize::from)).collect::<Result<_>>()?;
            if let Some(&bad) = codes.iter().find(|&&c| c >= cardinality) {
                return Err(Error::OutOfRange {
                    what: "corpus code",
                    index: bad,
                    size: cardinality,
                });
            }
            clips.push(TokenClip { caption, time, codes });
        }
        if r.pos != buf.len() {
            return invalid(format!("{} trailing bytes after token corpus", buf.len() - r.pos));
        }
        Ok(Self {
            codebooks,
            cardinality,
            clips,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes()?)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Captions and codes of the clips at `idx` (equal lengths required).
    pub fn batch(&self, idx: &[usize]) -> Result<(Vec<Vec<usize>>, TokenBatch)> {
        batch_clips(idx.iter().map(|&i| &self.clips[i]), self.codebooks, self.cardinality)
    }
}

fn batch_clips<'a>(
    clips: impl Iterator<Item = &'a TokenClip>,
    codebooks: usize,
    cardinality: usize,
) -> Result<(Vec<Vec<usize>>, TokenBatch)> {
    let mut captions = Vec::new();
    let mut codes = Vec::new();
    let mut time = None;
    for c in clips {
        if *time.get_or_insert(c.time) != c.time {
            return invalid("clips in a batch must share a length");
        }
        captions.push(c.caption.clone());
        codes.extend_from_slice(&c.codes);
    }
    let b = captions.len();
    Ok((captions, TokenBatch::new(codes, b, codebooks, time.unwrap_or(0), cardinality)?))
}

/// Anything that produces next-code distributions `[B, K, T, C]` (flattened)
/// for every position of a batch.
pub trait ConditionalModel {
    fn conditionals(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<Vec<f64>>;
}

impl<S: Scalar> ConditionalModel for LanguageModel<S> {
    fn conditionals(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<Vec<f64>> {
        self.posteriors(captions, tokens)
    }
}

/// The spec's own conditionals.
pub struct LookupModel<'a>(pub &'a MarkovSpec);

impl ConditionalModel for LookupModel<'_> {
    fn conditionals(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<Vec<f64>> {
        let spec = self.0;
        let mut out = Vec::with_capacity(tokens.codes.len() * tokens.cardinality);
        for (b, cap) in captions.iter().enumerate() {
            let cls = spec.class_of(cap)?;
            for k in 0..tokens.codebooks {
                for t in 0..tokens.time {
                    let prev = (t > 0).then(|| tokens.at(b, k, t - 1));
                    out.extend_from_slice(spec.conditional(cls, k, prev));
                }
            }
        }
        Ok(out)
    }
}

/// Uniform over `C` codes everywhere.
pub struct UniformModel(pub usize);

impl ConditionalModel for UniformModel {
    fn conditionals(&self, _: &[Vec<usize>], tokens: &TokenBatch) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.0 as f64; tokens.codes.len() * self.0])
    }
}

/// Mean over `n_contexts` fresh clips, their codebooks and time steps of
/// `KL(true ‖ model)` at every position (probabilities floored at 1e-12).
pub fn exact_conditional_kl(model: &impl ConditionalModel, spec: &MarkovSpec, n_contexts: usize, seed: u64) -> Result<f64> {
    if n_contexts == 0 {
        return invalid("need at least one context");
    }
    let clips: Vec<TokenClip> = (0..n_contexts as u64).map(|i| spec.sample_clip(seed, i)).collect();
    let c = spec.cardinality;
    let lookup = LookupModel(spec);
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in clips.chunks(32) {
        let (captions, tokens) = batch_clips(chunk.iter(), spec.codebooks, c)?;
        let q = model.conditionals(&captions, &tokens)?;
        let p = lookup.conditionals(&captions, &tokens)?;
        if q.len() != p.len() {
            return Err(Error::ShapeMismatch {
                op: "exact_conditional_kl",
                lhs: vec![p.len()],
                rhs: vec![q.len()],
            });
        }
        for (pr, qr) in p.chunks(c).zip(q.chunks(c)) {
            total += pr
                .iter()
                .zip(qr)
                .filter(|(&a, _)| a > 0.0)
                .map(|(&a, &b)| a * (a.max(1e-12).ln() - b.max(1e-12).ln()))
                .sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count as f64)
}
