//! Synthetic corpora with known generating distributions, and their file
//! formats.

pub mod markov;
pub mod wave;

pub use markov::{
    exact_conditional_kl, gen_token_corpus, ConditionalModel, LookupModel, MarkovConfig, MarkovSpec, TokenClip,
    TokenCorpus, UniformModel,
};
pub use wave::{gen_wave_corpus, read_wave_corpus, write_wave_corpus, WaveCorpus, WaveSpec};
