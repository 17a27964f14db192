//! Sinusoid-mixture waveform corpus: 32-bit float mono WAV files plus a JSON
//! manifest.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::hex_sha256;
use crate::error::{invalid, Error, Result};

pub const PEAK: f32 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub sample_rate: u32,
    pub clip_len: usize,
    pub min_components: usize,
    pub max_components: usize,
    pub min_freq: f64,
    pub max_freq: f64,
    /// Standard deviation of additive Gaussian noise before normalization.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for WaveSpec {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            clip_len: 1024,
            min_components: 1,
            max_components: 3,
            min_freq: 100.0,
            max_freq: 1500.0,
            noise_floor: 0.01,
            seed: 0,
        }
    }
}

impl WaveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.clip_len == 0 {
            return invalid("sample rate and clip length must be positive");
        }
        if self.min_components == 0 || self.min_components > self.max_components {
            return invalid("need 1 <= min_components <= max_components");
        }
        if !(0.0 < self.min_freq && self.min_freq <= self.max_freq && self.max_freq < self.sample_rate as f64 / 2.0) {
            return invalid(format!(
                "frequency range [{}, {}] must lie in (0, Nyquist = {})",
                self.min_freq,
                self.max_freq,
                self.sample_rate as f64 / 2.0
            ));
        }
        if !(self.noise_floor >= 0.0) {
            return invalid("noise floor must be nonnegative");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex_sha256(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    /// Clip `index`: random sinusoids plus noise, peak-normalized to
    /// [`PEAK`] times a random gain in `[0.5, 1]`.
    pub fn sample_clip(&self, index: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let n = rng.random_range(self.min_components..=self.max_components);
        let comps: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(self.min_freq..=self.max_freq),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.2..1.0),
                )
            })
            .collect();
        let noise = Normal::new(0.0, self.noise_floor.max(f64::MIN_POSITIVE)).expect("valid std");
        let sr = self.sample_rate as f64;
        let mut x: Vec<f64> = (0..self.clip_len)
            .map(|i| {
                let t = i as f64 / sr;
                comps.iter().map(|&(f, ph, a)| a * (std::f64::consts::TAU * f * t + ph).sin()).sum::<f64>()
            })
            .collect();
        if self.noise_floor > 0.0 {
            x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        let gain = rng.random_range(0.5..=1.0) * PEAK as f64;
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        x.iter().map(|v| ((v / peak) * gain) as f32).map(|v| v.clamp(-PEAK, PEAK)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveManifest {
    pub spec: WaveSpec,
    pub spec_hash: String,
    pub clips: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveCorpus {
    pub sample_rate: u32,
    pub clips: Vec<Vec<f32>>,
    pub spec: Option<WaveSpec>,
}

pub fn gen_wave_corpus(spec: &WaveSpec, n_clips: usize) -> Result<WaveCorpus> {
    spec.validate()?;
    Ok(WaveCorpus {
        sample_rate: spec.sample_rate,
        clips: (0..n_clips as u64).map(|i| spec.sample_clip(i)).collect(),
        spec: Some(spec.clone()),
    })
}

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    }
}

/// Writes `clip_NNNNN.wav` files and `manifest.json` into `dir`.
pub fn write_wave_corpus(corpus: &WaveCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(corpus.clips.len());
    for (i, clip) in corpus.clips.iter().enumerate() {
        let name = format!("clip_{i:05}.wav");
        let mut w = hound::WavWriter::create(dir.join(&name), wav_spec(corpus.sample_rate))?;
        for &s in clip {
            w.write_sample(s)?;
        }
        w.finalize()?;
        names.push(name);
    }
    let spec = corpus.spec.clone().unwrap_or(WaveSpec {
        sample_rate: corpus.sample_rate,
        ..Default::default()
    });
    let manifest = WaveManifest {
        spec_hash: spec.hash(),
        spec,
        clips: names,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_wave_corpus(dir: impl AsRef<Path>) -> Result<WaveCorpus> {
    let dir = dir.as_ref();
    let manifest: WaveManifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    let mut clips = Vec::with_capacity(manifest.clips.len());
    for name in &manifest.clips {
        let mut r = hound::WavReader::open(dir.join(name))?;
        let s = r.spec();
        if s.channels != 1 || s.sample_format != hound::SampleFormat::Float || s.bits_per_sample != 32 {
            return invalid(format!("{name}: expected mono 32-bit float WAV"));
        }
        if s.sample_rate != manifest.spec.sample_rate {
            return Err(Error::Invalid(format!(
                "{name}: sample rate {} differs from manifest {}",
                s.sample_rate, manifest.spec.sample_rate
            )));
        }
        clips.push(r.samples::<f32>().collect::<std::result::Result<Vec<_>, _>>()?);
    }
    Ok(WaveCorpus {
        sample_rate: manifest.spec.sample_rate,
        clips,
        spec: Some(manifest.spec),
    })
}
