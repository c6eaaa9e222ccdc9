//! Deterministic synthetic emotional-speech corpus.
//!
//! Each utterance is a sawtooth glottal source at the speaker's pitch,
//! shaped by the sentence's intonation contour and the emotion's pitch,
//! loudness and tremor, then passed through two cascaded resonators at the
//! speaker's formant frequencies (moved per syllable to mimic vowels).
//! Seeded per-repetition jitter and white noise are added last.
//!
//! Neutral is the identity modulation, so neutral speech carries the
//! speaker's unmodified timbre.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioClip, CorpusManifest, Emotion, UtteranceRecord};
use crate::error::{contract, Error, Result};
use crate::math::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub speaker_count: u32,
    pub emotions: Vec<Emotion>,
    pub sentence_count: u32,
    pub repetition_count: u32,
    pub sample_rate: u32,
    pub utterance_seconds: f64,
    /// Scales how far speakers' pitch and formants spread from a common voice.
    pub speaker_separation: f64,
    /// Scales how strongly each emotion modulates a voice.
    pub emotion_separation: f64,
    /// Standard deviation of additive white noise, relative to full scale.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            speaker_count: 6,
            emotions: Emotion::ALL.to_vec(),
            sentence_count: 8,
            repetition_count: 9,
            sample_rate: 16_000,
            utterance_seconds: 1.0,
            speaker_separation: 1.0,
            emotion_separation: 1.0,
            noise_level: 0.01,
            seed: 2019,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speaker_count == 0 || self.sentence_count == 0 || self.repetition_count == 0 {
            return Err(contract!("speaker, sentence and repetition counts must be at least 1"));
        }
        if self.emotions.is_empty() || !self.emotions.contains(&Emotion::Neutral) {
            return Err(contract!("the emotion set must be nonempty and include neutral"));
        }
        let mut sorted = self.emotions.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.emotions.len() {
            return Err(contract!("duplicate emotion in the emotion set"));
        }
        if self.sample_rate < 4_000 {
            return Err(contract!("sample rate {} Hz is too low for the voice model", self.sample_rate));
        }
        if !(self.utterance_seconds > 0.0 && self.utterance_seconds.is_finite()) {
            return Err(contract!("utterance length must be positive"));
        }
        for (name, v) in [
            ("speaker_separation", self.speaker_separation),
            ("emotion_separation", self.emotion_separation),
            ("noise_level", self.noise_level),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(contract!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        Ok(())
    }

    /// Emotions in canonical order.
    pub fn emotion_order(&self) -> Vec<Emotion> {
        let mut e = self.emotions.clone();
        e.sort();
        e
    }

    pub fn utterance_count(&self) -> usize {
        (self.speaker_count * self.sentence_count * self.repetition_count) as usize * self.emotions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionModulation {
    pub pitch_multiplier: f64,
    pub amplitude_multiplier: f64,
    pub tremor_rate_hz: f64,
    /// Relative depth of the pitch tremor; loudness tremor is half as deep.
    pub tremor_depth: f64,
}

impl EmotionModulation {
    pub const IDENTITY: EmotionModulation =
        EmotionModulation { pitch_multiplier: 1.0, amplitude_multiplier: 1.0, tremor_rate_hz: 0.0, tremor_depth: 0.0 };
}

/// Reference expression of each emotion at separation 1.0. Angry gets the
/// strongest loudness and tremor.
fn reference_modulation(e: Emotion) -> EmotionModulation {
    let m = |pitch, amp, rate, depth| EmotionModulation {
        pitch_multiplier: pitch,
        amplitude_multiplier: amp,
        tremor_rate_hz: rate,
        tremor_depth: depth,
    };
    match e {
        Emotion::Neutral => EmotionModulation::IDENTITY,
        Emotion::Happy => m(1.25, 1.2, 5.0, 0.05),
        Emotion::Sad => m(0.75, 0.8, 3.0, 0.05),
        Emotion::Disgust => m(0.8, 0.9, 4.0, 0.08),
        Emotion::Angry => m(1.3, 1.6, 7.0, 0.09),
        Emotion::Fear => m(1.4, 0.85, 9.0, 0.07),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceProfile {
    pub speaker_id: String,
    pub base_pitch_hz: f64,
    pub resonances: [Resonance; 2],
    pub modulations: BTreeMap<Emotion, EmotionModulation>,
}

pub fn speaker_id(index: u32) -> String {
    alloc::format!("s{:02}", index + 1)
}

fn symmetric(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-1.0..=1.0)
}

/// One profile per speaker, derived from the spec seed.
pub fn voice_profiles(spec: &SynthSpec) -> Result<Vec<VoiceProfile>> {
    spec.validate()?;
    let nyquist = spec.sample_rate as f64 / 2.0;
    let (s, e) = (spec.speaker_separation, spec.emotion_separation);
    (0..spec.speaker_count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x5600 + i as u64));
            let base_pitch_hz = 160.0 * libm::exp(0.5 * s * symmetric(&mut rng));
            let f1 = 600.0 * libm::exp(0.35 * s * symmetric(&mut rng));
            let b1 = 90.0 * libm::exp(0.4 * s * symmetric(&mut rng));
            let f2 = 1_700.0 * libm::exp(0.3 * s * symmetric(&mut rng));
            let b2 = 150.0 * libm::exp(0.4 * s * symmetric(&mut rng));
            let modulations = spec
                .emotion_order()
                .into_iter()
                .map(|emo| {
                    let r = reference_modulation(emo);
                    // Speakers express the same emotion with their own strength and tempo.
                    let strength = [(); 3].map(|_| 1.0 + 0.4 * symmetric(&mut rng));
                    let tempo = 1.0 + 0.25 * symmetric(&mut rng);
                    let m = if emo == Emotion::Neutral || e == 0.0 {
                        EmotionModulation::IDENTITY
                    } else {
                        EmotionModulation {
                            pitch_multiplier: libm::pow(r.pitch_multiplier, e * strength[0]),
                            amplitude_multiplier: libm::pow(r.amplitude_multiplier, e * strength[1]),
                            tremor_rate_hz: r.tremor_rate_hz * tempo,
                            tremor_depth: r.tremor_depth * e * strength[2],
                        }
                    };
                    (emo, m)
                })
                .collect();
            let profile = VoiceProfile {
                speaker_id: speaker_id(i),
                base_pitch_hz,
                resonances: [
                    Resonance { center_hz: f1, bandwidth_hz: b1 },
                    Resonance { center_hz: f2, bandwidth_hz: b2 },
                ],
                modulations,
            };
            let in_band = |f: f64| f > 50.0 && f < nyquist;
            if !(in_band(profile.base_pitch_hz) && profile.resonances.iter().all(|r| in_band(r.center_hz))) {
                return Err(contract!("voice of {} falls outside (50 Hz, Nyquist)", profile.speaker_id));
            }
            Ok(profile)
        })
        .collect()
}

/// Relative path of an utterance inside a generated corpus.
pub fn utterance_path(speaker: &str, emotion: Emotion, sentence: u32, repetition: u32) -> String {
    alloc::format!("{speaker}/{emotion}/sent{sentence:02}_rep{repetition:02}.wav")
}

/// The manifest a corpus generated from `spec` will have, in generation order.
pub fn corpus_manifest(spec: &SynthSpec) -> Result<CorpusManifest> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.utterance_count());
    for i in 0..spec.speaker_count {
        let speaker = speaker_id(i);
        for emotion in spec.emotion_order() {
            for sentence_id in 1..=spec.sentence_count {
                for repetition in 1..=spec.repetition_count {
                    records.push(UtteranceRecord {
                        path: utterance_path(&speaker, emotion, sentence_id, repetition),
                        speaker_id: speaker.clone(),
                        emotion,
                        sentence_id,
                        repetition,
                    });
                }
            }
        }
    }
    CorpusManifest::with_counts(records, spec.sentence_count, spec.repetition_count)
}

/// (F1, F2) multipliers of the five vowel shapes.
const VOWELS: [(f64, f64); 5] = [(1.3, 0.75), (0.8, 1.25), (0.5, 1.45), (0.95, 0.6), (0.55, 0.5)];

struct SentenceShape {
    vowels: Vec<usize>,
    /// Pitch change over the utterance, as a fraction of the starting pitch.
    declination: f64,
}

fn sentence_shape(sentence: u32) -> SentenceShape {
    let s = sentence as usize;
    let syllables = 3 + (s.saturating_sub(1) * 5) % 4;
    let vowels = (0..syllables).map(|k| (s * 3 + k * 7 + s * k) % VOWELS.len()).collect();
    let declination = -0.2 + 0.1 * ((s * 13) % 5) as f64;
    SentenceShape { vowels, declination }
}

/// Two-pole resonator `y[n] = g·x[n] + a1·y[n-1] + a2·y[n-2]`.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, center: f64, bandwidth: f64, sample_rate: f64) -> f64 {
        let r = libm::exp(-PI * bandwidth / sample_rate);
        let theta = 2.0 * PI * center / sample_rate;
        let a1 = 2.0 * r * libm::cos(theta);
        let a2 = -r * r;
        let gain = 1.0 - r;
        let y = gain * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Renders one utterance.
pub fn synthesize_utterance(
    spec: &SynthSpec,
    profile: &VoiceProfile,
    emotion: Emotion,
    sentence: u32,
    repetition: u32,
) -> Result<AudioClip> {
    let modulation =
        *profile.modulations.get(&emotion).ok_or_else(|| contract!("emotion {emotion} is not part of this corpus"))?;
    let speaker_index = profile.speaker_id.get(1..).and_then(|n| n.parse::<u64>().ok()).unwrap_or(0);
    let stream = ((speaker_index * 16 + emotion.index() as u64) * 1_024 + sentence as u64) * 1_024 + repetition as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, stream));

    let sr = spec.sample_rate as f64;
    let n = libm::round(spec.utterance_seconds * sr) as usize;
    let shape = sentence_shape(sentence);
    let pitch_jitter = 1.0 + 0.03 * symmetric(&mut rng);
    let formant_jitter = 1.0 + 0.02 * symmetric(&mut rng);
    let timing_shift = 0.02 * symmetric(&mut rng);
    let tremor_phase = 2.0 * PI * rng.gen::<f64>();

    let syllables = shape.vowels.len() as f64;
    let (lead, body) = (0.1 + timing_shift, 0.8);
    let mut phase = 0.0;
    let mut lowpass = 0.0;
    let mut res = [Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let u = i as f64 / n as f64;
        let tremor = libm::sin(2.0 * PI * modulation.tremor_rate_hz * t + tremor_phase);
        let contour = 1.0 + shape.declination * u;
        let f0 = profile.base_pitch_hz
            * modulation.pitch_multiplier
            * pitch_jitter
            * contour
            * (1.0 + modulation.tremor_depth * tremor);
        phase += f0 / sr;
        phase -= libm::floor(phase);
        // Sawtooth source through a one-pole low-pass for a falling glottal spectrum.
        let source = 2.0 * phase - 1.0;
        lowpass = 0.7 * lowpass + 0.3 * source;

        let pos = (u - lead) / body * syllables;
        let (vowel, gate) = if pos < 0.0 || pos >= syllables {
            (shape.vowels[0], 0.0)
        } else {
            let k = libm::floor(pos) as usize;
            let frac = pos - k as f64;
            let gate = if frac < 0.8 { libm::sin(PI * frac / 0.8) } else { 0.0 };
            (shape.vowels[k.min(shape.vowels.len() - 1)], gate)
        };
        let (m1, m2) = VOWELS[vowel];
        let f1 = profile.resonances[0].center_hz * m1 * formant_jitter;
        let f2 = profile.resonances[1].center_hz * m2 * formant_jitter;
        let y = res[0].step(lowpass, f1.min(0.45 * sr), profile.resonances[0].bandwidth_hz, sr);
        let y = res[1].step(y, f2.min(0.45 * sr), profile.resonances[1].bandwidth_hz, sr);
        let loudness = gate * (1.0 + 0.5 * modulation.tremor_depth * tremor);
        out.push(y * loudness);
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = (0.4 * modulation.amplitude_multiplier).min(0.9);
    let scale = if peak > 0.0 { target / peak } else { 0.0 };
    for v in &mut out {
        *v = (*v * scale + spec.noise_level * normal(&mut rng)).clamp(-1.0, 1.0);
    }
    AudioClip::new(out, spec.sample_rate)
}

/// Every utterance of the corpus, in manifest order, as (record, clip) pairs.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Vec<(UtteranceRecord, AudioClip)>> {
    let profiles = voice_profiles(spec)?;
    let manifest = corpus_manifest(spec)?;
    manifest
        .into_records()
        .into_iter()
        .map(|r| {
            let profile = profiles
                .iter()
                .find(|p| p.speaker_id == r.speaker_id)
                .ok_or_else(|| Error::Validation(alloc::format!("no voice for {}", r.speaker_id)))?;
            let clip = synthesize_utterance(spec, profile, r.emotion, r.sentence_id, r.repetition)?;
            Ok((r, clip))
        })
        .collect()
}
