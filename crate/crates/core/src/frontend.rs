//! MFCC front end: pre-emphasis, framing, Hamming window, power spectrum,
//! mel filterbank, log, orthonormal DCT-II, then regression deltas.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::corpus::AudioClip;
use crate::error::{contract, Error, Result};
use crate::fft::Radix2Fft;

/// Log mel energies are clamped from below at this value before taking the log.
const ENERGY_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub preemphasis_alpha: f64,
    pub frame_length_ms: f64,
    pub hop_ms: f64,
    /// FFT length; `None` picks the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub mel_filter_count: usize,
    pub static_coeff_count: usize,
    pub delta_window: usize,
    pub include_c0: bool,
    /// Subtract the per-utterance mean of each static coefficient.
    pub cepstral_mean_norm: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            preemphasis_alpha: 0.97,
            frame_length_ms: 25.0,
            hop_ms: 10.0,
            fft_size: None,
            mel_filter_count: 26,
            static_coeff_count: 16,
            delta_window: 2,
            include_c0: false,
            cepstral_mean_norm: false,
        }
    }
}

impl MfccConfig {
    /// Frame length and hop in samples at `sample_rate`.
    pub fn frame_geometry(&self, sample_rate: u32) -> (usize, usize) {
        let sr = sample_rate as f64;
        let frame = libm::round(self.frame_length_ms * sr / 1000.0) as usize;
        let hop = libm::round(self.hop_ms * sr / 1000.0) as usize;
        (frame, hop)
    }

    /// Output dimension once deltas are appended.
    pub fn feature_dim(&self) -> usize {
        2 * self.static_coeff_count
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(0.0..1.0).contains(&self.preemphasis_alpha) {
            return Err(contract!("pre-emphasis alpha {} outside [0, 1)", self.preemphasis_alpha));
        }
        if !(self.frame_length_ms > self.hop_ms && self.hop_ms > 0.0) {
            return Err(contract!("need frame length > hop > 0, got {} ms / {} ms", self.frame_length_ms, self.hop_ms));
        }
        let (frame, hop) = self.frame_geometry(sample_rate);
        if hop == 0 || frame < hop {
            return Err(contract!("frame of {frame} samples with hop {hop} at {sample_rate} Hz"));
        }
        if let Some(n) = self.fft_size {
            if !n.is_power_of_two() || n < frame {
                return Err(contract!("fft size {n} must be a power of two >= frame length {frame}"));
            }
        }
        if self.static_coeff_count == 0 {
            return Err(contract!("static coefficient count must be positive"));
        }
        let available = if self.include_c0 { self.mel_filter_count } else { self.mel_filter_count.saturating_sub(1) };
        if self.static_coeff_count > available {
            return Err(contract!(
                "{} static coefficients need more than {} mel filters",
                self.static_coeff_count,
                self.mel_filter_count
            ));
        }
        if self.delta_window == 0 {
            return Err(contract!("delta window must be at least 1"));
        }
        Ok(())
    }
}

/// A T×D matrix of observation vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(contract!("feature dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(contract!("{} values do not tile rows of width {dim}", data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(contract!("non-finite feature value at flat index {i}"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or_else(|| contract!("no rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(contract!("row {t} has width {}, expected {dim}", row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &FeatureSequence) -> Result<Self> {
        if self.dim != other.dim {
            return Err(contract!("cannot concatenate widths {} and {}", self.dim, other.dim));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { dim: self.dim, data })
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// `y[n] = x[n] - alpha * x[n-1]`, with `y[0] = x[0]`.
pub fn preemphasize(samples: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = None;
    for &x in samples {
        out.push(match prev {
            Some(p) => x - alpha * p,
            None => x,
        });
        prev = Some(x);
    }
    out
}

/// Frames of `frame_len` samples every `hop` samples; a trailing partial frame is dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Vec<&[f64]> {
    assert!(frame_len >= hop && hop >= 1, "need frame_len >= hop >= 1");
    if samples.len() < frame_len {
        return Vec::new();
    }
    let count = (samples.len() - frame_len) / hop + 1;
    (0..count).map(|k| &samples[k * hop..k * hop + frame_len]).collect()
}

pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|n| 0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / (len - 1) as f64)).collect()
}

/// Orthonormal DCT-II matrix, `size` × `size`; row `k` is basis function `k`.
pub fn dct_matrix(size: usize) -> Vec<Vec<f64>> {
    let n = size as f64;
    (0..size)
        .map(|k| {
            let scale = if k == 0 { libm::sqrt(1.0 / n) } else { libm::sqrt(2.0 / n) };
            (0..size).map(|i| scale * libm::cos(PI * k as f64 * (i as f64 + 0.5) / n)).collect()
        })
        .collect()
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// FFT bin where each triangle peaks.
    centers: Vec<usize>,
    /// First bin covered by each filter and the weights from there on.
    filters: Vec<(usize, Vec<f64>)>,
    fft_size: usize,
    sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(filter_count: usize, fft_size: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let last_bin = fft_size / 2;
        let bins: Vec<usize> = (0..filter_count + 2)
            .map(|i| {
                let hz = mel_to_hz(top * i as f64 / (filter_count + 1) as f64);
                (libm::round(hz * fft_size as f64 / sample_rate as f64) as usize).min(last_bin)
            })
            .collect();
        let filters = bins
            .windows(3)
            .map(|w| {
                let (left, center, right) = (w[0], w[1], w[2]);
                let weights = (left..=right)
                    .map(|k| match k.cmp(&center) {
                        core::cmp::Ordering::Less => (k - left) as f64 / (center - left) as f64,
                        core::cmp::Ordering::Equal => 1.0,
                        core::cmp::Ordering::Greater => (right - k) as f64 / (right - center) as f64,
                    })
                    .collect();
                (left, weights)
            })
            .collect();
        Self { centers: bins[1..=filter_count].to_vec(), filters, fft_size, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn center_bins(&self) -> &[usize] {
        &self.centers
    }

    /// Frequency of filter `j`'s peak bin.
    pub fn center_hz(&self, j: usize) -> f64 {
        self.centers[j] as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    /// Dense weights of filter `j` over bins `0..=fft_size/2`.
    pub fn dense_weights(&self, j: usize) -> Vec<f64> {
        let mut dense = vec![0.0; self.fft_size / 2 + 1];
        let (start, w) = &self.filters[j];
        dense[*start..*start + w.len()].copy_from_slice(w);
        dense
    }

    pub fn apply(&self, power: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.filters.iter().map(|(start, w)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum::<f64>()),
        );
    }
}

/// Precomputed analysis state for one (config, sample rate) pair.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    config: MfccConfig,
    sample_rate: u32,
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Radix2Fft,
    filterbank: MelFilterbank,
    dct_rows: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        let (frame_len, hop) = config.frame_geometry(sample_rate);
        let fft_size = config.fft_size.unwrap_or_else(|| frame_len.next_power_of_two());
        let filterbank = MelFilterbank::new(config.mel_filter_count, fft_size, sample_rate);
        let first = usize::from(!config.include_c0);
        let dct_rows =
            dct_matrix(config.mel_filter_count).into_iter().skip(first).take(config.static_coeff_count).collect();
        Ok(Self {
            window: hamming_window(frame_len),
            fft: Radix2Fft::new(fft_size),
            filterbank,
            dct_rows,
            frame_len,
            hop,
            sample_rate,
            config,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn fft_size(&self) -> usize {
        self.fft.size()
    }

    fn check_clip(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate() != self.sample_rate {
            return Err(contract!("extractor built for {} Hz, clip is {} Hz", self.sample_rate, clip.sample_rate()));
        }
        if clip.samples().len() < self.frame_len {
            return Err(Error::EmptyFeatures { samples: clip.samples().len(), frame_len: self.frame_len });
        }
        Ok(())
    }

    /// Per-frame log mel filterbank energies (T × filter count).
    pub fn log_mel_energies(&self, clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
        self.check_clip(clip)?;
        let emphasized = preemphasize(clip.samples(), self.config.preemphasis_alpha);
        let mut windowed = Vec::with_capacity(self.frame_len);
        let (mut re, mut im, mut power, mut mel) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        Ok(frame_signal(&emphasized, self.frame_len, self.hop)
            .into_iter()
            .map(|frame| {
                windowed.clear();
                windowed.extend(frame.iter().zip(&self.window).map(|(x, w)| x * w));
                self.fft.power_spectrum(&windowed, &mut re, &mut im, &mut power);
                self.filterbank.apply(&power, &mut mel);
                mel.iter().map(|&e| libm::log(e.max(ENERGY_FLOOR))).collect()
            })
            .collect())
    }

    /// Static cepstra only (D = static coefficient count).
    pub fn static_mfcc(&self, clip: &AudioClip) -> Result<FeatureSequence> {
        let energies = self.log_mel_energies(clip)?;
        let d = self.dct_rows.len();
        let mut data = Vec::with_capacity(energies.len() * d);
        for frame in &energies {
            data.extend(self.dct_rows.iter().map(|row| row.iter().zip(frame).map(|(a, b)| a * b).sum::<f64>()));
        }
        if self.config.cepstral_mean_norm {
            subtract_column_means(&mut data, d);
        }
        FeatureSequence::new(data, d)
    }

    /// Static cepstra with deltas appended: the observation sequence fed to every classifier.
    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureSequence> {
        append_deltas(&self.static_mfcc(clip)?, self.config.delta_window)
    }
}

fn subtract_column_means(data: &mut [f64], dim: usize) {
    let rows = data.len() / dim;
    if rows == 0 {
        return;
    }
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    for row in data.chunks_exact_mut(dim) {
        row.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
}

pub fn compute_static_mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<FeatureSequence> {
    MfccExtractor::new(config.clone(), clip.sample_rate())?.static_mfcc(clip)
}

/// Appends regression deltas over ±`window` frames, replicating edge frames.
pub fn append_deltas(features: &FeatureSequence, window: usize) -> Result<FeatureSequence> {
    if features.is_empty() {
        return Err(contract!("cannot take deltas of an empty sequence"));
    }
    if window == 0 {
        return Err(contract!("delta window must be at least 1"));
    }
    let (t_count, d) = (features.frame_count(), features.dim());
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let clamp = |t: isize| t.clamp(0, t_count as isize - 1) as usize;
    let mut data = Vec::with_capacity(t_count * 2 * d);
    for t in 0..t_count {
        data.extend_from_slice(features.frame(t));
        for k in 0..d {
            let num: f64 = (1..=window)
                .map(|n| {
                    let fwd = features.frame(clamp(t as isize + n as isize))[k];
                    let back = features.frame(clamp(t as isize - n as isize))[k];
                    n as f64 * (fwd - back)
                })
                .sum();
            data.push(num / denom);
        }
    }
    FeatureSequence::new(data, 2 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, sample_rate: u32, seconds: f64, amplitude: f64) -> AudioClip {
        let n = (sample_rate as f64 * seconds) as usize;
        let samples = (0..n).map(|i| amplitude * libm::sin(2.0 * PI * freq * i as f64 / sample_rate as f64)).collect();
        AudioClip::new(samples, sample_rate).unwrap()
    }

    fn chirpy(sample_rate: u32) -> AudioClip {
        let n = sample_rate as usize / 4;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate as f64;
                0.3 * libm::sin(2.0 * PI * (200.0 + 900.0 * t) * t)
                    + 0.2 * libm::sin(2.0 * PI * 1700.0 * t)
                    + 0.05 * libm::sin(2.0 * PI * 5300.0 * t * t)
            })
            .collect();
        AudioClip::new(samples, sample_rate).unwrap()
    }

    #[test]
    fn preemphasis_examples() {
        assert_eq!(preemphasize(&[1.0; 4], 0.0), [1.0; 4]);
        let y = preemphasize(&[1.0, 1.0, 1.0], 0.97);
        assert_eq!(y[0], 1.0);
        assert!((y[1] - 0.03).abs() < 1e-15 && (y[2] - 0.03).abs() < 1e-15);
        assert!(preemphasize(&[0.0; 5], 0.5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn framing_counts() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let frames = frame_signal(&x, 4, 2);
        assert_eq!(frames.len(), 4);
        assert_eq!(frames[3], &[6.0, 7.0, 8.0, 9.0]);
        assert!(frame_signal(&x[..3], 4, 2).is_empty());
        assert_eq!(frame_signal(&x[..4], 4, 2).len(), 1);
    }

    #[test]
    fn mel_of_700_hz() {
        assert!((hz_to_mel(700.0) - 2595.0 * libm::log10(2.0)).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn dct_is_orthonormal() {
        for n in [1, 2, 13, 26, 40] {
            let m = dct_matrix(n);
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10, "n={n} ({i},{j}) = {dot}");
                }
            }
        }
    }

    #[test]
    fn constant_log_energies_leave_only_c0() {
        let m = dct_matrix(26);
        let flat = [-3.25; 26];
        for (k, row) in m.iter().enumerate() {
            let c: f64 = row.iter().zip(&flat).map(|(a, b)| a * b).sum();
            if k == 0 {
                assert!(c.abs() > 1.0);
            } else {
                assert!(c.abs() < 1e-12, "c{k} = {c}");
            }
        }
    }

    #[test]
    fn filterbank_triangles_peak_at_one() {
        let fb = MelFilterbank::new(26, 512, 16_000);
        for j in 0..fb.len() {
            let w = fb.dense_weights(j);
            assert!(w.iter().all(|&x| x >= 0.0));
            assert_eq!(w[fb.center_bins()[j]], 1.0);
            assert!(w.iter().all(|&x| x <= 1.0));
        }
    }

    #[test]
    fn tone_at_filter_center_excites_that_filter_most() {
        let sr = 16_000;
        let ex = MfccExtractor::new(MfccConfig::default(), sr).unwrap();
        let fb = ex.filterbank();
        for j in 0..fb.len() {
            let clip = tone(fb.center_hz(j), sr, 0.1, 0.5);
            let energies = ex.log_mel_energies(&clip).unwrap();
            let mid = &energies[energies.len() / 2];
            let best = crate::math::argmax(mid).unwrap();
            assert_eq!(best, j, "tone at {} Hz", fb.center_hz(j));
        }
    }

    #[test]
    fn default_features_are_32_wide() {
        let clip = chirpy(16_000);
        let ex = MfccExtractor::new(MfccConfig::default(), 16_000).unwrap();
        let feats = ex.extract(&clip).unwrap();
        assert_eq!(feats.dim(), 32);
        assert_eq!(feats.frame_count(), (4000 - 400) / 160 + 1);
    }

    #[test]
    fn static_cepstra_ignore_uniform_gain() {
        let clip = chirpy(16_000);
        let cfg = MfccConfig::default();
        let a = compute_static_mfcc(&clip, &cfg).unwrap();
        for g in [0.01, 0.37, 1.7] {
            let b = compute_static_mfcc(&clip.scaled(g).unwrap(), &cfg).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-8, "gain {g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let clip = chirpy(8_000);
        let cfg = MfccConfig::default();
        let a = MfccExtractor::new(cfg.clone(), 8_000).unwrap().extract(&clip).unwrap();
        let b = MfccExtractor::new(cfg, 8_000).unwrap().extract(&clip).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_clip_is_an_empty_feature_error() {
        let clip = AudioClip::new(alloc::vec![0.1; 100], 16_000).unwrap();
        assert!(matches!(
            compute_static_mfcc(&clip, &MfccConfig::default()),
            Err(Error::EmptyFeatures { samples: 100, frame_len: 400 })
        ));
    }

    #[test]
    fn config_validation() {
        let bad_hop = MfccConfig { hop_ms: 30.0, ..MfccConfig::default() };
        assert!(bad_hop.validate(16_000).is_err());
        let bad_fft = MfccConfig { fft_size: Some(256), ..MfccConfig::default() };
        assert!(bad_fft.validate(16_000).is_err());
        let too_many = MfccConfig { static_coeff_count: 26, ..MfccConfig::default() };
        assert!(too_many.validate(16_000).is_err());
        let with_c0 = MfccConfig { static_coeff_count: 26, include_c0: true, ..MfccConfig::default() };
        assert!(with_c0.validate(16_000).is_ok());
    }

    #[test]
    fn cepstral_mean_norm_zeroes_column_means() {
        let cfg = MfccConfig { cepstral_mean_norm: true, ..MfccConfig::default() };
        let feats = compute_static_mfcc(&chirpy(16_000), &cfg).unwrap();
        for k in 0..feats.dim() {
            let mean: f64 = feats.frames().map(|f| f[k]).sum::<f64>() / feats.frame_count() as f64;
            assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let rows = alloc::vec![[1.5, -2.0, 0.25]; 7];
        let out = append_deltas(&FeatureSequence::from_rows(&rows).unwrap(), 2).unwrap();
        assert_eq!(out.dim(), 6);
        for f in out.frames() {
            assert_eq!(&f[..3], &[1.5, -2.0, 0.25]);
            assert!(f[3..].iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn deltas_of_ramp_recover_slope() {
        let v = [0.5, -1.0, 3.0];
        let rows: Vec<Vec<f64>> = (0..12).map(|t| v.iter().map(|x| x * t as f64).collect()).collect();
        let out = append_deltas(&FeatureSequence::from_rows(&rows).unwrap(), 2).unwrap();
        for t in 2..10 {
            for (k, vk) in v.iter().enumerate() {
                assert!((out.frame(t)[3 + k] - vk).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deltas_double_sixteen_to_thirty_two() {
        let rows = alloc::vec![[0.0; 16]; 3];
        let out = append_deltas(&FeatureSequence::from_rows(&rows).unwrap(), 2).unwrap();
        assert_eq!(out.dim(), 32);
    }

    proptest! {
        #[test]
        fn frame_count_formula(n in 0usize..500, frame in 1usize..60, hop_frac in 0.05f64..1.0) {
            let hop = ((frame as f64 * hop_frac) as usize).max(1);
            let x = alloc::vec![0.0; n];
            let expect = if n >= frame { (n - frame) / hop + 1 } else { 0 };
            prop_assert_eq!(frame_signal(&x, frame, hop).len(), expect);
        }
    }
}
