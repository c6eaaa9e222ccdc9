//! MFCC extraction over a corpus and the per-utterance feature cache.
//!
//! Cache file layout (little-endian):
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 8     | magic `CSERFEAT`                |
//! | 4     | format version (u32, = 1)       |
//! | 4     | frame count T (u32)             |
//! | 4     | dimension D (u32)               |
//! | 8·T·D | row-major f64 observation data  |

use std::fs;
use std::path::{Path, PathBuf};

use cascade_ser_core::{CorpusManifest, FeatureSequence, MfccConfig, MfccExtractor, UtteranceRecord};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, Error, Result};
use crate::wav::read_wav;

pub const MAGIC: &[u8; 8] = b"CSERFEAT";
pub const VERSION: u32 = 1;
const HEADER: usize = 20;

pub fn encode_features(features: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * features.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(features.frame_count() as u32).to_le_bytes());
    out.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> std::result::Result<FeatureSequence, String> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err("not a feature cache file".into());
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(8);
    if version != VERSION {
        return Err(format!("feature cache version {version}, expected {VERSION}"));
    }
    let (t, d) = (word(12) as usize, word(16) as usize);
    let body = &bytes[HEADER..];
    if d == 0 || body.len() != 8 * t * d {
        return Err(format!("header says {t}x{d} but {} data bytes follow", body.len()));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureSequence::new(data, d).map_err(|e| e.to_string())
}

pub fn write_features(path: &Path, features: &FeatureSequence) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, encode_features(features)).map_err(io_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_features(&bytes).map_err(|reason| Error::Format { path: path.to_path_buf(), reason })
}

/// Cache location of an utterance: its corpus-relative path with a `.feat` extension.
pub fn cache_path(cache_dir: &Path, record: &UtteranceRecord) -> PathBuf {
    cache_dir.join(&record.path).with_extension("feat")
}

/// Extracts features for every record, in manifest order, on the current rayon pool.
pub fn featurize(manifest: &CorpusManifest, corpus_dir: &Path, config: &MfccConfig) -> Result<Vec<FeatureSequence>> {
    manifest
        .records()
        .par_iter()
        .map(|r| {
            let clip = read_wav(&corpus_dir.join(&r.path))?;
            Ok(MfccExtractor::new(config.clone(), clip.sample_rate())?.extract(&clip)?)
        })
        .collect()
}

/// Written next to the cached files so later runs can tell whether they still apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub version: u32,
    pub mfcc: MfccConfig,
    pub utterances: usize,
}

const INDEX: &str = "index.json";

pub fn write_cache(
    cache_dir: &Path,
    manifest: &CorpusManifest,
    config: &MfccConfig,
    features: &[FeatureSequence],
) -> Result<()> {
    fs::create_dir_all(cache_dir).map_err(io_err(cache_dir))?;
    manifest.records().par_iter().zip(features).try_for_each(|(r, f)| write_features(&cache_path(cache_dir, r), f))?;
    let index = CacheIndex { version: VERSION, mfcc: config.clone(), utterances: features.len() };
    let path = cache_dir.join(INDEX);
    let text = serde_json::to_string_pretty(&index).map_err(json_err(&path))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Cached features for `manifest` if the cache was built with `config`.
pub fn read_cache(
    cache_dir: &Path,
    manifest: &CorpusManifest,
    config: &MfccConfig,
) -> Result<Option<Vec<FeatureSequence>>> {
    let path = cache_dir.join(INDEX);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(None);
    };
    let index: CacheIndex = serde_json::from_str(&text).map_err(json_err(&path))?;
    if index.version != VERSION || index.mfcc != *config {
        info!("feature cache at {} was built with other settings; recomputing", cache_dir.display());
        return Ok(None);
    }
    if manifest.records().iter().any(|r| !cache_path(cache_dir, r).is_file()) {
        return Ok(None);
    }
    manifest.records().par_iter().map(|r| read_features(&cache_path(cache_dir, r))).collect::<Result<_>>().map(Some)
}

/// Reads the cache when it fits, otherwise extracts from audio.
pub fn load_or_featurize(
    manifest: &CorpusManifest,
    corpus_dir: &Path,
    cache_dir: &Path,
    config: &MfccConfig,
) -> Result<Vec<FeatureSequence>> {
    if let Some(features) = read_cache(cache_dir, manifest, config)? {
        info!("using cached features from {}", cache_dir.display());
        return Ok(features);
    }
    info!("extracting features for {} utterances", manifest.len());
    featurize(manifest, corpus_dir, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_bytes_round_trip() {
        let f = FeatureSequence::from_rows(&[vec![1.0, -2.5], vec![f64::MIN_POSITIVE, 1e300]]).unwrap();
        let bytes = encode_features(&f);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 20 + 4 * 8);
        assert_eq!(decode_features(&bytes).unwrap(), f);
    }

    #[test]
    fn corrupt_cache_is_rejected() {
        let f = FeatureSequence::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let bytes = encode_features(&f);
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(decode_features(&wrong_version).is_err());
        assert!(decode_features(b"RIFF0000").is_err());
    }

    #[test]
    fn cache_path_swaps_extension() {
        let r = UtteranceRecord {
            path: "s01/sad/sent01_rep01.wav".into(),
            speaker_id: "s01".into(),
            emotion: cascade_ser_core::Emotion::Sad,
            sentence_id: 1,
            repetition: 1,
        };
        assert_eq!(cache_path(Path::new("/c"), &r), Path::new("/c/s01/sad/sent01_rep01.feat"));
    }
}
