//! 16-bit PCM RIFF/WAVE reading and writing.

use std::fs;
use std::path::Path;

use cascade_ser_core::AudioClip;

use crate::error::{io_err, Error, Result};

const PCM: u16 = 1;

/// Reads a 16-bit PCM WAV file, averaging channels to mono and dividing by 32768.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_wav(&bytes).map_err(|e| e.at(path))
}

/// Writes a mono 16-bit PCM WAV file.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    fs::write(path, encode_wav(clip)).map_err(io_err(path))
}

/// Decoding failure before a path is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WavError {
    Format(String),
    Unsupported(String),
}

impl WavError {
    fn at(self, path: &Path) -> Error {
        let path = path.to_path_buf();
        match self {
            WavError::Format(reason) => Error::Format { path, reason },
            WavError::Unsupported(reason) => Error::UnsupportedFormat { path, reason },
        }
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode_wav(bytes: &[u8]) -> std::result::Result<AudioClip, WavError> {
    let format = |m: &str| WavError::Format(m.to_string());
    if bytes.len() < 12 {
        return Err(format("shorter than a RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(format("missing RIFF magic (big-endian RIFX is not supported)"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(format("RIFF container is not WAVE"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let len = u32_at(bytes, at + 4) as usize;
        let body_start = at + 8;
        let body_end = body_start.checked_add(len).filter(|&e| e <= bytes.len());
        let body = match (id, body_end) {
            (_, Some(end)) => &bytes[body_start..end],
            // Some writers leave a streaming placeholder length on the data chunk.
            (b"data", None) => &bytes[body_start..],
            _ => return Err(format("chunk runs past the end of the file")),
        };
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(format("fmt chunk is shorter than 16 bytes"));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        at = body_start + len + (len & 1);
    }
    let (code, channels, rate, bits) = fmt.ok_or_else(|| format("no fmt chunk"))?;
    let data = data.ok_or_else(|| format("no data chunk"))?;
    if code != PCM {
        return Err(WavError::Unsupported(format!("compression code {code}, only PCM (1) is read")));
    }
    if bits != 16 {
        return Err(WavError::Unsupported(format!("{bits}-bit samples, only 16-bit is read")));
    }
    if channels == 0 || rate == 0 {
        return Err(format("zero channels or zero sample rate"));
    }
    let channels = channels as usize;
    let frame_bytes = 2 * channels;
    let samples = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(2).map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0).sum();
            sum / channels as f64
        })
        .collect();
    AudioClip::new(samples, rate).map_err(|e| WavError::Format(e.to_string()))
}

pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples().len();
    let data_len = (2 * n) as u32;
    let rate = clip.sample_rate();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(2 * rate).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}
