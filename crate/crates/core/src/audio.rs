//! Mono audio buffers and PCM wave file IO.
//!
//! Readers accept mono RIFF/WAVE files with 16- or 32-bit integer PCM or
//! 32-bit IEEE float samples at any sample rate. Samples are normalized to
//! `[-1, 1]` on read. The writer always emits 32-bit float mono, which
//! round-trips the synthesizer output without quantization.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A mono sample sequence together with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    /// Amplitudes, nominally in `[-1, 1]`.
    pub samples: Vec<f64>,
    /// Sampling frequency in Hz.
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample_rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Borrow the half-open sample range `[start, end)` as a new buffer.
    pub fn slice(&self, start: usize, end: usize) -> Result<AudioBuffer> {
        if start >= end || end > self.samples.len() {
            return Err(Error::InvalidInput(format!(
                "slice [{start}, {end}) out of bounds for {} samples",
                self.samples.len()
            )));
        }
        Ok(AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        })
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Read a mono PCM wave file.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::AudioFormat(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
        let body_end = match body_end {
            Some(e) => e,
            None => {
                return Err(Error::AudioFormat(format!(
                    "{}: truncated chunk {:?}",
                    path.display(),
                    String::from_utf8_lossy(id)
                )))
            }
        };
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::AudioFormat(format!(
                        "{}: fmt chunk too short",
                        path.display()
                    )));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunk bodies are word-aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| {
        Error::AudioFormat(format!("{}: missing fmt chunk", path.display()))
    })?;
    let data = data.ok_or_else(|| {
        Error::AudioFormat(format!("{}: missing data chunk", path.display()))
    })?;
    if channels != 1 {
        return Err(Error::AudioFormat(format!(
            "{}: {channels} channels, only mono is supported",
            path.display()
        )));
    }
    if rate == 0 {
        return Err(Error::AudioFormat(format!(
            "{}: zero sample rate",
            path.display()
        )));
    }

    let samples = match (format, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64 / 32768.0)
            .collect(),
        (FORMAT_PCM, 32) => data
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64 / 2147483648.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => {
            let samples: Vec<f64> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            // NaN samples would silently poison every downstream mean
            if let Some(at) = samples.iter().position(|s| !s.is_finite()) {
                return Err(Error::AudioFormat(format!(
                    "{}: non-finite sample at index {at}",
                    path.display()
                )));
            }
            samples
        }
        _ => {
            return Err(Error::AudioFormat(format!(
                "{}: unsupported encoding (format {format}, {bits} bit)",
                path.display()
            )))
        }
    };

    AudioBuffer::new(samples, rate)
}

/// Write a mono 32-bit float wave file.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let data_len = (audio.samples.len() * 4) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 4).to_le_bytes()); // byte rate
    out.extend_from_slice(&4u16.to_le_bytes()); // block align
    out.extend_from_slice(&32u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_sample_rate() {
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn float_wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..480).map(|i| ((i as f64) * 0.013).sin() * 0.8).collect();
        let audio = AudioBuffer::new(samples.clone(), 192_000).unwrap();
        write_wav(&path, &audio).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 192_000);
        assert_eq!(back.len(), 480);
        for (a, b) in samples.iter().zip(&back.samples) {
            // storage is f32
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn pcm16_decoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm16.wav");
        // hand-build a 3-sample 16-bit PCM file
        let samples: [i16; 3] = [0, 16384, -32768];
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 6).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&48000u32.to_le_bytes());
        bytes.extend_from_slice(&96000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&6u32.to_le_bytes());
        for s in samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.samples, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn non_finite_float_samples_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.wav");
        let audio = AudioBuffer::new(vec![0.0, f64::NAN, 0.5], 48_000).unwrap();
        write_wav(&path, &audio).unwrap();
        match read_wav(&path) {
            Err(Error::AudioFormat(msg)) => assert!(msg.contains("non-finite")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&36u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&48000u32.to_le_bytes());
        bytes.extend_from_slice(&384000u32.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&0u32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::AudioFormat(_))));
    }
}
