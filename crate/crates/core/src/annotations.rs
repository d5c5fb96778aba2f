//! Label-track and training-dataset IO.
//!
//! Audacity label tracks are tab-separated `start<TAB>end<TAB>label` lines
//! with times in seconds; the writer emits six decimals (sub-sample at
//! 192 kHz) so canonical files round-trip byte-exactly. Training exports
//! window the audio into fixed non-overlapping segments, convert clipped
//! annotations to normalized box lines, compose waveform/CWT/spectrogram
//! planes into one RGB image per window, and split the entries 70/15/15.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::signal::{self, ImagePlane};

/// One label-track annotation; `label` text round-trips byte-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl Annotation {
    pub fn new(start: f64, end: f64, label: impl Into<String>) -> Self {
        Annotation {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        (self.start + self.end) / 2.0
    }
}

/// Parse an Audacity label track.
pub fn read_audacity_labels(path: &Path) -> Result<Vec<Annotation>> {
    let text = fs::read_to_string(path)?;
    let mut annotations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let start_text = parts.next().unwrap_or_default();
        let end_text = parts.next();
        let label = parts.next();
        let (end_text, label) = match (end_text, label) {
            (Some(e), Some(l)) => (e, l),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: "expected start<TAB>end<TAB>label".into(),
                })
            }
        };
        let parse_time = |text: &str| -> Result<f64> {
            text.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("bad time {text:?}"),
            })
        };
        annotations.push(Annotation {
            start: parse_time(start_text)?,
            end: parse_time(end_text)?,
            label: label.to_string(),
        });
    }
    Ok(annotations)
}

/// Render annotations to a string in label-track format (LF endings).
pub fn format_audacity_labels(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&format!("{:.6}\t{:.6}\t{}\n", a.start, a.end, a.label));
    }
    out
}

/// Write an Audacity label track.
pub fn write_audacity_labels(annotations: &[Annotation], path: &Path) -> Result<()> {
    fs::write(path, format_audacity_labels(annotations))?;
    Ok(())
}

/// One fixed-length analysis window of the source audio.
#[derive(Debug, Clone)]
pub struct AudioWindow {
    pub index: usize,
    pub audio: AudioBuffer,
    /// True when the final partial window was zero-padded to full length.
    pub padded: bool,
}

/// Cut the audio into consecutive non-overlapping windows; the final
/// partial window is zero-padded to full length and flagged.
pub fn window_audio(audio: &AudioBuffer, window_length: usize) -> Result<Vec<AudioWindow>> {
    if window_length < 2 {
        return Err(Error::InvalidInput("window_length must be >= 2".into()));
    }
    let mut windows = Vec::new();
    let mut start = 0usize;
    let mut index = 0usize;
    while start < audio.len() {
        let end = (start + window_length).min(audio.len());
        let mut samples = audio.samples[start..end].to_vec();
        let padded = samples.len() < window_length;
        samples.resize(window_length, 0.0);
        windows.push(AudioWindow {
            index,
            audio: AudioBuffer::new(samples, audio.sample_rate)?,
            padded,
        });
        start += window_length;
        index += 1;
    }
    Ok(windows)
}

/// One normalized training box: `class_id x y w h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelLine {
    pub class_id: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Label lines of one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub window_index: usize,
    pub label_lines: Vec<LabelLine>,
}

/// Clip every annotation to each window it intersects and convert the
/// clipped interval to normalized box coordinates (x = center, w = extent,
/// y = 0.5, h = 1.0 since events span the full bandwidth). Every window in
/// `[0, ceil(total/window))` gets an entry, empty where nothing intersects.
/// Event classes are not differentiated in the training labels.
pub fn annotations_to_dataset(
    annotations: &[Annotation],
    sample_rate: u32,
    window_length: usize,
    total_length: usize,
) -> Result<Vec<DatasetEntry>> {
    if window_length == 0 || total_length == 0 {
        return Err(Error::InvalidInput("empty window or audio".into()));
    }
    let fs = sample_rate as f64;
    let n_windows = total_length.div_ceil(window_length);
    let mut entries: Vec<DatasetEntry> = (0..n_windows)
        .map(|window_index| DatasetEntry {
            window_index,
            label_lines: Vec::new(),
        })
        .collect();
    for a in annotations {
        let start = a.start * fs;
        let end = a.end * fs;
        if start < 0.0 || end > total_length as f64 || end < start {
            return Err(Error::InvalidInput(format!(
                "annotation [{}, {}] outside audio of {} samples",
                a.start, a.end, total_length
            )));
        }
        let first = (start / window_length as f64).floor() as usize;
        let last = ((end / window_length as f64).ceil() as usize).max(first + 1);
        for (w, entry) in entries
            .iter_mut()
            .enumerate()
            .take(last.min(n_windows))
            .skip(first)
        {
            let wstart = (w * window_length) as f64;
            let lo = start.max(wstart);
            let hi = end.min(wstart + window_length as f64);
            if hi <= lo && end > start {
                continue; // annotation only touches the window boundary
            }
            let extent = (hi - lo).max(0.0);
            entry.label_lines.push(LabelLine {
                class_id: 0,
                x: ((lo + hi) / 2.0 - wstart) / window_length as f64,
                y: 0.5,
                w: extent / window_length as f64,
                h: 1.0,
            });
        }
    }
    Ok(entries)
}

/// Render one entry's label lines in the training text format.
pub fn format_label_lines(entry: &DatasetEntry) -> String {
    let mut out = String::new();
    for l in &entry.label_lines {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            l.class_id, l.x, l.y, l.w, l.h
        ));
    }
    out
}

/// Compose the three planes of one analysis window. The plane size equals
/// the window sample count.
pub fn compose_scwtspec(window_audio: &AudioBuffer) -> Result<[ImagePlane; 3]> {
    let size = window_audio.len();
    let waveform = signal::rasterize_waveform(window_audio, size)?;
    let scalogram = signal::cwt_mexican_hat(window_audio, &signal::default_scales())?;
    let cwt = signal::rasterize_scalogram(&scalogram, size)?;
    let spectrogram = signal::window_spectrogram(window_audio, 16)?;
    let spec = signal::rasterize_spectrogram(&spectrogram, size);
    Ok([waveform, cwt, spec])
}

/// Write the window's composite image: waveform in red, CWT in green,
/// spectrogram in blue, losslessly encoded as PNG.
pub fn export_scwtspec(window_audio: &AudioBuffer, out_path: &Path) -> Result<()> {
    let [r, g, b] = compose_scwtspec(window_audio)?;
    let size = window_audio.len() as u32;
    let mut img = image::RgbImage::new(size, size);
    for (row, (rr, (gr, br))) in r
        .pixels
        .iter()
        .zip(g.pixels.iter().zip(&b.pixels))
        .enumerate()
    {
        for col in 0..size as usize {
            img.put_pixel(
                col as u32,
                row as u32,
                image::Rgb([rr[col], gr[col], br[col]]),
            );
        }
    }
    img.save_with_format(out_path, image::ImageFormat::Png)
        .map_err(|e| Error::InvalidInput(format!("image encode: {e}")))?;
    Ok(())
}

/// Read back the three channels of an exported composite image.
pub fn read_scwtspec_channels(path: &Path) -> Result<[Vec<Vec<u8>>; 3]> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidInput(format!("image decode: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut channels = [
        vec![vec![0u8; w as usize]; h as usize],
        vec![vec![0u8; w as usize]; h as usize],
        vec![vec![0u8; w as usize]; h as usize],
    ];
    for (x, y, pixel) in img.enumerate_pixels() {
        for c in 0..3 {
            channels[c][y as usize][x as usize] = pixel[c];
        }
    }
    Ok(channels)
}

/// Seeded shuffle-and-partition split. The train partition takes
/// `floor(n * train)`; the validation partition takes its proportional
/// share of the remainder, rounded down; the test partition takes the rest.
pub fn split_dataset<T: Clone>(
    entries: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions ({ft}, {fv}, {fe}) must be nonnegative and sum to 1"
        )));
    }
    let mut shuffled: Vec<T> = entries.to_vec();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n = shuffled.len();
    let n_train = (n as f64 * ft).floor() as usize;
    let remaining = n - n_train;
    let n_val = if fv + fe > 0.0 {
        (remaining as f64 * fv / (fv + fe)).floor() as usize
    } else {
        0
    };
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok((shuffled, val, test))
}

/// Write one entry's label file (`<index>.txt`) into a directory.
pub fn write_label_file(entry: &DatasetEntry, dir: &Path) -> Result<()> {
    let path = dir.join(format!("{:06}.txt", entry.window_index));
    let mut file = fs::File::create(path)?;
    file.write_all(format_label_lines(entry).as_bytes())?;
    Ok(())
}
