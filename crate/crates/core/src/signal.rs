//! Pure numeric transforms over audio buffers.
//!
//! Everything in this module is a deterministic function of its inputs:
//! first-order gradient conversion, the moving-average noise gate, a
//! Hann-windowed STFT with magnitude and phase, the Mexican-Hat continuous
//! wavelet transform, and rasterizers that turn waveform, scalogram and
//! spectrogram into equal-size grayscale planes for image export.
//!
//! Interval and index conventions: gradient sample `i` is the difference
//! `x[i+1] - x[i]`, so a gradient signal is one shorter than its source.

use std::f64::consts::PI;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Gradient representation of a signal (length `source_length - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSignal {
    pub values: Vec<f64>,
    pub source_length: usize,
}

/// One-sided STFT output: `magnitudes[bin][frame]`, `phases[bin][frame]`.
#[derive(Debug, Clone)]
pub struct SpectrogramMatrix {
    pub magnitudes: Vec<Vec<f64>>,
    /// Phase angles in `(-pi, pi]`.
    pub phases: Vec<Vec<f64>>,
    pub frame_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl SpectrogramMatrix {
    pub fn freq_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }
}

/// CWT output: `coefficients[scale][sample]` with ascending scales.
#[derive(Debug, Clone)]
pub struct Scalogram {
    pub coefficients: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub sample_rate: u32,
}

/// Which channel of the composite image a plane feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Waveform,
    Cwt,
    Spectrogram,
}

/// Square grayscale plane with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    /// `pixels[row][col]`, row 0 at the image top.
    pub pixels: Vec<Vec<u8>>,
    pub channel_role: ChannelRole,
}

impl ImagePlane {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    fn zeros(size: usize, role: ChannelRole) -> Self {
        ImagePlane {
            pixels: vec![vec![0u8; size]; size],
            channel_role: role,
        }
    }
}

/// Difference each sample against its predecessor. No padding: the output
/// is one sample shorter than the input.
pub fn first_order_gradient(audio: &AudioBuffer) -> Result<GradientSignal> {
    if audio.len() < 2 {
        return Err(Error::InvalidInput(
            "gradient needs at least 2 samples".into(),
        ));
    }
    let values = audio
        .samples
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect::<Vec<_>>();
    Ok(GradientSignal {
        values,
        source_length: audio.len(),
    })
}

/// Centered moving average of the absolute values, truncated at the edges
/// (the effective window shrinks near the boundaries). Output length equals
/// input length. For even windows the extra sample sits on the right.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput("moving average window must be >= 1".into()));
    }
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in values {
        acc += v.abs();
        prefix.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub((window - 1) / 2);
        let hi = (i + window / 2).min(n - 1);
        out.push((prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64);
    }
    Ok(out)
}

/// Suppression threshold as a function of the local gradient mean.
pub fn noise_threshold(local_mean: f64) -> f64 {
    8.0 * local_mean * local_mean + 2.4 * local_mean + 0.024
}

/// Noise gate: a gradient sample survives unchanged when its magnitude
/// reaches the local threshold, otherwise it is zeroed. The comparison uses
/// the absolute gradient so negative impulses gate symmetrically.
pub fn noise_gate(gradient_sample: f64, local_mean: f64) -> f64 {
    if gradient_sample.abs() >= noise_threshold(local_mean) {
        gradient_sample
    } else {
        0.0
    }
}

#[derive(Clone, Copy)]
struct Complex {
    re: f64,
    im: f64,
}

/// In-place radix-2 decimation-in-time FFT. `buf.len()` must be a power of
/// two.
fn fft_in_place(buf: &mut [Complex]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (w_im, w_re) = ang.sin_cos();
        let mut start = 0;
        while start < n {
            let mut w = Complex { re: 1.0, im: 0.0 };
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2];
                let t = Complex {
                    re: b.re * w.re - b.im * w.im,
                    im: b.re * w.im + b.im * w.re,
                };
                buf[start + k] = Complex {
                    re: a.re + t.re,
                    im: a.im + t.im,
                };
                buf[start + k + len / 2] = Complex {
                    re: a.re - t.re,
                    im: a.im - t.im,
                };
                w = Complex {
                    re: w.re * w_re - w.im * w_im,
                    im: w.re * w_im + w.im * w_re,
                };
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided magnitudes of a zero-padded DFT of `samples`, `n_fft` points
/// (a power of two). Inputs longer than `n_fft` are truncated. Used for
/// peak-frequency estimation; no window is applied.
pub fn dft_magnitudes(samples: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(n_fft.is_power_of_two(), "n_fft must be a power of two");
    let mut buf = vec![Complex { re: 0.0, im: 0.0 }; n_fft];
    for (i, &s) in samples.iter().take(n_fft).enumerate() {
        buf[i].re = s;
    }
    fft_in_place(&mut buf);
    buf[..n_fft / 2 + 1]
        .iter()
        .map(|c| c.re.hypot(c.im))
        .collect()
}

/// Short-time Fourier transform with a periodic Hann window. Frames advance
/// by `hop`; only full frames are produced, so the last `frame_length - 1`
/// samples past the final frame start are not covered.
pub fn stft(audio: &AudioBuffer, frame_length: usize, hop: usize) -> Result<SpectrogramMatrix> {
    if !frame_length.is_power_of_two() || frame_length < 2 {
        return Err(Error::InvalidInput(format!(
            "frame_length {frame_length} must be a power of two >= 2"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidInput("hop must be >= 1".into()));
    }
    if audio.len() < frame_length {
        return Err(Error::InvalidInput(format!(
            "audio ({} samples) shorter than frame_length {frame_length}",
            audio.len()
        )));
    }
    let n_frames = (audio.len() - frame_length) / hop + 1;
    let n_bins = frame_length / 2 + 1;
    let window = hann(frame_length);
    let mut magnitudes = vec![vec![0.0; n_frames]; n_bins];
    let mut phases = vec![vec![0.0; n_frames]; n_bins];
    let mut buf = vec![Complex { re: 0.0, im: 0.0 }; frame_length];
    for f in 0..n_frames {
        let start = f * hop;
        for i in 0..frame_length {
            buf[i] = Complex {
                re: audio.samples[start + i] * window[i],
                im: 0.0,
            };
        }
        fft_in_place(&mut buf);
        for (bin, c) in buf[..n_bins].iter().enumerate() {
            magnitudes[bin][f] = c.re.hypot(c.im);
            let mut phase = c.im.atan2(c.re);
            if phase == -PI {
                phase = PI;
            }
            phases[bin][f] = phase;
        }
    }
    Ok(SpectrogramMatrix {
        magnitudes,
        phases,
        frame_length,
        hop,
        sample_rate: audio.sample_rate,
    })
}

/// Mirror-pad `x` by `left`/`right` samples (edge value included in the
/// reflection).
pub fn pad_symmetric(x: &[f64], left: usize, right: usize) -> Vec<f64> {
    let n = x.len();
    assert!(left <= n && right <= n, "padding longer than signal");
    let mut out = Vec::with_capacity(n + left + right);
    for i in 0..left {
        out.push(x[left - 1 - i]);
    }
    out.extend_from_slice(x);
    for j in 0..right {
        out.push(x[n - 1 - j]);
    }
    out
}

/// Hop-1 spectrogram of a fixed analysis window, symmetrically padded by
/// `frame_length - 1` samples so that the frame count equals the sample
/// count. This is the per-window layout the image export uses.
pub fn window_spectrogram(audio: &AudioBuffer, frame_length: usize) -> Result<SpectrogramMatrix> {
    let left = (frame_length - 1) / 2;
    let right = frame_length / 2;
    if audio.len() < right {
        return Err(Error::InvalidInput(format!(
            "window of {} samples is too short to mirror-pad for frame_length {frame_length}",
            audio.len()
        )));
    }
    let padded = AudioBuffer::new(
        pad_symmetric(&audio.samples, left, right),
        audio.sample_rate,
    )?;
    stft(&padded, frame_length, 1)
}

/// Nominal center frequency of the Mexican-Hat wavelet (cycles per sample
/// at scale 1).
pub const MEXICAN_HAT_CENTER_FREQUENCY: f64 = 0.25;

/// Pseudo-frequency represented by a wavelet scale at a given sample rate.
pub fn scale_to_frequency(scale: f64, sample_rate: u32) -> f64 {
    MEXICAN_HAT_CENTER_FREQUENCY * sample_rate as f64 / scale
}

/// Mexican-Hat (Ricker) mother wavelet, unit L2 norm.
pub fn mexican_hat(u: f64) -> f64 {
    let norm = 2.0 / (3.0f64.sqrt() * PI.powf(0.25));
    norm * (1.0 - u * u) * (-u * u / 2.0).exp()
}

// The wavelet kernel is truncated where the Gaussian tail falls below f64
// noise; exp(-50) ~ 2e-22.
const WAVELET_SUPPORT_SIGMA: f64 = 10.0;

/// Continuous wavelet transform with the Mexican-Hat wavelet, one
/// coefficient per input sample per scale. Wavelets are L2-normalized
/// (`1/sqrt(scale)`); edges are handled by zero extension.
pub fn cwt_mexican_hat(audio: &AudioBuffer, scales: &[f64]) -> Result<Scalogram> {
    if scales.is_empty() {
        return Err(Error::InvalidInput("scales must be nonempty".into()));
    }
    for pair in scales.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput(
                "scales must be strictly increasing".into(),
            ));
        }
    }
    if scales[0] < 1.0 {
        return Err(Error::InvalidInput("scales must be >= 1".into()));
    }
    let n = audio.len();
    let mut coefficients = Vec::with_capacity(scales.len());
    for &scale in scales {
        let half = (WAVELET_SUPPORT_SIGMA * scale).ceil() as isize;
        let inv_sqrt = 1.0 / scale.sqrt();
        let kernel: Vec<f64> = (-half..=half)
            .map(|dt| mexican_hat(dt as f64 / scale) * inv_sqrt)
            .collect();
        let mut row = vec![0.0; n];
        for (t, out) in row.iter_mut().enumerate() {
            let t = t as isize;
            let lo = (t - half).max(0);
            let hi = (t + half).min(n as isize - 1);
            let mut acc = 0.0;
            for tp in lo..=hi {
                acc += audio.samples[tp as usize] * kernel[(tp - t + half) as usize];
            }
            *out = acc;
        }
        coefficients.push(row);
    }
    Ok(Scalogram {
        coefficients,
        scales: scales.to_vec(),
        sample_rate: audio.sample_rate,
    })
}

/// The 20 geometric scales between 1 and 50 used for scalogram export.
pub fn default_scales() -> Vec<f64> {
    (0..20).map(|k| 50f64.powf(k as f64 / 19.0)).collect()
}

/// Draw the waveform into a square plane: each column holds a vertical line
/// from the mid row to the amplitude row, clipped to `[-1, 1]`.
pub fn rasterize_waveform(audio: &AudioBuffer, size: usize) -> Result<ImagePlane> {
    if audio.len() != size {
        return Err(Error::InvalidInput(format!(
            "waveform rasterizer expects {size} samples, got {}",
            audio.len()
        )));
    }
    let mut plane = ImagePlane::zeros(size, ChannelRole::Waveform);
    let mid = size / 2;
    for (col, &s) in audio.samples.iter().enumerate() {
        let clipped = s.clamp(-1.0, 1.0);
        let target = ((mid as f64) * (1.0 - clipped)).round() as usize;
        let target = target.min(size - 1);
        let (top, bottom) = (target.min(mid), target.max(mid));
        for row in top..=bottom {
            plane.pixels[row][col] = 255;
        }
    }
    Ok(plane)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

/// Map `v` from `[min, max]` to `[0, 255]`; a zero range maps to 0.
fn normalize_u8(v: f64, min: f64, max: f64) -> u8 {
    if max - min <= 0.0 {
        0
    } else {
        (((v - min) / (max - min)) * 255.0).round() as u8
    }
}

/// Rasterize a scalogram to `size x size`: absolute coefficients are
/// min-max normalized over the whole window and each scale row is
/// replicated into a block of `size / n_scales` rows (the last block
/// absorbs the remainder). Ascending scales put the lowest frequency
/// (largest scale) at the image bottom.
pub fn rasterize_scalogram(s: &Scalogram, size: usize) -> Result<ImagePlane> {
    let n_scales = s.coefficients.len();
    if n_scales == 0 {
        return Err(Error::InvalidInput("scalogram has no scales".into()));
    }
    for row in &s.coefficients {
        if row.len() != size {
            return Err(Error::InvalidInput(format!(
                "scalogram rasterizer expects {size} columns, got {}",
                row.len()
            )));
        }
    }
    let (min, max) = min_max(s.coefficients.iter().flatten().map(|c| c.abs()));
    let mut plane = ImagePlane::zeros(size, ChannelRole::Cwt);
    let block = size / n_scales;
    for (k, row) in s.coefficients.iter().enumerate() {
        let start = k * block;
        let end = if k + 1 == n_scales {
            size
        } else {
            (k + 1) * block
        };
        for (col, &c) in row.iter().enumerate() {
            let v = normalize_u8(c.abs(), min, max);
            for out_row in &mut plane.pixels[start..end] {
                out_row[col] = v;
            }
        }
    }
    Ok(plane)
}

/// Corner-aligned bilinear sampling of `src` (values in `[0, 255]`) to a
/// `size x size` grid.
fn bilinear_resize(src: &[Vec<f64>], size: usize) -> Vec<Vec<u8>> {
    let rows = src.len();
    let cols = src.first().map_or(0, Vec::len);
    let mut out = vec![vec![0u8; size]; size];
    if rows == 0 || cols == 0 {
        return out;
    }
    let row_step = if size > 1 {
        (rows - 1) as f64 / (size - 1) as f64
    } else {
        0.0
    };
    let col_step = if size > 1 {
        (cols - 1) as f64 / (size - 1) as f64
    } else {
        0.0
    };
    for (r, out_row) in out.iter_mut().enumerate() {
        let y = r as f64 * row_step;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(rows - 1);
        let fy = y - y0 as f64;
        for (c, px) in out_row.iter_mut().enumerate() {
            let x = c as f64 * col_step;
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(cols - 1);
            let fx = x - x0 as f64;
            let top = src[y0][x0] * (1.0 - fx) + src[y0][x1] * fx;
            let bot = src[y1][x0] * (1.0 - fx) + src[y1][x1] * fx;
            *px = (top * (1.0 - fy) + bot * fy).round() as u8;
        }
    }
    out
}

const DB_FLOOR: f64 = 1e-10;

/// Rasterize a spectrogram to `size x size`: magnitudes are dB-scaled
/// (`20 log10(mag + 1e-10)`), min-max normalized over the window and
/// bilinearly resized, with low frequencies at the image bottom.
pub fn rasterize_spectrogram(m: &SpectrogramMatrix, size: usize) -> ImagePlane {
    let bins = m.freq_bins();
    let frames = m.frames();
    if bins == 0 || frames == 0 {
        return ImagePlane::zeros(size, ChannelRole::Spectrogram);
    }
    let db: Vec<Vec<f64>> = m
        .magnitudes
        .iter()
        .map(|row| row.iter().map(|&v| 20.0 * (v + DB_FLOOR).log10()).collect())
        .collect();
    let (min, max) = min_max(db.iter().flatten().copied());
    // bin 0 (DC) goes to the bottom: flip rows before resizing
    let flipped: Vec<Vec<f64>> = (0..bins)
        .map(|r| {
            db[bins - 1 - r]
                .iter()
                .map(|&v| {
                    if max - min <= 0.0 {
                        0.0
                    } else {
                        (v - min) / (max - min) * 255.0
                    }
                })
                .collect()
        })
        .collect();
    ImagePlane {
        pixels: bilinear_resize(&flipped, size),
        channel_role: ChannelRole::Spectrogram,
    }
}
