//! Audio loading, resampling, framing and relative-energy silence detection.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

/// Sample rate every extractor assumes.
pub const CANONICAL_RATE: u32 = 16_000;

/// Taps per polyphase branch of the resampler.
const RESAMPLER_TAPS: usize = 32;
const RESAMPLER_KAISER_BETA: f64 = 8.0;

/// Mono audio buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioTrack {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if samples.is_empty() {
            return Err(Error::EmptyAudio(source_id));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample in {source_id}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the track with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }

    /// Sub-range `[start, end)` of the samples as a new track.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.samples.len());
        if start >= end {
            return Err(Error::EmptyAudio(format!("{}[{start}..{end}]", self.source_id)));
        }
        Self::new(
            self.samples[start..end].to_vec(),
            self.sample_rate,
            format!("{}[{start}..{end}]", self.source_id),
        )
    }
}

/// Reads a PCM WAV file and mixes it down to mono in [-1, 1]. No resampling.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| format_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(format_err("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(e.to_string()))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(e.to_string()))?
        }
        (fmt, bits) => {
            return Err(format_err(format!("unsupported sample format {fmt:?}/{bits} bit")))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio(path.display().to_string()));
    }
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

/// Loads a WAV file as a mono track at `target_rate`.
pub fn load_track(path: &Path, target_rate: u32) -> Result<AudioTrack> {
    let (mono, rate) = read_wav(path)?;
    let samples = if rate == target_rate {
        mono
    } else {
        resample(&mono, rate, target_rate)
    };
    AudioTrack::new(samples, target_rate, path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Writes a mono WAV. PCM16 output is clipped to [-1, 1].
pub fn write_wav(path: &Path, track: &AudioTrack, encoding: WavEncoding) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: track.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let err = |e: hound::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &track.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).map_err(err)?;
            }
            WavEncoding::Float32 => writer.write_sample(s as f32).map_err(err)?,
        }
    }
    writer.finalize().map_err(err)?;
    Ok(())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Windowed-sinc polyphase resampler (32 taps per phase, Kaiser window).
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let g = gcd(from_rate as u64, to_rate as u64);
    let up = (to_rate as u64 / g) as usize;
    let down = (from_rate as u64 / g) as usize;
    let cutoff = (to_rate as f64 / from_rate as f64).min(1.0);
    let half = RESAMPLER_TAPS as isize / 2;

    // Branch `phase` evaluates the interpolation kernel at input offsets
    // k - phase/up for k in -half+1 ..= half.
    let bank: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            let mut taps: Vec<f64> = ((-half + 1)..=half)
                .map(|k| {
                    let t = k as f64 - frac;
                    cutoff * dsp::sinc(cutoff * t) * dsp::kaiser(t / half as f64, RESAMPLER_KAISER_BETA)
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            for tap in &mut taps {
                *tap /= sum;
            }
            taps
        })
        .collect();

    let out_len = (input.len() * up).div_ceil(down);
    let n_in = input.len() as isize;
    (0..out_len)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let taps = &bank[pos % up];
            taps.iter()
                .zip((-half + 1)..=half)
                .map(|(&h, k)| {
                    let idx = base + k;
                    if (0..n_in).contains(&idx) {
                        h * input[idx as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hamming,
    Rect,
}

#[derive(Debug, Clone)]
pub struct FrameSequence {
    /// num_frames x frame_len, already windowed.
    pub frames: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Vec<f64>,
    pub sample_rate: u32,
}

impl FrameSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    /// Keeps only the frames whose index satisfies `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> FrameSequence {
        let rows: Vec<usize> = (0..self.num_frames()).filter(|&i| keep(i)).collect();
        let frames = self.frames.select(ndarray::Axis(0), &rows);
        FrameSequence {
            frames,
            frame_len: self.frame_len,
            hop: self.hop,
            window: self.window.clone(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0).round() as usize
}

/// Number of full frames in a signal of `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Splits a sample buffer into windowed frames of `frame_len` every `hop` samples.
pub fn frame_samples(
    samples: &[f64],
    sample_rate: u32,
    frame_len: usize,
    hop: usize,
    window_kind: WindowKind,
) -> Result<FrameSequence> {
    if hop == 0 || frame_len < hop {
        return Err(Error::InvalidArgument(format!(
            "frame length {frame_len} and hop {hop} must satisfy frame >= hop > 0"
        )));
    }
    if samples.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len,
            got: samples.len(),
        });
    }
    let window = match window_kind {
        WindowKind::Hamming => dsp::hamming(frame_len),
        WindowKind::Rect => vec![1.0; frame_len],
    };
    let n = frame_count(samples.len(), frame_len, hop);
    let frames = Array2::from_shape_fn((n, frame_len), |(i, j)| samples[i * hop + j] * window[j]);
    Ok(FrameSequence {
        frames,
        frame_len,
        hop,
        window,
        sample_rate,
    })
}

/// Frames a track using millisecond durations.
pub fn frame_signal(
    track: &AudioTrack,
    frame_ms: f64,
    hop_ms: f64,
    window_kind: WindowKind,
) -> Result<FrameSequence> {
    if !(frame_ms >= hop_ms && hop_ms > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frame {frame_ms} ms / hop {hop_ms} ms must satisfy frame >= hop > 0"
        )));
    }
    frame_samples(
        &track.samples,
        track.sample_rate,
        ms_to_samples(frame_ms, track.sample_rate),
        ms_to_samples(hop_ms, track.sample_rate),
        window_kind,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub rel_threshold_db: f64,
    pub min_run: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            rel_threshold_db: 35.0,
            min_run: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceMask {
    /// `true` marks a silent frame.
    pub silent: Vec<bool>,
    pub threshold_db: f64,
    pub total_silence_s: f64,
}

impl SilenceMask {
    pub fn silent_count(&self) -> usize {
        self.silent.iter().filter(|&&s| s).count()
    }
}

/// Marks frames whose energy is more than `rel_threshold_db` below the loudest frame.
pub fn detect_silence(frames: &FrameSequence, config: &VadConfig) -> SilenceMask {
    let log_energy: Vec<f64> = frames
        .frames
        .rows()
        .into_iter()
        .map(|row| 10.0 * row.iter().map(|x| x * x).sum::<f64>().log10())
        .collect();
    let (silent, threshold_db) = silence_from_energy(&log_energy, config);
    let count = silent.iter().filter(|&&s| s).count();
    SilenceMask {
        silent,
        threshold_db,
        total_silence_s: count as f64 * frames.hop as f64 / frames.sample_rate as f64,
    }
}

/// Silence decision on per-frame log energies (dB); returns the mask and the
/// absolute threshold.
pub fn silence_from_energy(log_energy: &[f64], config: &VadConfig) -> (Vec<bool>, f64) {
    let max_db = log_energy
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold_db = max_db - config.rel_threshold_db;
    let mut silent: Vec<bool> = log_energy.iter().map(|&e| e < threshold_db).collect();

    // Relabel short silent runs as speech.
    let mut i = 0;
    while i < silent.len() {
        if silent[i] {
            let start = i;
            while i < silent.len() && silent[i] {
                i += 1;
            }
            if i - start < config.min_run {
                silent[start..i].iter_mut().for_each(|s| *s = false);
            }
        } else {
            i += 1;
        }
    }
    (silent, threshold_db)
}
