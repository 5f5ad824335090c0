//! MP3 round trip through external encoder/decoder commands.

use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, write_wav, AudioTrack, WavEncoding};
use crate::dsp::cross_correlation;
use crate::error::{Error, Result};

pub const ENCODER_ENV: &str = "SYNTHDET_MP3_ENCODER";
pub const DECODER_ENV: &str = "SYNTHDET_MP3_DECODER";
/// In-repo LAME-compatible helper, looked up next to the running executable.
pub const HELPER_NAME: &str = "synthdet-mp3";
pub const MAX_DELAY: usize = 4096;

/// Codec executables and argument templates. `{in}`, `{out}` and `{bitrate}`
/// are substituted per call. The defaults follow the LAME command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub encoder: Option<PathBuf>,
    pub decoder: Option<PathBuf>,
    pub encode_args: Vec<String>,
    pub decode_args: Vec<String>,
    pub workdir: Option<PathBuf>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        let args = |a: &[&str]| a.iter().map(|s| s.to_string()).collect();
        Self {
            encoder: None,
            decoder: None,
            encode_args: args(&["--quiet", "-b", "{bitrate}", "{in}", "{out}"]),
            decode_args: args(&["--quiet", "--decode", "{in}", "{out}"]),
            workdir: None,
        }
    }
}

fn on_path(name: &str) -> Option<PathBuf> {
    env::split_paths(&env::var_os("PATH")?)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

fn sibling_helper() -> Option<PathBuf> {
    let exe = env::current_exe().ok()?;
    let dir = exe.parent()?;
    // Test binaries live one level below the regular binaries.
    [dir.to_path_buf(), dir.parent()?.to_path_buf()]
        .into_iter()
        .map(|d| d.join(format!("{HELPER_NAME}{}", env::consts::EXE_SUFFIX)))
        .find(|p| p.is_file())
}

impl CodecConfig {
    fn resolve(&self, explicit: &Option<PathBuf>, var: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        if let Some(p) = env::var_os(var).filter(|v| !v.is_empty()) {
            return Ok(PathBuf::from(p));
        }
        sibling_helper().or_else(|| on_path("lame")).ok_or_else(|| {
            Error::Environment(format!(
                "no MP3 codec found: set {var} to a LAME-compatible executable, build the `{HELPER_NAME}` \
                 helper (cargo build --workspace), or install `lame` on PATH"
            ))
        })
    }

    pub fn encoder_path(&self) -> Result<PathBuf> {
        self.resolve(&self.encoder, ENCODER_ENV)
    }

    pub fn decoder_path(&self) -> Result<PathBuf> {
        self.resolve(&self.decoder, DECODER_ENV)
    }
}

fn run(exe: &Path, template: &[String], input: &Path, output: &Path, bitrate: u32) -> Result<()> {
    let args: Vec<String> = template
        .iter()
        .map(|a| {
            a.replace("{in}", &input.to_string_lossy())
                .replace("{out}", &output.to_string_lossy())
                .replace("{bitrate}", &bitrate.to_string())
        })
        .collect();
    let out = Command::new(exe).args(&args).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Environment(format!(
                "codec executable {} not found; set {ENCODER_ENV}/{DECODER_ENV}",
                exe.display()
            ))
        } else {
            Error::Io(e)
        }
    })?;
    if !out.status.success() {
        return Err(Error::Codec {
            msg: format!("{} {} exited with {}", exe.display(), args.join(" "), out.status),
            output: format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr)),
        });
    }
    Ok(())
}

/// Shifts `decoded` by the cross-correlation peak against `reference` (lags up
/// to `max_delay` either way) and trims or zero-pads to the reference length.
/// Returns the aligned signal and the removed delay in samples.
pub fn align_to_reference(reference: &[f64], decoded: &[f64], max_delay: usize) -> (Vec<f64>, isize) {
    let n = reference.len();
    if n == 0 || decoded.is_empty() {
        return (vec![0.0; n], 0);
    }
    let c = cross_correlation(decoded, reference);
    let zero = n as isize - 1;
    let lo = (-(max_delay as isize)).max(-(n as isize - 1));
    let hi = (max_delay as isize).min(decoded.len() as isize - 1);
    let mut best = (0isize, f64::NEG_INFINITY);
    for k in lo..=hi {
        let v = c[(zero + k) as usize];
        if v > best.1 {
            best = (k, v);
        }
    }
    let delay = best.0;
    let aligned = (0..n as isize)
        .map(|t| {
            let j = t + delay;
            if j >= 0 && (j as usize) < decoded.len() {
                decoded[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    (aligned, delay)
}

/// Encodes to MP3 at `bitrate_kbps`, decodes, and aligns the result to the input.
/// The output has exactly the input's length and sample rate.
pub fn mp3_roundtrip(track: &AudioTrack, bitrate_kbps: u32, codec: &CodecConfig) -> Result<(AudioTrack, isize)> {
    if bitrate_kbps == 0 {
        return Err(Error::InvalidArgument("bitrate must be positive".into()));
    }
    let encoder = codec.encoder_path()?;
    let decoder = codec.decoder_path()?;
    let mut builder = tempfile::Builder::new();
    builder.prefix("synthdet-mp3-");
    let dir = match &codec.workdir {
        Some(w) => {
            std::fs::create_dir_all(w)?;
            builder.tempdir_in(w)?
        }
        None => builder.tempdir()?,
    };
    let wav_in = dir.path().join("in.wav");
    let mp3 = dir.path().join("coded.mp3");
    let wav_out = dir.path().join("decoded.wav");
    write_wav(&wav_in, track, WavEncoding::Pcm16)?;
    run(&encoder, &codec.encode_args, &wav_in, &mp3, bitrate_kbps)?;
    run(&decoder, &codec.decode_args, &mp3, &wav_out, bitrate_kbps)?;
    let (mut decoded, rate) = read_wav(&wav_out)?;
    if rate != track.sample_rate {
        decoded = resample(&decoded, rate, track.sample_rate);
    }
    let (aligned, delay) = align_to_reference(&track.samples, &decoded, MAX_DELAY);
    Ok((AudioTrack::new(aligned, track.sample_rate, track.source_id.clone())?, delay))
}
