//! LAME-compatible MP3 encoder/decoder for the compression attack.
//!
//! ```text
//! synthdet-mp3 [--quiet] -b <kbps> <in.wav> <out.mp3>
//! synthdet-mp3 [--quiet] --decode <in.mp3> <out.wav>
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use mp3lame_encoder::{Bitrate, Builder, FlushGap, MonoPcm, Quality};
use symphonia::core::codecs::audio::AudioDecoderOptions;
use symphonia::core::errors::Error as SymphoniaError;
use symphonia::core::formats::probe::Hint;
use symphonia::core::formats::{FormatOptions, TrackType};
use symphonia::core::io::MediaSourceStream;
use symphonia::core::meta::MetadataOptions;
use synthdet_core::audio::{read_wav, write_wav, AudioTrack, WavEncoding};

#[derive(Parser)]
#[command(name = "synthdet-mp3", about = "Minimal LAME-compatible MP3 round-trip tool")]
struct Args {
    /// Constant bitrate in kbit/s.
    #[arg(short = 'b', default_value_t = 128)]
    bitrate: u32,
    /// Decode MP3 to WAV instead of encoding.
    #[arg(long)]
    decode: bool,
    #[arg(long)]
    quiet: bool,
    input: PathBuf,
    output: PathBuf,
}

fn bitrate(kbps: u32) -> Result<Bitrate> {
    Ok(match kbps {
        8 => Bitrate::Kbps8,
        16 => Bitrate::Kbps16,
        24 => Bitrate::Kbps24,
        32 => Bitrate::Kbps32,
        40 => Bitrate::Kbps40,
        48 => Bitrate::Kbps48,
        64 => Bitrate::Kbps64,
        80 => Bitrate::Kbps80,
        96 => Bitrate::Kbps96,
        112 => Bitrate::Kbps112,
        128 => Bitrate::Kbps128,
        160 => Bitrate::Kbps160,
        192 => Bitrate::Kbps192,
        224 => Bitrate::Kbps224,
        256 => Bitrate::Kbps256,
        320 => Bitrate::Kbps320,
        other => bail!("unsupported bitrate {other} kbit/s"),
    })
}

fn encode(input: &Path, output: &Path, kbps: u32) -> Result<()> {
    let (samples, rate) = read_wav(input)?;
    let mut builder = Builder::new().ok_or_else(|| anyhow!("cannot initialise LAME"))?;
    builder.set_num_channels(1).map_err(|e| anyhow!("{e:?}"))?;
    builder.set_sample_rate(rate).map_err(|e| anyhow!("{e:?}"))?;
    builder.set_brate(bitrate(kbps)?).map_err(|e| anyhow!("{e:?}"))?;
    builder.set_quality(Quality::Best).map_err(|e| anyhow!("{e:?}"))?;
    let mut encoder = builder.build().map_err(|e| anyhow!("LAME rejected the settings: {e:?}"))?;
    let mut mp3 = Vec::with_capacity(mp3lame_encoder::max_required_buffer_size(samples.len()) + 7200);
    encoder
        .encode_to_vec(MonoPcm(samples.as_slice()), &mut mp3)
        .map_err(|e| anyhow!("encode failed: {e:?}"))?;
    encoder
        .flush_to_vec::<FlushGap>(&mut mp3)
        .map_err(|e| anyhow!("flush failed: {e:?}"))?;
    std::fs::write(output, mp3).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn decode(input: &Path, output: &Path) -> Result<()> {
    let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mss = MediaSourceStream::new(Box::new(file), Default::default());
    let mut hint = Hint::new();
    hint.with_extension("mp3");
    let mut format = symphonia::default::get_probe().probe(&hint, mss, FormatOptions::default(), MetadataOptions::default())?;
    let track = format.default_track(TrackType::Audio).ok_or_else(|| anyhow!("no audio track"))?;
    let params = track
        .codec_params
        .as_ref()
        .and_then(|p| p.audio())
        .ok_or_else(|| anyhow!("missing codec parameters"))?;
    let mut decoder = symphonia::default::get_codecs().make_audio_decoder(params, &AudioDecoderOptions::default())?;
    let track_id = track.id;

    let mut mono = Vec::new();
    let mut rate = None;
    let mut planes: Vec<Vec<f64>> = Vec::new();
    loop {
        let packet = match format.next_packet() {
            Ok(Some(p)) => p,
            Ok(None) => break,
            Err(SymphoniaError::IoError(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if packet.track_id != track_id {
            continue;
        }
        match decoder.decode(&packet) {
            Ok(buf) => {
                rate.get_or_insert(buf.spec().rate());
                buf.copy_to_vecs_planar::<f64>(&mut planes);
                let n = planes.len().max(1) as f64;
                for i in 0..buf.frames() {
                    mono.push(planes.iter().map(|p| p[i]).sum::<f64>() / n);
                }
            }
            Err(SymphoniaError::DecodeError(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let rate = rate.ok_or_else(|| anyhow!("no audio decoded"))?;
    let track = AudioTrack::new(mono, rate, "decoded")?;
    write_wav(output, &track, WavEncoding::Float32)?;
    Ok(())
}

fn main() {
    let args = Args::parse();
    let result = if args.decode {
        decode(&args.input, &args.output)
    } else {
        encode(&args.input, &args.output, args.bitrate)
    };
    if let Err(e) = result {
        eprintln!("synthdet-mp3: {e:#}");
        std::process::exit(1);
    }
}
