//! Binary checkpoint format.
//!
//! ```text
//! 8 bytes   magic "SDETCKPT"
//! u32 LE    format version
//! u32 LE    header length in bytes
//! ...       UTF-8 JSON header {version, spec, seed, step, shapes}
//! u64 LE    number of payload values
//! ...       f32 LE payload in spec order: per linear layer the weight
//!           (input x output, row-major) then the bias; per batch norm gamma,
//!           beta, running mean, running variance
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::network::{LayerParams, MlpParams, Network};
use super::spec::MlpSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SDETCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub spec: MlpSpec,
    pub seed: u64,
    pub step: u64,
    pub shapes: Vec<Vec<usize>>,
}

fn shapes(params: &MlpParams) -> Vec<Vec<usize>> {
    params
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerParams::Stateless => None,
            LayerParams::Linear { weight, .. } => Some(vec![weight.nrows(), weight.ncols()]),
            LayerParams::BatchNorm { gamma, .. } => Some(vec![gamma.len()]),
        })
        .collect()
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &Network, seed: u64) -> Result<()> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        spec: net.spec.clone(),
        seed,
        step: net.params.step,
        shapes: shapes(&net.params),
    };
    let json = serde_json::to_vec(&header)?;
    let values = net.params.flatten_all();
    let mut buf = Vec::with_capacity(24 + json.len() + 4 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn to_bytes(net: &Network, seed: u64) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, net, seed)?;
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Network, CheckpointHeader)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    if take(&bytes, &mut pos, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut pos, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(take(&bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&bytes, &mut pos, header_len)?)?;
    let count = u64::from_le_bytes(take(&bytes, &mut pos, 8)?.try_into().unwrap()) as usize;
    let payload = take(&bytes, &mut pos, count.saturating_mul(4))?;
    if pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    let mut params = MlpParams::init(&header.spec, 0)?;
    if shapes(&params) != header.shapes {
        return Err(Error::Checkpoint("layer shapes disagree with spec".into()));
    }
    params.load_flat(&values)?;
    params.step = header.step;
    for l in &params.layers {
        if let LayerParams::BatchNorm { running_var, .. } = l {
            if running_var.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Checkpoint("non-positive running variance".into()));
            }
        }
    }
    let net = Network {
        spec: header.spec.clone(),
        params,
    };
    Ok((net, header))
}

/// Rounds every parameter through f32 so an in-memory network matches what a
/// checkpoint round trip would reproduce.
pub fn quantize_to_f32(net: &mut Network) {
    let values: Vec<f64> = net.params.flatten_all().into_iter().map(|v| v as f32 as f64).collect();
    net.params.load_flat(&values).expect("same shape");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LayerSpec;

    fn net() -> Network {
        let mut layers = MlpSpec::blocks(&[8, 6], 0.25, 0.01);
        layers.push(LayerSpec::Linear { input: 6, output: 2 });
        layers.push(LayerSpec::Softmax);
        Network::new(MlpSpec::new(layers, Some(1)).unwrap(), 11).unwrap()
    }

    #[test]
    fn roundtrip_preserves_f32_values() {
        let mut n = net();
        n.params.step = 17;
        let bytes = to_bytes(&n, 11).unwrap();
        let (back, header) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(header.seed, 11);
        assert_eq!(back.params.step, 17);
        quantize_to_f32(&mut n);
        assert_eq!(back, n);
    }

    #[test]
    fn layout_matches_documentation() {
        let n = net();
        let bytes = to_bytes(&n, 0).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let count_at = 16 + header_len;
        let count = u64::from_le_bytes(bytes[count_at..count_at + 8].try_into().unwrap()) as usize;
        // 8*6+6 weights/bias, 4*6 batch norm, 6*2+2 head.
        assert_eq!(count, 54 + 24 + 14);
        assert_eq!(bytes.len(), count_at + 8 + 4 * count);
        let first = f32::from_le_bytes(bytes[count_at + 8..count_at + 12].try_into().unwrap());
        match &n.params.layers[0] {
            LayerParams::Linear { weight, .. } => assert_eq!(first, weight[[0, 0]] as f32),
            _ => panic!(),
        }
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = to_bytes(&net(), 0).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
    }
}
