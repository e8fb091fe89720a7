//! Binary checkpoint format.
//!
//! ```text
//! "PXNN" | u16 version | u32 len | header JSON (NetworkSpec, Adam config, step count)
//!        | tensor B | (weight, bias) per layer | [u32 len | extra JSON]
//! tensor := u32 rank | u32 dim × rank | f64 × Π dims
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{AdamConfig, NetworkSpec, NetworkState};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PXNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    network: NetworkSpec,
    adam: AdamConfig,
    step_count: u64,
}

/// Contents of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub fourier: Array2<f64>,
    pub extra: Option<serde_json::Value>,
}

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<usize> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

pub(crate) fn write_json(w: &mut impl Write, value: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec(value)?;
    write_u32(w, bytes.len())?;
    w.write_all(&bytes)?;
    Ok(())
}

pub(crate) fn read_json_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u32(r)?;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    Ok(bytes)
}

pub(crate) fn write_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn write_tensor(w: &mut impl Write, dims: &[usize], data: impl IntoIterator<Item = f64>) -> Result<()> {
    write_u32(w, dims.len())?;
    for &d in dims {
        write_u32(w, d)?;
    }
    write_f64s(w, data)
}

fn read_tensor(r: &mut impl Read) -> Result<(Vec<usize>, Vec<f64>)> {
    let rank = read_u32(r)?;
    if rank > 8 {
        return Err(Error::format(format!("tensor rank {rank} is implausible")));
    }
    let dims = (0..rank).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    let n = dims.iter().product();
    Ok((dims, read_f64s(r, n)?))
}

fn read_matrix(r: &mut impl Read, expect: (usize, usize), what: &str) -> Result<Array2<f64>> {
    let (dims, data) = read_tensor(r)?;
    if dims != [expect.0, expect.1] {
        return Err(Error::format(format!(
            "{what}: stored dims {dims:?}, expected {expect:?}"
        )));
    }
    Ok(Array2::from_shape_vec(expect, data).expect("dims checked"))
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.state.check_shapes(&self.spec)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_json(
            w,
            &Header {
                network: self.spec.clone(),
                adam: self.state.adam,
                step_count: self.state.step_count,
            },
        )?;
        let f = &self.fourier;
        write_tensor(w, &[f.nrows(), f.ncols()], f.iter().copied())?;
        for (wt, b) in self.state.weights.iter().zip(&self.state.biases) {
            write_tensor(w, &[wt.nrows(), wt.ncols()], wt.iter().copied())?;
            write_tensor(w, &[b.len()], b.iter().copied())?;
        }
        if let Some(extra) = &self.extra {
            write_json(w, extra)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format(format!("bad magic {magic:?}, expected PXNN")));
        }
        let mut version = [0u8; 2];
        r.read_exact(&mut version)?;
        let version = u16::from_le_bytes(version);
        if version != VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let header: Header = serde_json::from_slice(&read_json_bytes(r)?)?;
        header.network.validate()?;

        let (fdims, fdata) = read_tensor(r)?;
        if fdims.len() != 2 {
            return Err(Error::format("Fourier matrix must have rank 2"));
        }
        let fourier = Array2::from_shape_vec((fdims[0], fdims[1]), fdata).expect("dims read");

        let mut state = NetworkState::zeros(&header.network);
        state.adam = header.adam;
        state.step_count = header.step_count;
        for (layer, shape) in header.network.layer_shapes().iter().enumerate() {
            state.weights[layer] = read_matrix(r, shape.weight_dim(), &format!("layer {layer} weight"))?;
            let (bdims, bdata) = read_tensor(r)?;
            if bdims != [shape.bias_len()] {
                return Err(Error::format(format!(
                    "layer {layer} bias: stored dims {bdims:?}, expected [{}]",
                    shape.bias_len()
                )));
            }
            state.biases[layer] = Array1::from(bdata);
        }

        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let extra = if rest.is_empty() {
            None
        } else {
            let mut cursor = rest.as_slice();
            let bytes = read_json_bytes(&mut cursor)?;
            if !cursor.is_empty() {
                return Err(Error::format("trailing bytes after extra section"));
            }
            Some(serde_json::from_slice(&bytes)?)
        };

        Ok(Self {
            spec: header.network,
            state,
            fourier,
            extra,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}
