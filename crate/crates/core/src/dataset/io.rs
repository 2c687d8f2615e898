//! Dataset container: magic bytes, a little-endian `u64` header length, a JSON
//! header, then feature rows as `f32`, labels as `f64`, environment ids as
//! `i64` and mechanism records as `f64`, all little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EnvironmentDataset, Family, GenConfig};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ACIADS1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    family: Family,
    gen_config: GenConfig,
    seed: u64,
    n: usize,
    feature_dim: usize,
    label_dim: usize,
    mech_dim: usize,
    env_counts: Vec<(i64, usize)>,
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated dataset: {e}")))?;
    Ok(buf)
}

fn checked_len(n: usize, width: usize, bytes: usize) -> Result<usize> {
    n.checked_mul(width)
        .and_then(|v| v.checked_mul(bytes))
        .ok_or_else(|| Error::Format("dataset dimensions overflow".into()))
}

impl EnvironmentDataset {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let header = Header {
            family: self.family,
            gen_config: self.gen_config.clone(),
            seed: self.seed,
            n: self.len(),
            feature_dim: self.feature_dim,
            label_dim: self.label_dim,
            mech_dim: self.mech_dim,
            env_counts: self.env_counts(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut body = Vec::with_capacity(self.features.len() * 4 + (self.labels.len() + self.envs.len()) * 8);
        self.features.iter().for_each(|v| body.extend_from_slice(&v.to_le_bytes()));
        self.labels.iter().for_each(|v| body.extend_from_slice(&v.to_le_bytes()));
        self.envs.iter().for_each(|v| body.extend_from_slice(&v.to_le_bytes()));
        self.mechanisms.iter().for_each(|v| body.extend_from_slice(&v.to_le_bytes()));
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        if read_exact(&mut r, 8)? != MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let len = u64::from_le_bytes(read_exact(&mut r, 8)?.try_into().expect("8 bytes")) as usize;
        if len > 1 << 30 {
            return Err(Error::Format("dataset header is implausibly large".into()));
        }
        let header: Header = serde_json::from_slice(&read_exact(&mut r, len)?)?;
        let n = header.n;
        let f32s = |bytes: Vec<u8>| bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let f64s = |bytes: Vec<u8>| bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let features = f32s(read_exact(&mut r, checked_len(n, header.feature_dim, 4)?)?);
        let labels = f64s(read_exact(&mut r, checked_len(n, header.label_dim, 8)?)?);
        let envs = read_exact(&mut r, checked_len(n, 1, 8)?)?
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mechanisms = f64s(read_exact(&mut r, checked_len(n, header.mech_dim, 8)?)?);
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after dataset body", rest.len())));
        }
        let ds = EnvironmentDataset {
            family: header.family,
            gen_config: header.gen_config,
            seed: header.seed,
            feature_dim: header.feature_dim,
            label_dim: header.label_dim,
            mech_dim: header.mech_dim,
            features,
            labels,
            envs,
            mechanisms,
        };
        ds.validate()?;
        if ds.env_counts() != header.env_counts {
            return Err(Error::Format("environment counts disagree with header".into()));
        }
        Ok(ds)
    }

    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        Ok(buf)
    }

    /// Pure-JSON form for small datasets.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: EnvironmentDataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Read either container form, sniffing the magic bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(MAGIC) {
            Self::read_binary(bytes)
        } else {
            Self::from_json(std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?)
        }
    }
}
