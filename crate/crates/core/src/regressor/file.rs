//! Binary model files and band-tagged model directories.
//!
//! Layout (little-endian): magic `MTF1`, u32 version, u32 band id, the layer
//! table, f64 dropout rate, f32 parameters, f32 batch-norm running mean and variance, then a
//! SHA-256 digest of every preceding byte.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::arch::{Architecture, Layout};
use super::network::CnnModel;
use crate::bands::{BAND_COUNT, OCTAVE_CENTERS_HZ};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTF1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn encode_model(model: &CnnModel) -> Vec<u8> {
    encode_with_version(model, FORMAT_VERSION)
}

pub(crate) fn encode_with_version(model: &CnnModel, version: u32) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(version);
    put(model.band as u32);
    put(a.input_len as u32);
    for stage in 0..4 {
        put(a.convs[stage].0 as u32);
        put(a.convs[stage].1 as u32);
        put(a.pool_after[stage] as u32);
    }
    put(a.pool_size as u32);
    put(a.pool_stride as u32);
    put(model.params.len() as u32);
    put(model.running_mean.len() as u32);
    out.extend_from_slice(&model.dropout.to_le_bytes());
    for v in model
        .params
        .iter()
        .chain(&model.running_mean)
        .chain(&model.running_var)
    {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<CnnModel> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Model("bad magic, not a model file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < DIGEST_LEN + 8 {
        return Err(Error::Model("truncated model file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let band = r.u32()? as usize;
    let input_len = r.u32()? as usize;
    let mut convs = [(0, 0); 4];
    let mut pool_after = [false; 4];
    for stage in 0..4 {
        convs[stage] = (r.u32()? as usize, r.u32()? as usize);
        pool_after[stage] = r.u32()? != 0;
    }
    let pool_size = r.u32()? as usize;
    let pool_stride = r.u32()? as usize;
    let n_params = r.u32()? as usize;
    let n_stats = r.u32()? as usize;
    let dropout = r.f64()?;
    let expected_len = r.at + 4 * (n_params + 2 * n_stats) + DIGEST_LEN;
    if bytes.len() != expected_len {
        return Err(Error::Model(format!(
            "truncated or oversized model file: {} bytes, expected {expected_len}",
            bytes.len()
        )));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Model("checksum mismatch".into()));
    }
    if band >= BAND_COUNT {
        return Err(Error::Model(format!("band id {band} out of range")));
    }
    let arch = Architecture {
        input_len,
        convs,
        pool_after,
        pool_size,
        pool_stride,
    };
    check_arch(&arch)?;
    let layout = Layout::new(&arch);
    if layout.total != n_params || n_stats != convs[0].0 {
        return Err(Error::Model(format!(
            "layer table implies {} parameters and {} channels, file has {n_params} and {n_stats}",
            layout.total, convs[0].0
        )));
    }
    let mut read_vec = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| r.f32().map(f64::from)).collect() };
    let params = read_vec(n_params)?;
    let running_mean = read_vec(n_stats)?;
    let running_var = read_vec(n_stats)?;
    if params
        .iter()
        .chain(&running_mean)
        .chain(&running_var)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Model("non-finite parameter".into()));
    }
    Ok(CnnModel {
        arch,
        layout,
        params,
        running_mean,
        running_var,
        dropout,
        band,
    })
}

fn check_arch(a: &Architecture) -> Result<()> {
    let ok = a.pool_size >= 1
        && a.pool_stride >= 1
        && a.convs.iter().all(|&(f, k)| f >= 1 && k >= 1)
        && {
            let mut len = a.input_len as i64;
            let mut fine = true;
            for s in 0..4 {
                len -= a.convs[s].1 as i64 - 1;
                if a.pool_after[s] {
                    fine &= len >= a.pool_size as i64;
                    len = (len - a.pool_size as i64) / a.pool_stride as i64 + 1;
                }
                fine &= len >= 1;
            }
            fine
        };
    if ok {
        Ok(())
    } else {
        Err(Error::Model("inconsistent layer table".into()))
    }
}

pub fn save_model(model: &CnnModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<CnnModel> {
    decode_model(&std::fs::read(path)?)
}

/// `band_<hz>.mtf` inside a models directory.
pub fn model_file_name(band: usize) -> String {
    format!("band_{}.mtf", OCTAVE_CENTERS_HZ[band] as u32)
}

pub fn save_models(models: &[CnnModel], dir: &Path) -> Result<Vec<PathBuf>> {
    if models.len() != BAND_COUNT {
        return Err(Error::BandMismatch(format!(
            "expected {BAND_COUNT} models, got {}",
            models.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (band, m) in models.iter().enumerate() {
        if m.band != band {
            return Err(band_mismatch(band, m.band));
        }
        let p = dir.join(model_file_name(band));
        save_model(m, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Loads the seven band models, checking each file's band id against its name.
pub fn load_models(dir: &Path) -> Result<Vec<CnnModel>> {
    let mut out = Vec::with_capacity(BAND_COUNT);
    for band in 0..BAND_COUNT {
        let p = dir.join(model_file_name(band));
        if !p.exists() {
            return Err(Error::Model(format!("missing model file {}", p.display())));
        }
        let m = load_model(&p)?;
        if m.band != band {
            return Err(band_mismatch(band, m.band));
        }
        out.push(m);
    }
    Ok(out)
}

pub(crate) fn band_mismatch(expected: usize, found: usize) -> Error {
    let hz = |b: usize| {
        OCTAVE_CENTERS_HZ
            .get(b)
            .map_or_else(|| format!("band #{b}"), |f| format!("{f} Hz"))
    };
    Error::BandMismatch(format!(
        "model for {} found where {} was expected",
        hz(found),
        hz(expected)
    ))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Model("truncated model file".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
