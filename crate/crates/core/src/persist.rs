//! Binary file formats. All integers are little-endian `u32`, all reals
//! little-endian IEEE `f64`.
//!
//! | file          | layout                                                      |
//! |---------------|-------------------------------------------------------------|
//! | model         | `BTPM0001`, F, K, M, W (row-major F·K), a (F), b (K)        |
//! | AIS cache     | `AISZ0001`, then records of (N, ln Z, ESS)                  |
//! | feature matrix| `FEAT0001`, rows, cols, row-major values                    |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::FeatureMatrix;
use crate::orsm::OrsmModel;
use crate::params::ModelParams;
use crate::partition::{AisCache, AisEstimate};

pub const MODEL_MAGIC: &[u8; 8] = b"BTPM0001";
pub const AIS_MAGIC: &[u8; 8] = b"AISZ0001";
pub const FEATURE_MAGIC: &[u8; 8] = b"FEAT0001";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 8], what: &str) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            return Err(Error::Format(format!(
                "{what}: bad magic (expected {:?})",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Reader { bytes, pos: 8 })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Format(format!(
                "{what}: truncated, missing {} bytes",
                n - available
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(count * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{what}: {} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_model(model: &OrsmModel) -> Vec<u8> {
    let p = &model.params;
    let mut out = Vec::with_capacity(20 + 8 * p.n_parameters());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(p.n_hidden() as u32).to_le_bytes());
    out.extend_from_slice(&(p.vocab_size() as u32).to_le_bytes());
    out.extend_from_slice(&model.softmaxes().to_le_bytes());
    put_f64s(&mut out, &p.weights);
    put_f64s(&mut out, &p.hidden_bias);
    put_f64s(&mut out, &p.word_bias);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<OrsmModel> {
    let what = "model file";
    let mut r = Reader::new(bytes, MODEL_MAGIC, what)?;
    let f = r.u32(what)? as usize;
    let k = r.u32(what)? as usize;
    let m = r.u32(what)?;
    if f == 0 || k == 0 {
        return Err(Error::Format(format!("{what}: F and K must be positive")));
    }
    let weights = r.f64s(f * k, what)?;
    let hidden = r.f64s(f, what)?;
    let word = r.f64s(k, what)?;
    r.finish(what)?;
    Ok(OrsmModel::new(ModelParams::from_parts(f, k, weights, hidden, word)?, m))
}

pub fn save_model(model: &OrsmModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<OrsmModel> {
    decode_model(&fs::read(path)?)
}

pub fn encode_ais_cache(cache: &AisCache) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 20 * cache.entries.len());
    out.extend_from_slice(AIS_MAGIC);
    for est in cache.entries.values() {
        out.extend_from_slice(&est.n.to_le_bytes());
        out.extend_from_slice(&est.log_z.to_le_bytes());
        out.extend_from_slice(&est.effective_sample_size.to_le_bytes());
    }
    out
}

pub fn decode_ais_cache(bytes: &[u8]) -> Result<AisCache> {
    let what = "AIS cache";
    let mut r = Reader::new(bytes, AIS_MAGIC, what)?;
    let mut cache = AisCache::default();
    while r.pos < bytes.len() {
        let n = r.u32(what)?;
        let v = r.f64s(2, what)?;
        cache.insert(AisEstimate {
            n,
            log_z: v[0],
            log_weight_variance: f64::NAN,
            effective_sample_size: v[1],
            dropped_chains: 0,
        });
    }
    Ok(cache)
}

pub fn save_ais_cache(cache: &AisCache, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_ais_cache(cache))
}

pub fn load_ais_cache(path: impl AsRef<Path>) -> Result<AisCache> {
    decode_ais_cache(&fs::read(path)?)
}

pub fn encode_features(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * features.data().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    put_f64s(&mut out, features.data());
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let what = "feature file";
    let mut r = Reader::new(bytes, FEATURE_MAGIC, what)?;
    let rows = r.u32(what)? as usize;
    let cols = r.u32(what)? as usize;
    let data = r.f64s(rows * cols, what)?;
    r.finish(what)?;
    FeatureMatrix::new(rows, cols, data)
}

pub fn save_features(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_features(features))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    decode_features(&fs::read(path)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_model() -> OrsmModel {
        let p = ModelParams::from_parts(2, 3, vec![0.5, -1.0, 2.0, 0.0, -0.0, 1e-300], vec![0.1, -0.2], vec![1.0, 2.0, 3.0])
            .unwrap();
        OrsmModel::new(p, 7)
    }

    #[test]
    fn model_layout_is_exact() {
        let bytes = encode_model(&sample_model());
        assert_eq!(&bytes[..8], b"BTPM0001");
        assert_eq!(&bytes[8..20], &[2, 0, 0, 0, 3, 0, 0, 0, 7, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 8 * (6 + 2 + 3));
        assert_eq!(&bytes[20..28], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 8..], &3.0f64.to_le_bytes());
    }

    #[test]
    fn model_round_trip_is_bitwise() {
        let m = sample_model();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back.softmaxes(), 7);
        let bits = |p: &ModelParams| p.weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&m.params));
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_models_are_rejected() {
        let bytes = encode_model(&sample_model());
        let err = decode_model(&bytes[..bytes.len() - 5]).unwrap_err().to_string();
        assert!(err.contains("missing 5 bytes"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).unwrap_err().to_string().contains("magic"));
        assert!(decode_model(b"BTPM").is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_model(&long).is_err());
    }

    #[test]
    fn ais_cache_round_trip() {
        let mut c = AisCache::default();
        for n in [3u32, 1, 9] {
            c.insert(AisEstimate {
                n,
                log_z: n as f64 * 1.5,
                log_weight_variance: 0.0,
                effective_sample_size: 100.0,
                dropped_chains: 0,
            });
        }
        let bytes = encode_ais_cache(&c);
        assert_eq!(&bytes[..8], b"AISZ0001");
        assert_eq!(bytes.len(), 8 + 3 * 20);
        let back = decode_ais_cache(&bytes).unwrap();
        assert_eq!(back.get(9).unwrap().log_z, 13.5);
        assert!(decode_ais_cache(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn features_round_trip(rows in 0usize..6, cols in 1usize..5, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64) / 1000.0).collect();
            let fm = FeatureMatrix::new(rows, cols, data).unwrap();
            let back = decode_features(&encode_features(&fm)).unwrap();
            prop_assert_eq!(back, fm);
        }
    }
}
