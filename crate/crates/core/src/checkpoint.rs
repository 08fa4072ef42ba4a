//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "MFLSTMCK"
//! version          u32
//! role, model,
//! config_digest    u32 length + UTF-8 bytes each
//! hidden, input,
//! output           u64 each
//! normalizer count u64, then per station: id string, min f64, max f64
//! param count      u64, then that many f64 in buffer order
//! ```
//!
//! The parameter buffer is `[W_f, W_i, W_c, W_o, b_f, b_i, b_c, b_o, W_y, b_y]`
//! with every matrix row-major.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow_data::Normalizer;
use crate::lstm::{Dims, ModelParams};

const MAGIC: &[u8; 8] = b"MFLSTMCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// What the parameters are, e.g. `theta_0` or `adapted`.
    pub role: String,
    pub model: String,
    pub config_digest: String,
    pub params: ModelParams,
    pub normalizers: BTreeMap<String, Normalizer>,
}

/// Hex SHA-256 of a serialized configuration.
pub fn config_digest(config_text: &str) -> String {
    Sha256::digest(config_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(format!("bad string: {e}")))
    }
}

impl Checkpoint {
    pub fn new(role: &str, model: &str, config_digest: &str, params: ModelParams) -> Self {
        Self {
            role: role.into(),
            model: model.into(),
            config_digest: config_digest.into(),
            params,
            normalizers: BTreeMap::new(),
        }
    }

    pub fn with_normalizers(mut self, normalizers: BTreeMap<String, Normalizer>) -> Self {
        self.normalizers = normalizers;
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.params.dims();
        let mut out = Vec::with_capacity(64 + 8 * self.params.values().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.role);
        put_str(&mut out, &self.model);
        put_str(&mut out, &self.config_digest);
        for d in [dims.hidden, dims.input, dims.output] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.normalizers.len() as u64).to_le_bytes());
        for (id, n) in &self.normalizers {
            put_str(&mut out, id);
            out.extend_from_slice(&n.min.to_le_bytes());
            out.extend_from_slice(&n.max.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.values().len() as u64).to_le_bytes());
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf };
        if c.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = c.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let role = c.string()?;
        let model = c.string()?;
        let config_digest = c.string()?;
        let dims = Dims::new(c.usize()?, c.usize()?, c.usize()?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_norm = c.usize()?;
        let mut normalizers = BTreeMap::new();
        for _ in 0..n_norm {
            let id = c.string()?;
            let n = Normalizer::new(c.f64()?, c.f64()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
            normalizers.insert(id, n);
        }
        let n_params = c.usize()?;
        if n_params != dims.num_params() {
            return Err(Error::Checkpoint(format!(
                "{n_params} parameters stored for {dims:?}, expected {}",
                dims.num_params()
            )));
        }
        let values = (0..n_params).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        if !c.buf.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", c.buf.len())));
        }
        let params = ModelParams::from_values(dims, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            role,
            model,
            config_digest,
            params,
            normalizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::init_params;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let dims = Dims::new(5, 6, 2).unwrap();
        let params = init_params(dims, &mut ChaCha8Rng::seed_from_u64(1));
        let norms = [
            ("a".to_string(), Normalizer::new(0.0, 123.5).unwrap()),
            ("b".to_string(), Normalizer::new(3.0, 3.0).unwrap()),
        ]
        .into();
        Checkpoint::new("theta_0", "meta-lstm", &config_digest("x = 1"), params).with_normalizers(norms)
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta0.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params.checksum(), ck.params.checksum());
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            config_digest(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_finite_values_survive(values in proptest::collection::vec(-1e300f64..1e300, 2 * 4 * 3 + 8 + 2 + 1)) {
            let dims = Dims::new(2, 1, 1).unwrap();
            let params = ModelParams::from_values(dims, values).unwrap();
            let ck = Checkpoint::new("adapted", "lstm", "d", params);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            prop_assert_eq!(back.params.checksum(), ck.params.checksum());
        }
    }
}
