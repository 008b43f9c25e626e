//! Block files shared by the reconciliation commands.
//!
//! Observation files hold consecutive blocks with no header: packed bits
//! (LSB-first) for the BSC and little-endian `f64` per symbol for BI-AWGN.
//! Key files use the packed-bit layout. Verified-key logs hold, for every
//! verified block in order, its id as `u64` followed by the packed key.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pqkd_core::channel::{ChannelModel, Observations};
use pqkd_core::construction::{pack_bits, unpack_bits};
use pqkd_core::polar_core::BitBlock;

fn block_bytes(channel: &ChannelModel, len: usize) -> usize {
    match channel {
        ChannelModel::Bsc { .. } => len.div_ceil(8),
        ChannelModel::BiAwgn { .. } => 8 * len,
    }
}

pub fn encode_observations(obs: &Observations) -> Vec<u8> {
    match obs {
        Observations::Bits(bits) => pack_bits(bits.iter().copied()),
        Observations::Samples(ys) => ys.iter().flat_map(|y| y.to_le_bytes()).collect(),
    }
}

/// All blocks of an observation file, in block-id order.
pub struct ObservationFile {
    bytes: Vec<u8>,
    channel: ChannelModel,
    len: usize,
}

impl ObservationFile {
    pub fn load(path: &Path, channel: ChannelModel, len: usize) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading observations {}", path.display()))?;
        let per = block_bytes(&channel, len);
        if bytes.is_empty() || bytes.len() % per != 0 {
            bail!(
                "{}: {} bytes is not a whole number of {}-byte blocks",
                path.display(),
                bytes.len(),
                per
            );
        }
        Ok(ObservationFile { bytes, channel, len })
    }

    pub fn blocks(&self) -> usize {
        self.bytes.len() / block_bytes(&self.channel, self.len)
    }

    pub fn get(&self, block_id: u64) -> Result<Observations, String> {
        let per = block_bytes(&self.channel, self.len);
        let i = usize::try_from(block_id).map_err(|e| e.to_string())?;
        if i >= self.blocks() {
            return Err(format!("no block {block_id} in a file of {} blocks", self.blocks()));
        }
        let chunk = &self.bytes[i * per..(i + 1) * per];
        Ok(match self.channel {
            ChannelModel::Bsc { .. } => Observations::Bits(unpack_bits(chunk, self.len)),
            ChannelModel::BiAwgn { .. } => Observations::Samples(
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect(),
            ),
        })
    }
}

pub fn load_keys(path: &Path, len: usize) -> Result<Vec<BitBlock>> {
    let bytes = fs::read(path).with_context(|| format!("reading keys {}", path.display()))?;
    let per = len.div_ceil(8);
    if bytes.is_empty() || bytes.len() % per != 0 {
        bail!("{}: {} bytes is not a whole number of {per}-byte blocks", path.display(), bytes.len());
    }
    bytes
        .chunks_exact(per)
        .map(|c| BitBlock::new(unpack_bits(c, len)).map_err(Into::into))
        .collect()
}

/// Appends verified blocks as `id, packed key` records.
pub struct KeyLog {
    out: Option<std::io::BufWriter<fs::File>>,
}

impl KeyLog {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => Some(std::io::BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => None,
        };
        Ok(KeyLog { out })
    }

    pub fn record(&mut self, block_id: u64, key: &[u8]) -> Result<()> {
        if let Some(w) = &mut self.out {
            w.write_all(&block_id.to_le_bytes())?;
            w.write_all(&pack_bits(key.iter().copied()))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if let Some(mut w) = self.out {
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for (ch, obs) in [
            (ChannelModel::Bsc { p: 0.1 }, Observations::Bits(vec![1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 0, 1])),
            (
                ChannelModel::BiAwgn { snr: 1.0 },
                Observations::Samples((0..16).map(|i| i as f64 * 0.25 - 1.0).collect()),
            ),
        ] {
            let path = dir.path().join("obs");
            let mut bytes = encode_observations(&obs);
            bytes.extend(encode_observations(&obs));
            fs::write(&path, bytes).unwrap();
            let f = ObservationFile::load(&path, ch, 16).unwrap();
            assert_eq!(f.blocks(), 2);
            assert_eq!(f.get(1).unwrap(), obs);
            assert!(f.get(2).is_err());
        }
    }

    #[test]
    fn key_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys");
        fs::write(&path, [0b1010_0101u8, 0xff]).unwrap();
        let keys = load_keys(&path, 8).unwrap();
        assert_eq!(keys.len(), 2);
        assert_eq!(keys[0].as_slice(), &[1, 0, 1, 0, 0, 1, 0, 1]);
        assert!(load_keys(&path, 16).unwrap().len() == 1);
        assert!(load_keys(&path, 32).is_err());
    }
}
