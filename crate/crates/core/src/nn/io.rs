//! Weight snapshot format.
//!
//! Little-endian layout:
//!
//! | field            | type                     |
//! |------------------|--------------------------|
//! | magic            | `b"PLTRMLP\0"` (8 bytes) |
//! | version          | u32 (= 1)                |
//! | n_layers         | u32                      |
//! | layer_sizes      | u32 × (n_layers + 1)     |
//! | activation codes | u8 × n_layers            |
//! | per layer        | weights f32 × (out·in) row-major, then bias f32 × out |
//!
//! Activation codes: 0 identity, 1 relu, 2 tanh.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{Activation, Dense, Mlp};
use super::NnError;

pub const MAGIC: &[u8; 8] = b"PLTRMLP\0";
pub const VERSION: u32 = 1;

impl Mlp<f32> {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers().len() as u32).to_le_bytes())?;
        for s in self.layer_sizes() {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for a in self.activations() {
            w.write_all(&[a.code()])?;
        }
        for l in self.layers() {
            for &x in l.weights().iter().chain(l.bias()) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let n_layers = read_u32(&mut r)? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(NnError::Format(format!(
                "implausible layer count {n_layers}"
            )));
        }
        let mut sizes = Vec::with_capacity(n_layers + 1);
        for _ in 0..=n_layers {
            sizes.push(read_u32(&mut r)? as usize);
        }
        let mut codes = vec![0u8; n_layers];
        r.read_exact(&mut codes)?;
        let mut layers = Vec::with_capacity(n_layers);
        for (i, &code) in codes.iter().enumerate() {
            let act = Activation::from_code(code)
                .ok_or_else(|| NnError::Format(format!("unknown activation code {code}")))?;
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let weights = read_f32s(&mut r, fan_in * fan_out)?;
            let bias = read_f32s(&mut r, fan_out)?;
            layers.push(Dense::from_parts(fan_in, fan_out, act, weights, bias)?);
        }
        Mlp::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, NnError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout() {
        let net = Mlp::from_layers(vec![Dense::from_parts(
            2,
            1,
            Activation::Tanh,
            vec![1.0, -2.0],
            vec![0.5],
        )
        .unwrap()])
        .unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1u32.to_le_bytes());
        assert_eq!(&buf[16..20], &2u32.to_le_bytes());
        assert_eq!(&buf[20..24], &1u32.to_le_bytes());
        assert_eq!(buf[24], 2);
        assert_eq!(&buf[25..29], &1.0f32.to_le_bytes());
        assert_eq!(&buf[29..33], &(-2.0f32).to_le_bytes());
        assert_eq!(&buf[33..37], &0.5f32.to_le_bytes());
        assert_eq!(buf.len(), 37);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Mlp<f32> =
            Mlp::with_hidden(3, &[4], 2, Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Mlp::read_from(&buf[..]), Err(NnError::Io(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOTANMLP\x01\0\0\0".to_vec();
        assert!(matches!(Mlp::read_from(&buf[..]), Err(NnError::Format(_))));
    }
}
