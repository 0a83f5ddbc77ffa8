//! Binary channel dump.
//!
//! Layout (little-endian): magic `b"THPC"`, version `u32`, `K: u32`, `M: u32`,
//! `count: u64`, then `count` samples, each `K*M` complex entries in row-major
//! order written as interleaved `(re, im)` `f64` pairs.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::ChannelSample;
use crate::error::{Result, ThpError};
use crate::C64;

pub const MAGIC: &[u8; 4] = b"THPC";
pub const VERSION: u32 = 1;

pub fn write_dump<W: Write>(mut out: W, samples: &[ChannelSample]) -> Result<()> {
    let (k, m) = match samples.first() {
        Some(s) => (s.users(), s.antennas()),
        None => (0, 0),
    };
    if samples.iter().any(|s| s.users() != k || s.antennas() != m) {
        return Err(ThpError::Format("samples have mixed dimensions".into()));
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(k as u32).to_le_bytes())?;
    out.write_all(&(m as u32).to_le_bytes())?;
    out.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        for r in 0..k {
            for c in 0..m {
                let z = s.h[(r, c)];
                out.write_all(&z.re.to_le_bytes())?;
                out.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_dump<R: Read>(mut input: R) -> Result<Vec<ChannelSample>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ThpError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(ThpError::Format(format!("unsupported version {version}")));
    }
    let k = read_u32(&mut input)? as usize;
    let m = read_u32(&mut input)? as usize;
    let mut count = [0u8; 8];
    input.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for idx in 0..count {
        let mut h = DMatrix::zeros(k, m);
        for r in 0..k {
            for c in 0..m {
                let re = read_f64(&mut input)?;
                let im = read_f64(&mut input)?;
                h[(r, c)] = C64::new(re, im);
            }
        }
        samples.push(ChannelSample {
            h,
            frame_index: idx,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelConfig, GeometryChannel, SystemDims};
    use crate::rng::stream_rng;

    #[test]
    fn dump_round_trip_and_header() {
        let cfg = ChannelConfig::new(SystemDims::new(4, 2, 2).unwrap(), 3);
        let model = GeometryChannel::new(&cfg).unwrap();
        let mut rng = stream_rng(3, 1);
        let samples: Vec<_> = (0..3).map(|i| model.sample(&mut rng, i)).collect();
        let mut bytes = Vec::new();
        write_dump(&mut bytes, &samples).unwrap();
        assert_eq!(&bytes[..4], b"THPC");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 3 * 2 * 4 * 16);
        // first entry of the first sample follows the header directly
        let re = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        assert_eq!(re, samples[0].h[(0, 0)].re);
        let back = read_dump(bytes.as_slice()).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn rejects_wrong_magic() {
        let bytes = b"XXXX\x01\x00\x00\x00".to_vec();
        assert!(matches!(read_dump(bytes.as_slice()), Err(ThpError::Format(_))));
    }
}
