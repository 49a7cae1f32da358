//! Binary model files: magic, format version, JSON network spec, then named
//! tensors each with a shape header and little-endian `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::network::{Layer, Network};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WSYNTNET";
pub const FORMAT_VERSION: u32 = 1;

fn shapes(net: &Network<f32>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for layer in net.layers() {
        match layer {
            Layer::Conv(c) => {
                out.push(vec![c.out_channels, c.in_channels, c.kernel, c.kernel]);
                out.push(vec![c.out_channels]);
            }
            Layer::Fc(f) => {
                out.push(vec![f.outputs, f.inputs]);
                out.push(vec![f.outputs]);
            }
            _ => {}
        }
    }
    out.push(vec![net.head().outputs, net.head().inputs]);
    out.push(vec![net.head().outputs]);
    out
}

pub fn write_checkpoint<W: Write>(net: &Network<f32>, mut w: W) -> std::io::Result<()> {
    let spec = serde_json::to_vec(net.spec()).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(spec.len() as u32).to_le_bytes())?;
    w.write_all(&spec)?;
    let names = net.param_names();
    let params = net.params();
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for ((name, shape), values) in names.iter().zip(shapes(net)).zip(params) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in &shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (a, b) = self.bytes.split_at(n);
        self.bytes = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network<f32>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut rd = Reader { bytes: &bytes };
    if rd.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a model file".into()));
    }
    let version = rd.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = rd.u32()? as usize;
    let spec: NetworkSpec = serde_json::from_slice(rd.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("bad spec: {e}")))?;
    let mut net = Network::<f32>::new(&spec, 0)?;
    let names = net.param_names();
    let expected = shapes(&net);
    let count = rd.u32()? as usize;
    if count != names.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, spec needs {}",
            names.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (name, shape) in names.iter().zip(&expected) {
        let n = rd.u32()? as usize;
        let stored = String::from_utf8_lossy(rd.take(n)?).into_owned();
        if &stored != name {
            return Err(Error::Checkpoint(format!("expected tensor {name}, found {stored}")));
        }
        let ndim = rd.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| rd.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Checkpoint(format!("{name}: shape {dims:?}, expected {shape:?}")));
        }
        let total: usize = dims.iter().product();
        let raw = rd.take(total * 4)?;
        let v: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Checkpoint(format!("{name} holds non-finite values")));
        }
        values.push(v);
    }
    if !rd.bytes.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    net.set_params(values)?;
    Ok(net)
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::{HeadSpec, Widths};

    fn small() -> Network<f32> {
        let spec = NetworkSpec::base(
            Widths {
                conv: [2, 3, 4, 4],
                fc: 8,
            },
            HeadSpec::CharSeq,
            0.5,
        );
        Network::new(&spec, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), net);
    }

    #[test]
    fn corruption_is_detected() {
        let net = small();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_checkpoint(&bad[..]).is_err());
        buf.push(0);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
