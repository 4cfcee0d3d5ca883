//! On-disk formats: JSON documents with round-trip-exact floats, and a
//! little-endian binary frame stream for time series.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ispec_core::green::GreenRecord;
use ispec_core::manifold::{SigmaDescriptor, SpectralDataset};
use ispec_core::transmission::SpaceTimeField;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::Formatter;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Core(#[from] ispec_core::error::Error),
}

/// Compact JSON whose floats carry 17 significant digits; non-finite
/// values become `null`.
struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser).expect("serializing into memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    std::fs::write(path, to_json(value)).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dataset(path: &Path) -> Result<SpectralDataset, IoError> {
    let data: SpectralDataset = read_json(path)?;
    if data.version != "1" {
        return Err(IoError::Format {
            path: path.display().to_string(),
            msg: format!("unsupported dataset version {:?}", data.version),
        });
    }
    data.validate()?;
    Ok(data)
}

const MAGIC: &[u8; 4] = b"ISPF";
const STREAM_VERSION: u32 = 1;

/// Header of a frame stream: the shape of one frame and the time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameHeader {
    pub dims: Vec<usize>,
    pub dt: f64,
    pub frames: usize,
}

impl FrameHeader {
    pub fn frame_len(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Layout: `ISPF`, u32 version, u32 rank, u64 per dim, f64 dt, u64 frame
/// count, then the frames as f64, all little-endian.
pub fn write_frames<W: Write>(mut w: W, dims: &[usize], dt: f64, frames: &[Vec<f64>]) -> io::Result<()> {
    let len: usize = dims.iter().product();
    if let Some(bad) = frames.iter().find(|f| f.len() != len) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("frame of {} values does not match dims {dims:?}", bad.len()),
        ));
    }
    w.write_all(MAGIC)?;
    w.write_all(&STREAM_VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&dt.to_le_bytes())?;
    w.write_all(&(frames.len() as u64).to_le_bytes())?;
    for frame in frames {
        for v in frame {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_frames<R: Read>(mut r: R) -> io::Result<(FrameHeader, Vec<Vec<f64>>)> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut four = [0u8; 4];
    let mut eight = [0u8; 8];
    r.read_exact(&mut four)?;
    if &four != MAGIC {
        return Err(bad("not a frame stream".into()));
    }
    r.read_exact(&mut four)?;
    let version = u32::from_le_bytes(four);
    if version != STREAM_VERSION {
        return Err(bad(format!("unsupported frame stream version {version}")));
    }
    r.read_exact(&mut four)?;
    let rank = u32::from_le_bytes(four) as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut eight)?;
        dims.push(u64::from_le_bytes(eight) as usize);
    }
    r.read_exact(&mut eight)?;
    let dt = f64::from_le_bytes(eight);
    r.read_exact(&mut eight)?;
    let count = u64::from_le_bytes(eight) as usize;
    let header = FrameHeader { dims, dt, frames: count };
    let len = header.frame_len();
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let mut frame = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut eight)?;
            frame.push(f64::from_le_bytes(eight));
        }
        frames.push(frame);
    }
    Ok((header, frames))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_field(path: &Path, field: &SpaceTimeField) -> Result<(), IoError> {
    let dims = [field.frames.first().map_or(0, Vec::len)];
    write_frames(create(path)?, &dims, field.dt * field.record_every as f64, &field.frames).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// A Green record travels as frames of shape `[|Σ|, |Σ|]`; the Σ descriptor
/// and manifold id go in a JSON sidecar.
pub fn write_green_record(path: &Path, record: &GreenRecord) -> Result<(), IoError> {
    let s = record.sigma_len();
    let frames: Vec<Vec<f64>> = record.samples.iter().map(|f| f.iter().flatten().copied().collect()).collect();
    write_frames(create(path)?, &[s, s], record.dt, &frames).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    write_json(&sidecar(path), &(record.manifold_id.clone(), record.sigma.clone()))
}

pub fn read_green_record(path: &Path) -> Result<GreenRecord, IoError> {
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let (header, frames) = read_frames(BufReader::new(file)).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let (manifold_id, sigma): (String, SigmaDescriptor) = read_json(&sidecar(path))?;
    let s = sigma.weights.len();
    if header.dims != [s, s] {
        return Err(IoError::Format {
            path: path.display().to_string(),
            msg: format!("frame dims {:?} do not match |Σ| = {s}", header.dims),
        });
    }
    let samples = frames.into_iter().map(|f| f.chunks(s).map(<[f64]>::to_vec).collect()).collect();
    Ok(GreenRecord {
        manifold_id,
        sigma,
        dt: header.dt,
        samples,
    })
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};

    #[test]
    fn frames_round_trip() {
        let frames = vec![vec![1.0, -2.5, 3.0, 0.0], vec![f64::MIN_POSITIVE, 1e300, -0.0, 7.0]];
        let mut buf = Vec::new();
        write_frames(&mut buf, &[2, 2], 0.125, &frames).unwrap();
        let (h, back) = read_frames(buf.as_slice()).unwrap();
        assert_eq!(h.dims, vec![2, 2]);
        assert_eq!(h.dt, 0.125);
        assert_eq!(back, frames);
        assert!(write_frames(Vec::new(), &[3], 1.0, &frames).is_err());
        assert!(read_frames(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn non_finite_floats_become_null() {
        assert_eq!(to_json(&vec![1.0, f64::NAN]), "[1.0000000000000000e0,null]\n");
    }

    proptest! {
        #[test]
        fn floats_round_trip_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: Vec<f64> = serde_json::from_str(&to_json(&vec![v])).unwrap();
            prop_assert_eq!(back[0].to_bits(), v.to_bits());
        }
    }
}
