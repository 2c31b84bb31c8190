//! VSIM binary volume format.
//!
//! ```text
//! "VSIM" | u32 version | u32 ndim | u32 present_mask | u32 dims[ndim] | u32 dtype | payload
//! ```
//!
//! All integers are little-endian. `present_mask` flags which of the axes
//! t (bit 4), c (bit 3), z (bit 2), y (bit 1), x (bit 0) are stored; `dims` lists the
//! present ones in t, c, z, y, x order. Absent axes have extent 1. The payload is
//! dtype 0 (f32) in t, c, z, y, x order with x fastest.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{io_at, Error, Result};
use crate::field::{FieldKind, VolumeField};

pub const MAGIC: [u8; 4] = *b"VSIM";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

const AXIS_BITS: [u32; 5] = [1 << 4, 1 << 3, 1 << 2, 1 << 1, 1];

/// Decoded header: extents of (t, c, z, y, x) and the payload offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VsimHeader {
    pub present_mask: u32,
    pub shape: [usize; 5],
    pub header_len: u64,
}

impl VsimHeader {
    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// Sample count, or `ShapeOverflow` when it exceeds addressable memory.
    pub fn samples(&self) -> Result<usize> {
        let n = self.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::ShapeOverflow)?;
        if n.checked_mul(4).map_or(true, |b| b > isize::MAX as usize) {
            return Err(Error::ShapeOverflow);
        }
        Ok(n)
    }

    pub fn payload_bytes(&self) -> Result<u64> {
        Ok(self.samples()? as u64 * 4)
    }
}

fn encode_header(present_mask: u32, shape: [usize; 5]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(40);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let dims: Vec<u32> = AXIS_BITS
        .iter()
        .zip(shape)
        .filter(|(&bit, _)| present_mask & bit != 0)
        .map(|(_, d)| u32::try_from(d).map_err(|_| Error::ShapeOverflow))
        .collect::<Result<_>>()?;
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    out.extend_from_slice(&present_mask.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    Ok(out)
}

fn read_u32(r: &mut impl Read, consumed: &mut u64, file_len: u64) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TruncatedFile { expected: *consumed + 4, actual: file_len },
        _ => Error::Io(e),
    })?;
    *consumed += 4;
    Ok(u32::from_le_bytes(b))
}

/// Parses a header from the start of `r`. `file_len` is the total input size.
pub fn read_header(r: &mut impl Read, file_len: u64) -> Result<VsimHeader> {
    let mut consumed = 0u64;
    let magic = read_u32(r, &mut consumed, file_len)?.to_le_bytes();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = read_u32(r, &mut consumed, file_len)?;
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let ndim = read_u32(r, &mut consumed, file_len)?;
    let mask = read_u32(r, &mut consumed, file_len)?;
    if mask & !0b11111 != 0 || mask.count_ones() != ndim {
        return Err(Error::InvalidArgument(format!("present mask {mask:#b} does not match ndim {ndim}")));
    }
    let mut shape = [1usize; 5];
    for (slot, &bit) in shape.iter_mut().zip(&AXIS_BITS) {
        if mask & bit != 0 {
            *slot = read_u32(r, &mut consumed, file_len)? as usize;
        }
    }
    let dtype = read_u32(r, &mut consumed, file_len)?;
    if dtype != DTYPE_F32 {
        return Err(Error::InvalidArgument(format!("unsupported dtype code {dtype}")));
    }
    Ok(VsimHeader { present_mask: mask, shape, header_len: consumed })
}

fn check_length(header: &VsimHeader, file_len: u64) -> Result<()> {
    let expected = header.header_len.checked_add(header.payload_bytes()?).ok_or(Error::ShapeOverflow)?;
    if file_len < expected {
        return Err(Error::TruncatedFile { expected, actual: file_len });
    }
    if file_len > expected {
        return Err(Error::TrailingData(file_len - expected));
    }
    Ok(())
}

fn decode_payload(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

fn write_file(path: &Path, mask: u32, shape: [usize; 5], fields: &[&VolumeField]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    w.write_all(&encode_header(mask, shape)?)?;
    for f in fields {
        for v in f.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_file(path: &Path) -> Result<(VsimHeader, Vec<f32>)> {
    let mut bytes = Vec::new();
    File::open(path).map_err(io_at(path))?.read_to_end(&mut bytes)?;
    let len = bytes.len() as u64;
    let header = read_header(&mut bytes.as_slice(), len)?;
    check_length(&header, len)?;
    Ok((header, decode_payload(&bytes[header.header_len as usize..])))
}

/// Writes one field with axes (c, z, y, x).
pub fn write_volume(path: &Path, field: &VolumeField) -> Result<()> {
    let [d, h, w] = field.dims();
    write_file(path, 0b01111, [1, field.channels(), d, h, w], &[field])
}

/// Reads a single-frame file. Multi-frame files are rejected.
pub fn read_volume(path: &Path, kind: FieldKind) -> Result<VolumeField> {
    let (header, data) = read_file(path)?;
    if header.frames() != 1 {
        return Err(Error::ShapeMismatch(format!("expected one frame, file holds {}", header.frames())));
    }
    VolumeField::new(kind, header.channels(), header.spatial(), data)
}

/// Writes a stack of equally shaped fields with axes (t, c, z, y, x).
pub fn write_volume_stack(path: &Path, frames: &[VolumeField]) -> Result<()> {
    let first = frames.first().ok_or(Error::EmptyStream)?;
    for f in frames {
        first.ensure_same_shape(f)?;
    }
    let [d, h, w] = first.dims();
    let refs: Vec<&VolumeField> = frames.iter().collect();
    write_file(path, 0b11111, [frames.len(), first.channels(), d, h, w], &refs)
}

pub fn read_volume_stack(path: &Path, kind: FieldKind) -> Result<Vec<VolumeField>> {
    let (header, data) = read_file(path)?;
    let per = header.channels() * header.spatial().iter().product::<usize>();
    if per == 0 {
        return Err(Error::ShapeMismatch("file declares an empty frame".into()));
    }
    data.chunks_exact(per)
        .map(|c| VolumeField::new(kind, header.channels(), header.spatial(), c.to_vec()))
        .collect()
}

/// Random-access reader over a VSIM file that never loads the full payload.
#[derive(Debug)]
pub struct VsimReader {
    file: File,
    header: VsimHeader,
}

impl VsimReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(io_at(path))?;
        let len = file.metadata()?.len();
        let header = read_header(&mut file, len)?;
        check_length(&header, len)?;
        Ok(Self { file, header })
    }

    pub fn header(&self) -> &VsimHeader {
        &self.header
    }

    /// Reads the box `origin..origin+extent` (z, y, x) of every channel of frame `t`.
    pub fn read_block(&mut self, t: usize, origin: [usize; 3], extent: [usize; 3]) -> Result<Vec<f32>> {
        let [_, c, d, h, w] = self.header.shape;
        if t >= self.header.frames() || (0..3).any(|k| origin[k] + extent[k] > [d, h, w][k]) {
            return Err(Error::InvalidArgument(format!("block t={t} {origin:?}+{extent:?} outside file")));
        }
        let mut out = Vec::with_capacity(c * extent.iter().product::<usize>());
        let mut row = vec![0u8; extent[2] * 4];
        for ch in 0..c {
            for z in origin[0]..origin[0] + extent[0] {
                for y in origin[1]..origin[1] + extent[1] {
                    let idx = ((((t * c + ch) * d + z) * h + y) * w + origin[2]) as u64;
                    self.file.seek(SeekFrom::Start(self.header.header_len + idx * 4))?;
                    self.file.read_exact(&mut row)?;
                    out.extend(decode_payload(&row));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(channels: usize, n: usize, seed: u64) -> VolumeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeField::from_fn(FieldKind::Velocity, channels, [n, n, n], |_, _, _, _| rng.gen_range(-5.0..5.0))
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vsim");
        let f = random_field(3, 8, 1);
        write_volume(&path, &f).unwrap();
        let g = read_volume(&path, FieldKind::Velocity).unwrap();
        assert_eq!(f, g);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"VSIM");
        assert_eq!(bytes.len(), 4 * 4 + 4 * 4 + 4 + 3 * 512 * 4);
    }

    #[test]
    fn stack_round_trip_and_block_reads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vsim");
        let frames: Vec<_> = (0..3).map(|s| random_field(2, 6, s)).collect();
        write_volume_stack(&path, &frames).unwrap();
        assert_eq!(read_volume_stack(&path, FieldKind::Velocity).unwrap(), frames);
        let mut r = VsimReader::open(&path).unwrap();
        assert_eq!(r.header().shape, [3, 2, 6, 6, 6]);
        let block = r.read_block(2, [1, 2, 3], [2, 2, 3]).unwrap();
        let mut k = 0;
        for c in 0..2 {
            for z in 1..3 {
                for y in 2..4 {
                    for x in 3..6 {
                        assert_eq!(block[k], frames[2].get(c, z, y, x));
                        k += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vsim");
        write_volume(&path, &random_field(1, 4, 2)).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::VersionUnsupported(2))));

        std::fs::write(&path, &good[..good.len() - 4]).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::TruncatedFile { .. })));

        let mut bad = good.clone();
        bad.extend_from_slice(&[0; 8]);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::TrailingData(8))));

        // declared dims far beyond the file, and beyond addressable memory
        let mut bad = good.clone();
        bad[16..20].copy_from_slice(&1000u32.to_le_bytes());
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::TruncatedFile { .. })));
        let huge = encode_header(0b11111, [u32::MAX as usize; 5]).unwrap();
        std::fs::write(&path, &huge).unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::ShapeOverflow)));

        std::fs::write(&path, b"VS").unwrap();
        assert!(matches!(read_volume(&path, FieldKind::Scalar), Err(Error::TruncatedFile { .. })));
    }
}
