//! NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Geometry, Intent, Mat4, Volume, VolumeError};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const INTENT_LABEL: i16 = 1002;
/// NIFTI_UNITS_MM | NIFTI_UNITS_SEC
const XYZT_UNITS: u8 = 2 | 8;

/// On-disk voxel datatypes supported by the reader and writer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
            DataType::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Option<DataType> {
        match code {
            2 => Some(DataType::Uint8),
            4 => Some(DataType::Int16),
            16 => Some(DataType::Float32),
            64 => Some(DataType::Float64),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }

    /// Payload type used by [`write_nifti`] for a given intent.
    pub fn default_for(intent: Intent) -> DataType {
        match intent {
            Intent::Intensity | Intent::Probability => DataType::Float32,
            Intent::Mask => DataType::Uint8,
            Intent::Labels => DataType::Int16,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> VolumeError {
    VolumeError::Io { path: path.to_path_buf(), source }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

struct Reader<'a> {
    buf: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.buf[off..off + N]);
        if self.big_endian {
            b.reverse();
        }
        b
    }

    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.bytes(off))
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.bytes(off))
    }

    fn f64(&self, off: usize) -> f64 {
        f64::from_le_bytes(self.bytes(off))
    }
}

/// Read a NIfTI-1 volume. Files ending in `.gz` are decompressed transparently.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut buf = Vec::new();
    if is_gz(path) { MultiGzDecoder::new(file).read_to_end(&mut buf) } else { io::BufReader::new(file).read_to_end(&mut buf) }
        .map_err(|e| io_err(path, e))?;
    decode(&buf).map_err(|e| match e {
        VolumeError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

fn truncated(msg: String) -> VolumeError {
    VolumeError::Io { path: Default::default(), source: io::Error::new(io::ErrorKind::UnexpectedEof, msg) }
}

fn decode(buf: &[u8]) -> Result<Volume, VolumeError> {
    if buf.len() < HEADER_SIZE {
        return Err(truncated(format!("header is {} bytes, expected {HEADER_SIZE}", buf.len())));
    }
    let sizeof_hdr = i32::from_le_bytes(buf[0..4].try_into().unwrap());
    let big_endian = if sizeof_hdr == HEADER_SIZE as i32 {
        false
    } else if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
        true
    } else {
        return Err(VolumeError::Format(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    };
    if &buf[344..348] != b"n+1\0" {
        return Err(VolumeError::Format(format!("bad magic {:?}, expected \"n+1\"", String::from_utf8_lossy(&buf[344..347]))));
    }
    let h = Reader { buf, big_endian };

    let dim: Vec<i16> = (0..8).map(|i| h.i16(40 + 2 * i)).collect();
    if !(dim[0] == 3 || dim[0] == 4) {
        return Err(VolumeError::Dimensionality(format!("dim[0] = {}, expected 3 or 4", dim[0])));
    }
    if dim[0] == 4 && dim[4] > 1 {
        return Err(VolumeError::Dimensionality(format!("{} frames, only 3D volumes are supported", dim[4])));
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(VolumeError::Dimensionality(format!("non-positive dims {:?}", &dim[1..4])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let code = h.i16(70);
    let dtype = DataType::from_code(code).ok_or(VolumeError::UnsupportedDatatype(code))?;

    let pixdim: Vec<f64> = (0..8).map(|i| h.f32(76 + 4 * i) as f64).collect();
    let spacing = [pixdim[1].abs(), pixdim[2].abs(), pixdim[3].abs()];
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(VolumeError::Format(format!("invalid pixdim {:?}", &pixdim[1..4])));
    }

    let vox_offset = h.f32(108);
    if !(vox_offset >= VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(VolumeError::Format(format!("invalid vox_offset {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    let slope = h.f32(112) as f64;
    let inter = h.f32(116) as f64;

    let qform_code = h.i16(252);
    let sform_code = h.i16(254);
    let affine = if sform_code > 0 {
        let mut a = [[0.0; 4]; 4];
        for (r, row) in a.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = h.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        a[3] = [0.0, 0.0, 0.0, 1.0];
        a
    } else if qform_code > 0 {
        let q = [h.f32(256), h.f32(260), h.f32(264)].map(|v| v as f64);
        let off = [h.f32(268), h.f32(272), h.f32(276)].map(|v| v as f64);
        quaternion_affine(q, off, spacing, pixdim[0])
    } else {
        super::diagonal_affine(spacing)
    };

    let intent_name = {
        let raw = &buf[328..344];
        let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
        String::from_utf8_lossy(&raw[..end]).into_owned()
    };
    let intent =
        Intent::parse(&intent_name).unwrap_or(if h.i16(68) == INTENT_LABEL { Intent::Labels } else { Intent::Intensity });

    let n = dims[0] * dims[1] * dims[2];
    let need = vox_offset + n * dtype.bytes();
    if buf.len() < need {
        return Err(truncated(format!("payload needs {need} bytes, file has {}", buf.len())));
    }
    let payload = Reader { buf: &buf[vox_offset..need], big_endian };
    let raw = (0..n).map(|i| match dtype {
        DataType::Uint8 => payload.buf[i] as f64,
        DataType::Int16 => payload.i16(2 * i) as f64,
        DataType::Float32 => payload.f32(4 * i) as f64,
        DataType::Float64 => payload.f64(8 * i),
    });
    let data: Vec<f64> = if slope != 0.0 { raw.map(|s| slope * s + inter).collect() } else { raw.collect() };

    let geometry = Geometry::new(dims, spacing, affine)?;
    Volume::new(geometry, data, intent)
}

/// qform rotation/offset to voxel-to-world affine.
fn quaternion_affine(q: [f64; 3], offset: [f64; 3], spacing: [f64; 3], qfac: f64) -> Mat4 {
    let [mut b, mut c, mut d] = q;
    let mut a = 1.0 - (b * b + c * c + d * d);
    if a < 1e-7 {
        let norm = (b * b + c * c + d * d).sqrt();
        b /= norm;
        c /= norm;
        d /= norm;
        a = 0.0;
    } else {
        a = a.sqrt();
    }
    let qfac = if qfac < 0.0 { -1.0 } else { 1.0 };
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let scale = [spacing[0], spacing[1], qfac * spacing[2]];
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * scale[j];
        }
        m[i][3] = offset[i];
    }
    m[3] = [0.0, 0.0, 0.0, 1.0];
    m
}

/// Write `v` with the payload type implied by its intent: float32 for
/// intensity and probability, uint8 for masks, int16 for labels.
pub fn write_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    write_nifti_as(v, path, DataType::default_for(v.intent()))
}

/// Write `v` with an explicit payload type. Integer payloads require every
/// value to be an integer within the type's range.
pub fn write_nifti_as(v: &Volume, path: impl AsRef<Path>, dtype: DataType) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let (lo, hi) = match dtype {
        DataType::Uint8 => (0.0, 255.0),
        DataType::Int16 => (i16::MIN as f64, i16::MAX as f64),
        DataType::Float32 | DataType::Float64 => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let integral = matches!(dtype, DataType::Uint8 | DataType::Int16);
    if let Some((i, x)) = v.data().iter().enumerate().find(|(_, &x)| x < lo || x > hi || (integral && x.fract() != 0.0)) {
        return Err(VolumeError::Range(format!("voxel {i} = {x} cannot be stored as {dtype:?}")));
    }
    if v.dims().iter().any(|&d| d > i16::MAX as usize) {
        return Err(VolumeError::Range(format!("dims {:?} exceed the NIfTI-1 limit", v.dims())));
    }

    let bytes = encode(v, dtype);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let result = if is_gz(path) {
        // GzEncoder writes mtime 0 and no filename, so output is reproducible.
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(&bytes).and_then(|_| enc.finish()).and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush())
    };
    result.map_err(|e| io_err(path, e))
}

fn encode(v: &Volume, dtype: DataType) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put = |h: &mut Vec<u8>, off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);

    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    let dims = v.dims();
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(&mut h, 40 + 2 * i, &d.to_le_bytes());
    }
    if v.intent() == Intent::Labels {
        put(&mut h, 68, &INTENT_LABEL.to_le_bytes());
    }
    put(&mut h, 70, &dtype.code().to_le_bytes());
    put(&mut h, 72, &((dtype.bytes() * 8) as i16).to_le_bytes());
    let sp = v.spacing();
    let pixdim = [1.0f32, sp[0] as f32, sp[1] as f32, sp[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut h, 76 + 4 * i, &p.to_le_bytes());
    }
    put(&mut h, 108, &(VOX_OFFSET as f32).to_le_bytes());
    put(&mut h, 112, &1.0f32.to_le_bytes());
    put(&mut h, 116, &0.0f32.to_le_bytes());
    h[123] = XYZT_UNITS;
    put(&mut h, 148, b"regionwise");
    put(&mut h, 254, &1i16.to_le_bytes());
    let a = v.affine();
    for r in 0..3 {
        for c in 0..4 {
            put(&mut h, 280 + 16 * r + 4 * c, &(a[r][c] as f32).to_le_bytes());
        }
    }
    put(&mut h, 328, v.intent().as_str().as_bytes());
    put(&mut h, 344, b"n+1\0");

    h.reserve(v.len() * dtype.bytes());
    for &x in v.data() {
        match dtype {
            DataType::Uint8 => h.push(x as u8),
            DataType::Int16 => h.extend_from_slice(&(x as i16).to_le_bytes()),
            DataType::Float32 => h.extend_from_slice(&(x as f32).to_le_bytes()),
            DataType::Float64 => h.extend_from_slice(&x.to_le_bytes()),
        }
    }
    h
}
