//! File formats.
//!
//! Binary containers all follow the same pattern: an 8-byte magic that ends
//! in a version digit, little-endian `u32` shape fields, then 64-bit
//! little-endian reals.
//!
//! | magic      | contents                                            |
//! |------------|-----------------------------------------------------|
//! | `MOLEMAT1` | rows, cols, row-major matrix                        |
//! | `MOLETEN1` | channels, side, channel-major tensor (concatenable) |
//! | `MOLEROW1` | count, len, row vectors                             |
//! | `MOLEPRS1` | count, len, (original, morphed) row pairs           |
//! | `MOLEKER1` | alpha, beta, p, kernel weights                      |
//!
//! Provider secrets are a JSON document next to a `MOLEMAT1` core file; the
//! augmented layer ships as a `MOLEMAT1` file with a JSON sidecar that holds
//! geometry only — never the core, the permutation or the seed.

use crate::augconv::{AugConvMatrix, ChannelPermutation};
use crate::d2r::{FeatureTensor, ImageTensor, KernelSet, Padding};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RowVector};
use crate::morphing::{MorphCore, MorphSecret};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC_MATRIX: &[u8; 8] = b"MOLEMAT1";
pub const MAGIC_TENSOR: &[u8; 8] = b"MOLETEN1";
pub const MAGIC_ROWS: &[u8; 8] = b"MOLEROW1";
pub const MAGIC_PAIRS: &[u8; 8] = b"MOLEPRS1";
pub const MAGIC_KERNELS: &[u8; 8] = b"MOLEKER1";

pub const SECRET_FILE_VERSION: u32 = 1;

fn write_magic(w: &mut impl Write, magic: &[u8; 8]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::InvalidFormat(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

// --- matrices -------------------------------------------------------------

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, MAGIC_MATRIX)?;
    write_u32(&mut w, m.rows() as u32)?;
    write_u32(&mut w, m.cols() as u32)?;
    write_f64s(&mut w, m.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_MATRIX)?;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let data = read_f64s(&mut r, rows.checked_mul(cols).ok_or_else(overflow)?)?;
    Matrix::from_vec(rows, cols, data)
}

fn overflow() -> Error {
    Error::InvalidFormat("shape overflow".into())
}

// --- tensors (images and feature maps) ------------------------------------

fn write_tensor_record(
    w: &mut impl Write,
    channels: usize,
    side: usize,
    data: &[f64],
) -> Result<()> {
    write_magic(w, MAGIC_TENSOR)?;
    write_u32(w, channels as u32)?;
    write_u32(w, side as u32)?;
    write_f64s(w, data)
}

fn read_tensor_record(r: &mut impl Read) -> Result<Option<(usize, usize, Vec<f64>)>> {
    let mut magic = [0u8; 8];
    match r.read(&mut magic)? {
        0 => return Ok(None),
        8 => {}
        n => {
            // Finish the partial read so a short file fails loudly.
            r.read_exact(&mut magic[n..])?;
        }
    }
    if &magic != MAGIC_TENSOR {
        return Err(Error::InvalidFormat(format!(
            "expected magic MOLETEN1, found {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let channels = read_u32(r)? as usize;
    let side = read_u32(r)? as usize;
    let len = channels
        .checked_mul(side)
        .and_then(|v| v.checked_mul(side))
        .ok_or_else(overflow)?;
    let data = read_f64s(r, len)?;
    Ok(Some((channels, side, data)))
}

pub fn write_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_record(&mut w, img.alpha(), img.m(), img.data())?;
    w.flush()?;
    Ok(())
}

pub fn write_images_seq(path: &Path, images: &[ImageTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for img in images {
        write_tensor_record(&mut w, img.alpha(), img.m(), img.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_images_seq(path: &Path) -> Result<Vec<ImageTensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some((channels, side, data)) = read_tensor_record(&mut r)? {
        out.push(ImageTensor::new(channels, side, data)?);
    }
    Ok(out)
}

pub fn write_features_seq(path: &Path, features: &[FeatureTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in features {
        write_tensor_record(&mut w, f.beta(), f.n(), f.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_seq(path: &Path) -> Result<Vec<FeatureTensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some((channels, side, data)) = read_tensor_record(&mut r)? {
        out.push(FeatureTensor::new(channels, side, data)?);
    }
    Ok(out)
}

// --- row datasets ----------------------------------------------------------

/// Write a row dataset; `len` is recorded even for an empty set.
pub fn write_rows(path: &Path, len: usize, rows: &[RowVector]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has length {}, expected {len}",
                row.len()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, MAGIC_ROWS)?;
    write_u32(&mut w, rows.len() as u32)?;
    write_u32(&mut w, len as u32)?;
    for row in rows {
        write_f64s(&mut w, row.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<(usize, Vec<RowVector>)> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_ROWS)?;
    let count = read_u32(&mut r)? as usize;
    let len = read_u32(&mut r)? as usize;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        rows.push(RowVector::from_vec(read_f64s(&mut r, len)?)?);
    }
    Ok((len, rows))
}

// --- known pairs -----------------------------------------------------------

pub fn write_pairs(path: &Path, len: usize, pairs: &[(RowVector, RowVector)]) -> Result<()> {
    for (i, (d, t)) in pairs.iter().enumerate() {
        if d.len() != len || t.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "pair {i} has lengths {}/{}, expected {len}",
                d.len(),
                t.len()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, MAGIC_PAIRS)?;
    write_u32(&mut w, pairs.len() as u32)?;
    write_u32(&mut w, len as u32)?;
    for (d, t) in pairs {
        write_f64s(&mut w, d.data())?;
        write_f64s(&mut w, t.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<(usize, Vec<(RowVector, RowVector)>)> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_PAIRS)?;
    let count = read_u32(&mut r)? as usize;
    let len = read_u32(&mut r)? as usize;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let d = RowVector::from_vec(read_f64s(&mut r, len)?)?;
        let t = RowVector::from_vec(read_f64s(&mut r, len)?)?;
        pairs.push((d, t));
    }
    Ok((len, pairs))
}

// --- kernel sets -----------------------------------------------------------

pub fn write_kernels(path: &Path, k: &KernelSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, MAGIC_KERNELS)?;
    write_u32(&mut w, k.alpha() as u32)?;
    write_u32(&mut w, k.beta() as u32)?;
    write_u32(&mut w, k.p() as u32)?;
    write_f64s(&mut w, k.weights())?;
    w.flush()?;
    Ok(())
}

pub fn read_kernels(path: &Path) -> Result<KernelSet> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MAGIC_KERNELS)?;
    let alpha = read_u32(&mut r)? as usize;
    let beta = read_u32(&mut r)? as usize;
    let p = read_u32(&mut r)? as usize;
    let len = alpha
        .checked_mul(beta)
        .and_then(|v| v.checked_mul(p * p))
        .ok_or_else(overflow)?;
    let weights = read_f64s(&mut r, len)?;
    KernelSet::new(alpha, beta, p, weights)
}

// --- portable anymap images (P5 / P6) --------------------------------------

fn pnm_tokens(bytes: &[u8]) -> Result<(Vec<usize>, usize)> {
    // Parse magic + three header integers, skipping comments; returns header
    // values and the offset of the binary payload.
    let mut values = Vec::new();
    let mut i = 2; // caller checks the two magic bytes
    while values.len() < 3 {
        while i < bytes.len() && (bytes[i] as char).is_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(Error::InvalidFormat("malformed header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..i])
            .map_err(|_| Error::InvalidFormat("non-ascii header".into()))?;
        values.push(
            text.parse::<usize>()
                .map_err(|_| Error::InvalidFormat("bad header integer".into()))?,
        );
    }
    // Exactly one whitespace byte separates the header from the payload.
    if i >= bytes.len() || !(bytes[i] as char).is_whitespace() {
        return Err(Error::InvalidFormat("missing header terminator".into()));
    }
    Ok((values, i + 1))
}

/// Read a binary PGM (P5, one channel) or PPM (P6, three channels) image.
/// Pixels map to `[0, 1]` by dividing by the recorded maxval; the image must
/// be square.
pub fn read_pnm(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 2 {
        return Err(Error::InvalidFormat("file too short".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1usize,
        b"P6" => 3usize,
        other => {
            return Err(Error::InvalidFormat(format!(
                "unsupported pnm magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let (header, offset) = pnm_tokens(&bytes)?;
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if width != height {
        return Err(Error::InvalidGeometry(format!(
            "image must be square, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65_535 {
        return Err(Error::InvalidFormat(format!("bad maxval {maxval}")));
    }
    let m = width;
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let payload = &bytes[offset..];
    let expected = m * m * channels * bytes_per_sample;
    if payload.len() < expected {
        return Err(Error::InvalidFormat(format!(
            "payload holds {} bytes, need {expected}",
            payload.len()
        )));
    }
    let sample = |idx: usize| -> f64 {
        let raw = if bytes_per_sample == 1 {
            payload[idx] as u32
        } else {
            // Two-byte samples are big-endian.
            ((payload[2 * idx] as u32) << 8) | payload[2 * idx + 1] as u32
        };
        raw as f64 / maxval as f64
    };
    // Interleaved pixels to channel-major planes.
    let mut data = vec![0.0; channels * m * m];
    for r in 0..m {
        for c in 0..m {
            for ch in 0..channels {
                data[ch * m * m + r * m + c] = sample((r * m + c) * channels + ch);
            }
        }
    }
    ImageTensor::new(channels, m, data)
}

/// Write a one-channel image as PGM (P5) or a three-channel image as PPM
/// (P6), clamping values into `[0, 1]` and scaling to 8-bit.
pub fn write_pnm(path: &Path, img: &ImageTensor) -> Result<()> {
    let m = img.m();
    let channels = img.alpha();
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        other => {
            return Err(Error::InvalidGeometry(format!(
                "pnm supports 1 or 3 channels, got {other}"
            )))
        }
    };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{magic}\n{m} {m}\n255\n")?;
    let mut payload = Vec::with_capacity(m * m * channels);
    for r in 0..m {
        for c in 0..m {
            for ch in 0..channels {
                let v = img.get(ch, r, c).clamp(0.0, 1.0);
                payload.push((v * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

// --- provider secret --------------------------------------------------------

/// On-disk form of the provider secret. This file is the security root of
/// the scheme: it must never be shared with the developer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecretFile {
    pub version: u32,
    pub alpha: usize,
    pub m: usize,
    pub kappa: usize,
    pub q: usize,
    pub seed: u64,
    /// Name of the `MOLEMAT1` core file, relative to this document.
    pub mprime_file: String,
    pub permutation: Vec<usize>,
}

/// Write the secret JSON and its core matrix file (named `<stem>.mprime.mat`
/// next to the JSON document).
pub fn save_secret(path: &Path, secret: &MorphSecret) -> Result<PathBuf> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "secret".to_string());
    let mprime_name = format!("{stem}.mprime.mat");
    let mprime_path = path
        .parent()
        .map(|p| p.join(&mprime_name))
        .unwrap_or_else(|| PathBuf::from(&mprime_name));
    write_matrix(&mprime_path, secret.core.mprime())?;
    let doc = SecretFile {
        version: SECRET_FILE_VERSION,
        alpha: secret.alpha,
        m: secret.m,
        kappa: secret.core.kappa(),
        q: secret.core.q(),
        seed: secret.seed,
        mprime_file: mprime_name,
        permutation: secret.permutation.order().to_vec(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.flush()?;
    Ok(mprime_path)
}

/// Load a secret document and its core matrix.
pub fn load_secret(path: &Path) -> Result<MorphSecret> {
    let doc: SecretFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if doc.version != SECRET_FILE_VERSION {
        return Err(Error::InvalidFormat(format!(
            "unsupported secret version {}",
            doc.version
        )));
    }
    let mprime_path = {
        let rel = PathBuf::from(&doc.mprime_file);
        if rel.is_absolute() {
            rel
        } else {
            path.parent()
                .map(|p| p.join(&rel))
                .unwrap_or(rel)
        }
    };
    let mprime = read_matrix(&mprime_path)?;
    if mprime.rows() != doc.q {
        return Err(Error::InvalidFormat(format!(
            "core file is {}x{}, secret says q = {}",
            mprime.rows(),
            mprime.cols(),
            doc.q
        )));
    }
    let core = MorphCore::from_matrix(mprime, doc.kappa)?;
    let permutation = ChannelPermutation::from_order(doc.permutation)?;
    MorphSecret::new(core, doc.seed, permutation, doc.alpha, doc.m)
}

// --- augmented layer --------------------------------------------------------

/// Geometry sidecar for a shipped augmented layer. Contains exactly the
/// fields the developer needs to apply the matrix and nothing from the
/// secret.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugConvSidecar {
    pub alpha: usize,
    pub m: usize,
    pub beta: usize,
    pub n: usize,
    pub p: usize,
    pub padding: Padding,
    pub permuted: bool,
}

/// Sidecar path for a given matrix path: `<matrix path>.json`.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    let mut os = matrix_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Write the augmented layer as a matrix file plus its JSON sidecar.
pub fn save_augconv(matrix_path: &Path, ac: &AugConvMatrix) -> Result<PathBuf> {
    write_matrix(matrix_path, &ac.matrix)?;
    let sidecar = AugConvSidecar {
        alpha: ac.alpha,
        m: ac.m,
        beta: ac.beta,
        n: ac.n,
        p: ac.p,
        padding: ac.padding,
        permuted: ac.permuted,
    };
    let side_path = sidecar_path(matrix_path);
    let mut w = BufWriter::new(File::create(&side_path)?);
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.flush()?;
    Ok(side_path)
}

/// Load an augmented layer from its matrix file and sidecar.
pub fn load_augconv(matrix_path: &Path) -> Result<AugConvMatrix> {
    let matrix = read_matrix(matrix_path)?;
    let sidecar: AugConvSidecar =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path(matrix_path))?))?;
    let expected_rows = sidecar.alpha * sidecar.m * sidecar.m;
    let expected_cols = sidecar.beta * sidecar.n * sidecar.n;
    if matrix.rows() != expected_rows || matrix.cols() != expected_cols {
        return Err(Error::InvalidFormat(format!(
            "matrix is {}x{} but sidecar geometry implies {}x{}",
            matrix.rows(),
            matrix.cols(),
            expected_rows,
            expected_cols
        )));
    }
    Ok(AugConvMatrix {
        matrix,
        alpha: sidecar.alpha,
        m: sidecar.m,
        beta: sidecar.beta,
        n: sidecar.n,
        p: sidecar.p,
        padding: sidecar.padding,
        permuted: sidecar.permuted,
    })
}
