//! Universal perturbations: the additive field, its application to images,
//! and the on-disk array format.
//!
//! A perturbation is applied by subtraction followed by clamping, identically
//! during the attack and during evaluation. The binary format is a fixed
//! little-endian container (magic `SADV`) holding any channel-major real
//! array; perturbations additionally carry a structured-text sidecar.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::data::CategoryLabel;
use crate::error::{Error, Result};
use crate::image::{clip_to_valid, Image, ImageShape};

const MAGIC: &[u8; 4] = b"SADV";
const FORMAT_VERSION: u8 = 1;

/// Single image-shaped additive field with an l-infinity budget.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub values: Array3<f64>,
    pub eta: f64,
    pub source_category: CategoryLabel,
    pub target_category: CategoryLabel,
    pub seed: u64,
}

impl Perturbation {
    pub fn new(
        values: Array3<f64>,
        eta: f64,
        source_category: CategoryLabel,
        target_category: CategoryLabel,
        seed: u64,
    ) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::param("eta must be positive"));
        }
        if source_category == target_category {
            return Err(Error::param("source and target categories must differ"));
        }
        let p = Self {
            values,
            eta,
            source_category,
            target_category,
            seed,
        };
        if p.linf_norm() > eta {
            return Err(Error::param(format!(
                "perturbation exceeds its budget: {} > {eta}",
                p.linf_norm()
            )));
        }
        Ok(p)
    }

    pub fn zeros(
        shape: ImageShape,
        eta: f64,
        source_category: CategoryLabel,
        target_category: CategoryLabel,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            Array3::zeros(shape.dims()),
            eta,
            source_category,
            target_category,
            seed,
        )
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::of(&self.values)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Perturb an image: `clip(x - p)`, the same operation the attack iterates.
pub fn apply_perturbation(x: &Image, p: &Perturbation) -> Result<Image> {
    if x.shape() != p.shape() {
        return Err(Error::shape(x.shape(), p.shape()));
    }
    let raw = x.pixels() - &p.values;
    clip_to_valid(&raw, x.shape())
}

/// Sidecar metadata stored next to a perturbation file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerturbationMeta {
    pub eta: f64,
    pub source_category: usize,
    pub target_category: usize,
    pub seed: u64,
    pub model_fingerprint: String,
    pub iterations: u64,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub dataset_hash: String,
    #[serde(default)]
    pub converged: bool,
}

/// Write any channel-major real array in the binary container format.
pub fn write_array(path: &Path, values: &Array3<f64>) -> Result<()> {
    let (c, h, w) = values.dim();
    let mut buf = Vec::with_capacity(4 + 1 + 12 + values.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    for dim in [c, h, w] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::param(format!("dimension {dim} exceeds the u32 format limit")))?;
        buf.extend_from_slice(&dim.to_le_bytes());
    }
    for v in values.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read an array written by [`write_array`].
pub fn read_array(path: &Path) -> Result<Array3<f64>> {
    let fmt_err = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 17 {
        return Err(fmt_err("file too short for header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(fmt_err("unsupported format version"));
    }
    let dim = |i: usize| -> usize {
        u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize
    };
    let (c, h, w) = (dim(5), dim(9), dim(13));
    let expected = 17 + c * h * w * 4;
    if bytes.len() != expected {
        return Err(fmt_err("payload length does not match header dimensions"));
    }
    let mut data = Vec::with_capacity(c * h * w);
    for chunk in bytes[17..].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Array3::from_shape_vec((c, h, w), data).map_err(|_| fmt_err("dimension overflow"))
}

/// Persist a perturbation as `<path>` plus a `<path>.toml` metadata sidecar.
pub fn write_perturbation(path: &Path, p: &Perturbation, meta: &PerturbationMeta) -> Result<()> {
    write_array(path, &p.values)?;
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Format {
        path: sidecar_path(path).display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_perturbation(path: &Path) -> Result<(Perturbation, PerturbationMeta)> {
    let values = read_array(path)?;
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar)?;
    let meta: PerturbationMeta = toml::from_str(&text).map_err(|e| Error::Format {
        path: sidecar.display().to_string(),
        reason: e.to_string(),
    })?;
    let p = Perturbation::new(
        values,
        meta.eta,
        CategoryLabel(meta.source_category),
        CategoryLabel(meta.target_category),
        meta.seed,
    )?;
    Ok((p, meta))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".toml");
    std::path::PathBuf::from(os)
}
