//! Synthetic classification data and the `DSET` file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DSET" | version: u32 = 1 | M: u64 | d: u64 | C: u64
//! M*d feature values, f64, row-major
//! M labels, u32
//! ```

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::codec::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const MAGIC: &[u8; 4] = b"DSET";
const VERSION: u32 = 1;

/// Feature matrix plus integer labels. Example ids are the row indices `0..M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset", "feature dimension must be at least 1"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("dataset", "num_classes must be at least 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset", format!("non-finite feature in row {}", i / dim)));
        }
        if let Some(j) = labels.iter().position(|&l| l as usize >= num_classes) {
            return Err(Error::invalid(
                "dataset",
                format!("label {} of row {j} is outside 0..{num_classes}", labels[j]),
            ));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Feature row of example `id`.
    pub fn row(&self, id: usize) -> &[f64] {
        &self.features[id * self.dim..(id + 1) * self.dim]
    }

    pub fn label(&self, id: usize) -> usize {
        self.labels[id] as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.u64(self.len() as u64);
        w.u64(self.dim as u64);
        w.u64(self.num_classes as u64);
        w.f64s(&self.features);
        for &l in &self.labels {
            w.u32(l);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset");
        r.header(MAGIC, VERSION)?;
        let m = r.dim()?;
        let dim_at = r.offset();
        let d = r.dim()?;
        if d == 0 {
            return Err(r.error_at(dim_at, "feature dimension is zero"));
        }
        let c_at = r.offset();
        let c = r.dim()?;
        if c == 0 || c > u32::MAX as usize {
            return Err(r.error_at(c_at, format!("class count {c} out of range")));
        }
        let n = codec::checked_len(&r, &[m, d])?;
        let feat_at = r.offset();
        let features = r.f64s(n)?;
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at(feat_at + 8 * i as u64, "non-finite feature value"));
        }
        r.require(m, 4)?;
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let at = r.offset();
            let l = r.u32()?;
            if l as usize >= c {
                return Err(r.error_at(at, format!("label {l} out of range for {c} classes")));
            }
            labels.push(l);
        }
        r.finish()?;
        Ok(Dataset {
            features,
            labels,
            dim: d,
            num_classes: c,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

/// Parameters of the isotropic Gaussian-mixture generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_count: usize,
    /// Standard deviation of every cluster.
    pub cluster_spread: f64,
    /// Norm of every class center.
    pub class_center_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > u32::MAX as usize {
            return Err(Error::invalid("synth spec", "num_classes must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("synth spec", "dim must be positive"));
        }
        if self.per_class_count == 0 {
            return Err(Error::invalid("synth spec", "per_class_count must be at least 1"));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::invalid("synth spec", "cluster_spread must be positive and finite"));
        }
        if !(self.class_center_scale > 0.0 && self.class_center_scale.is_finite()) {
            return Err(Error::invalid("synth spec", "class_center_scale must be positive and finite"));
        }
        Ok(())
    }
}

/// Draw a class-balanced Gaussian mixture.
///
/// Centers are standard-normal directions rescaled to norm `class_center_scale`
/// (exactly, up to rounding). Rows are ordered class by class:
/// rows `c*n .. (c+1)*n` carry label `c`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let SynthSpec {
        num_classes,
        dim,
        per_class_count,
        cluster_spread,
        class_center_scale,
        seed,
    } = *spec;
    let mut rng = rng_from_seed(seed);

    let mut centers = Vec::with_capacity(num_classes * dim);
    for _ in 0..num_classes {
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if v.iter().any(|x: &f64| *x != 0.0) {
                break v;
            }
        };
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        centers.extend(dir.iter().map(|x| x / norm * class_center_scale));
    }

    let m = num_classes * per_class_count;
    let mut features = Vec::with_capacity(m * dim);
    let mut labels = Vec::with_capacity(m);
    for c in 0..num_classes {
        let center = &centers[c * dim..(c + 1) * dim];
        for _ in 0..per_class_count {
            for &mu in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(mu + cluster_spread * z);
            }
            labels.push(c as u32);
        }
    }
    Dataset::new(features, labels, dim, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: usize, d: usize, n: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            num_classes: c,
            dim: d,
            per_class_count: n,
            cluster_spread: 1.0,
            class_center_scale: 3.0,
            seed,
        }
    }

    #[test]
    fn smallest_spec_has_one_row_per_class() {
        let ds = generate_synthetic(&spec(2, 2, 1, 7)).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&spec(10, 8, 50, 1)).unwrap();
        let b = generate_synthetic(&spec(10, 8, 50, 1)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = generate_synthetic(&spec(10, 8, 50, 2)).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn classes_are_balanced() {
        let ds = generate_synthetic(&spec(4, 3, 17, 9)).unwrap();
        for c in 0..4u32 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 17);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(2, 2, 0, 0);
        assert!(matches!(generate_synthetic(&s), Err(Error::Invalid { .. })));
        s.per_class_count = 1;
        s.cluster_spread = 0.0;
        assert!(generate_synthetic(&s).is_err());
        s.cluster_spread = -1.0;
        assert!(generate_synthetic(&s).is_err());
        s.cluster_spread = 1.0;
        s.class_center_scale = 0.0;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = generate_synthetic(&spec(3, 2, 4, 5)).unwrap().to_bytes();
        for cut in [0, 3, 8, 20, 35, bytes.len() - 1] {
            match Dataset::from_bytes(&bytes[..cut]) {
                Err(Error::Format { .. }) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn label_equal_to_class_count_is_rejected_with_offset() {
        let ds = generate_synthetic(&spec(3, 2, 2, 5)).unwrap();
        let mut bytes = ds.to_bytes();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&3u32.to_le_bytes());
        match Dataset::from_bytes(&bytes) {
            Err(Error::Format { offset, reason, .. }) => {
                assert_eq!(offset, last as u64);
                assert!(reason.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut bytes = generate_synthetic(&spec(2, 2, 1, 5)).unwrap().to_bytes();
        bytes.push(0);
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format { .. })));
        bytes.pop();
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.u64(u64::MAX / 2);
        w.u64(1 << 40);
        w.u64(3);
        assert!(matches!(Dataset::from_bytes(&w.finish()), Err(Error::Format { .. })));
    }
}
