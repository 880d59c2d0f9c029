use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::ScanGeometry;

/// Where a sinogram came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinogramMeta {
    /// Configuration label, e.g. `Plane0-Top`.
    pub label: String,
    /// Sample index within the configuration; `None` for clean references.
    pub sample_index: Option<usize>,
}

/// Line integrals on an `n_angles × n_detectors` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub data: Array2<f64>,
    pub geometry: ScanGeometry,
    pub meta: SinogramMeta,
}

impl Sinogram {
    /// Checks the shape against the geometry and rejects non-finite values.
    pub fn new(data: Array2<f64>, geometry: ScanGeometry, meta: SinogramMeta) -> Result<Self> {
        let s = Self {
            data,
            geometry,
            meta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, d) = self.data.dim();
        if a != self.geometry.n_angles || d != self.geometry.n_detectors {
            return Err(Error::shape(format!(
                "sinogram data is {a}×{d} but geometry expects {}×{}",
                self.geometry.n_angles, self.geometry.n_detectors
            )));
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("sinogram contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Same geometry and metadata, different values.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, self.geometry, self.meta.clone())
    }
}
