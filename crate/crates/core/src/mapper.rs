//! Per-cell categorical Bayes filter over the grid.
//!
//! Each cell keeps a PMF over the semantic classes, updated from labeled
//! range measurements with an *assumed* sensor likelihood that is in general
//! miscalibrated relative to the true noise process. Cells are independent:
//! the map distribution factorizes over cells, which is exactly the structure
//! the conformal layer and the planner consume.
//!
//! Likelihoods accumulate in log space per scan (a near cell can be crossed
//! by dozens of rays in one measurement), then each touched cell is
//! renormalized, floored at `pmf_floor` and renormalized again. The floor
//! keeps contradictory later evidence recoverable when the assumed model is
//! overconfident.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClassId, GridGeometry};
use crate::sensor::{ConfusionMatrix, Measurement};

#[derive(Debug, Error, PartialEq)]
pub enum MapperError {
    #[error("invalid mapper config: {0}")]
    InvalidConfig(String),
    #[error("measurement label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("measurement cell {cell} out of range for {cells} cells")]
    CellOutOfRange { cell: u32, cells: usize },
}

/// The mapper's sensor model and prior. `assumed_confusion` is what the
/// mapper believes about the sensor, not what the sensor does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub assumed_confusion: ConfusionMatrix,
    pub prior: Vec<f64>,
    pub pmf_floor: f64,
}

impl MapperConfig {
    /// Uniform prior over `k` classes with the given assumed confusion.
    pub fn uniform_prior(assumed_confusion: ConfusionMatrix) -> Self {
        let k = assumed_confusion.classes();
        MapperConfig { assumed_confusion, prior: vec![1.0 / k as f64; k], pmf_floor: 1e-6 }
    }

    pub fn validate(&self) -> Result<(), MapperError> {
        let k = self.assumed_confusion.classes();
        if self.prior.len() != k {
            return Err(MapperError::InvalidConfig(format!(
                "prior has {} entries for {k} classes",
                self.prior.len()
            )));
        }
        if self.prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(MapperError::InvalidConfig("prior entries must be non-negative".into()));
        }
        let sum: f64 = self.prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MapperError::InvalidConfig(format!("prior sums to {sum}, not 1")));
        }
        if !(self.pmf_floor > 0.0) || self.pmf_floor >= 1.0 / k as f64 {
            return Err(MapperError::InvalidConfig(format!(
                "pmf_floor {} must be in (0, 1/K)",
                self.pmf_floor
            )));
        }
        Ok(())
    }
}

/// Per-cell PMFs plus the observed-cell set `J_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    geometry: GridGeometry,
    k: usize,
    pmf: Vec<f64>,
    observed: Vec<bool>,
    observed_count: usize,
}

impl BeliefMap {
    pub fn new(geometry: GridGeometry, config: &MapperConfig) -> Result<Self, MapperError> {
        config.validate()?;
        let k = config.assumed_confusion.classes();
        let cells = geometry.cell_count();
        let mut pmf = Vec::with_capacity(cells * k);
        for _ in 0..cells {
            pmf.extend_from_slice(&config.prior);
        }
        Ok(Self { geometry, k, pmf, observed: vec![false; cells], observed_count: 0 })
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn pmf_of(&self, cell: usize) -> &[f64] {
        &self.pmf[cell * self.k..(cell + 1) * self.k]
    }

    #[inline]
    pub fn is_observed(&self, cell: usize) -> bool {
        self.observed[cell]
    }

    pub fn observed_count(&self) -> usize {
        self.observed_count
    }

    /// Indices of all cells observed so far (`J_t`).
    pub fn observed_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().enumerate().filter(|(_, o)| **o).map(|(j, _)| j)
    }

    fn mark_observed(&mut self, cell: usize) {
        if !self.observed[cell] {
            self.observed[cell] = true;
            self.observed_count += 1;
        }
    }
}

/// The mapping algorithm: fuses measurements into the belief map. Owns
/// reusable scratch so repeated updates do not allocate.
#[derive(Debug, Clone)]
pub struct Mapper {
    config: MapperConfig,
    k: usize,
    /// log A[class][label], grouped by label: `log_cols[label * k + class]`.
    log_cols: Vec<f64>,
    acc: Vec<f64>,
    epoch: Vec<u32>,
    current_epoch: u32,
}

impl Mapper {
    pub fn new(config: MapperConfig) -> Result<Self, MapperError> {
        config.validate()?;
        let k = config.assumed_confusion.classes();
        let mut log_cols = vec![0.0; k * k];
        for label in 0..k {
            for class in 0..k {
                log_cols[label * k + class] =
                    config.assumed_confusion.get(ClassId(class as u8), ClassId(label as u8)).ln();
            }
        }
        Ok(Self { config, k, log_cols, acc: Vec::new(), epoch: Vec::new(), current_epoch: 0 })
    }

    pub fn config(&self) -> &MapperConfig {
        &self.config
    }

    #[inline]
    fn touch(&mut self, cell: usize, touched: &mut Vec<u32>) {
        if self.epoch[cell] != self.current_epoch {
            self.epoch[cell] = self.current_epoch;
            self.acc[cell * self.k..(cell + 1) * self.k].fill(0.0);
            touched.push(cell as u32);
        }
    }

    #[inline]
    fn accumulate(&mut self, cell: usize, label: ClassId, touched: &mut Vec<u32>) {
        self.touch(cell, touched);
        let col = &self.log_cols[label.index() * self.k..(label.index() + 1) * self.k];
        let acc = &mut self.acc[cell * self.k..(cell + 1) * self.k];
        for (a, l) in acc.iter_mut().zip(col) {
            *a += *l;
        }
    }

    /// Fuse one scan into `belief`. Touched cell indices (hit cells and
    /// traversed free cells) are appended to `touched`, which is cleared
    /// first; untouched cells are left exactly as they were.
    pub fn update(
        &mut self,
        belief: &mut BeliefMap,
        measurement: &Measurement,
        touched: &mut Vec<u32>,
    ) -> Result<(), MapperError> {
        touched.clear();
        let cells = belief.geometry.cell_count();
        let k = self.k;
        if belief.k != k {
            return Err(MapperError::InvalidConfig(format!(
                "belief has {} classes, mapper {k}",
                belief.k
            )));
        }
        if self.acc.len() != cells * k {
            self.acc = vec![0.0; cells * k];
            self.epoch = vec![0; cells];
            self.current_epoch = 0;
        }
        self.current_epoch = self.current_epoch.wrapping_add(1);
        if self.current_epoch == 0 {
            self.epoch.fill(0);
            self.current_epoch = 1;
        }

        // Validate and accumulate log likelihoods per touched cell.
        for ray in measurement.rays() {
            for &cell in ray.traversed_free {
                if cell as usize >= cells {
                    return Err(MapperError::CellOutOfRange { cell, cells });
                }
                self.accumulate(cell as usize, ClassId::FREE, touched);
            }
            if let Some(hit) = ray.hit {
                if hit.label.index() >= k {
                    return Err(MapperError::LabelOutOfRange { label: hit.label.0, classes: k });
                }
                if hit.cell as usize >= cells {
                    return Err(MapperError::CellOutOfRange { cell: hit.cell, cells });
                }
                self.accumulate(hit.cell as usize, hit.label, touched);
            }
        }

        // Posterior per touched cell: multiply, normalize, floor, renormalize.
        let floor = self.config.pmf_floor;
        for &cell in touched.iter() {
            let cell = cell as usize;
            let acc = &self.acc[cell * k..(cell + 1) * k];
            let pmf = &mut belief.pmf[cell * k..(cell + 1) * k];
            let max = acc.iter().fold(f64::NEG_INFINITY, |m, a| m.max(*a));
            if max.is_finite() {
                for (p, a) in pmf.iter_mut().zip(acc) {
                    *p *= (a - max).exp();
                }
            } else {
                // The assumed model gives zero likelihood to every class for
                // this evidence; the floor below resets the cell to uniform.
                pmf.fill(0.0);
            }
            let sum: f64 = pmf.iter().sum();
            if sum > 0.0 {
                for p in pmf.iter_mut() {
                    *p /= sum;
                }
            }
            let mut floored = 0.0;
            for p in pmf.iter_mut() {
                if *p < floor {
                    *p = floor;
                }
                floored += *p;
            }
            if floored != 1.0 {
                for p in pmf.iter_mut() {
                    *p /= floored;
                }
            }
            belief.mark_observed(cell);
        }
        Ok(())
    }
}
