//! Spherical kernel density estimation of normal directions with a
//! von Mises-Fisher kernel.
//!
//! The 3D kernel normalizer is `C(kappa) = kappa / (4 pi sinh kappa)`;
//! densities are evaluated as `C(kappa) exp(kappa <x, n>)` in the
//! overflow-safe form `kappa / (2 pi (1 - exp(-2 kappa))) * exp(kappa (t-1))`.
//! The evaluation grid partitions the sphere into equal-area cells (uniform
//! in z and azimuth), so the quadrature integral is a plain cell-area sum.

use rayon::prelude::*;
use thiserror::Error;

use crate::frame::NormalField;
use crate::geom::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("kappa must be finite and > 0, got {0}")]
    InvalidKappa(f64),
    #[error("grid_res must be >= 2")]
    InvalidGrid,
    #[error("cannot estimate a density from zero normals")]
    EmptyInput,
    #[error("normal {index} is not unit length (norm {norm})")]
    NotUnit { index: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCell {
    pub direction: Vec3,
    pub density: f64,
}

/// Equal-area spherical grid of kernel density values.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub cells: Vec<DensityCell>,
    pub kappa: f64,
    /// Solid angle of every cell (they are all equal).
    pub cell_area: f64,
}

impl DensityMap {
    /// Midpoint quadrature of the density over the sphere; 1 for an exact
    /// density and a sufficiently fine grid.
    pub fn integral(&self) -> f64 {
        self.cells.iter().map(|c| c.density).sum::<f64>() * self.cell_area
    }

    /// Cell with the highest density.
    pub fn argmax(&self) -> &DensityCell {
        self.cells
            .iter()
            .max_by(|a, b| a.density.partial_cmp(&b.density).unwrap())
            .expect("density map has cells")
    }

    /// `x,y,z,density` rows with a `kappa` header comment.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(self.cells.len() * 64);
        writeln!(out, "# vmf kernel density, kappa = {}", self.kappa).unwrap();
        writeln!(out, "x,y,z,density").unwrap();
        for cell in &self.cells {
            writeln!(
                out,
                "{:.9},{:.9},{:.9},{:.9e}",
                cell.direction.x, cell.direction.y, cell.direction.z, cell.density
            )
            .unwrap();
        }
        out
    }
}

/// Cell-center directions of the equal-area grid: `grid_res` bands uniform in
/// z, `2 * grid_res` columns uniform in azimuth.
pub fn equal_area_grid(grid_res: u32) -> Vec<Vec3> {
    let bands = grid_res as usize;
    let cols = 2 * bands;
    let mut dirs = Vec::with_capacity(bands * cols);
    for band in 0..bands {
        let z = -1.0 + (band as f64 + 0.5) * 2.0 / bands as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        for col in 0..cols {
            let phi = (col as f64 + 0.5) * std::f64::consts::TAU / cols as f64;
            dirs.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    dirs
}

/// Kernel density of the normal directions on the unit sphere.
pub fn vmf_kde(
    normals: &NormalField,
    kappa: f64,
    grid_res: u32,
) -> Result<DensityMap, DensityError> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(DensityError::InvalidKappa(kappa));
    }
    if grid_res < 2 {
        return Err(DensityError::InvalidGrid);
    }
    if normals.is_empty() {
        return Err(DensityError::EmptyInput);
    }
    for (index, n) in normals.normals.iter().enumerate() {
        let norm = n.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DensityError::NotUnit { index, norm });
        }
    }

    // C(kappa) e^{kappa t} = kappa / (2 pi (1 - e^{-2 kappa})) * e^{kappa (t - 1)}
    let log_front = kappa.ln() - (std::f64::consts::TAU).ln() - (-(-2.0 * kappa).exp()).ln_1p();

    let dirs = equal_area_grid(grid_res);
    let inv_n = 1.0 / normals.len() as f64;
    let cells: Vec<DensityCell> = dirs
        .par_iter()
        .map(|x| {
            let sum: f64 = normals
                .normals
                .iter()
                .map(|n| (log_front + kappa * (x.dot(n) - 1.0)).exp())
                .sum();
            DensityCell {
                direction: *x,
                density: sum * inv_n,
            }
        })
        .collect();

    let bands = grid_res as usize;
    let cell_area = 4.0 * std::f64::consts::PI / (bands * 2 * bands) as f64;
    Ok(DensityMap {
        cells,
        kappa,
        cell_area,
    })
}
