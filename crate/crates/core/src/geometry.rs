//! Bilayer domain `B × (]-L⁻, L⁺[ \ {0})` on a uniform cell-centered grid.
//!
//! The lateral base `B` is the rectangle `[0, lx] × [0, ly]`. Cells are stacked
//! in z from `-l_minus` to `l_plus`; the spacer `z = 0` is the face between
//! cell layer `nz_minus - 1` and `nz_minus`, so no cell center ever lies on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::vec3::{scale, sub, Vec3, E_Z};

/// Approximation order of the spacer traces `γ⁺m`, `γ⁻m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceOrder {
    /// Adjacent cell-center value.
    #[default]
    First,
    /// Linear extrapolation of the two nearest cell centers to the face.
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub lx: f64,
    pub ly: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz_minus: usize,
    pub nz_plus: usize,
    /// Thin-layer thickness; `None` disables thin-layer mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub trace_order: TraceOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    pub base_lx: f64,
    pub base_ly: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz_minus: usize,
    pub nz_plus: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Thin-layer thickness, zero when thin-layer mode is inactive.
    pub eta: f64,
    /// Cell layers inside η on each side of the spacer.
    pub eta_cells: usize,
    pub trace_order: TraceOrder,
}

const TILING_TOL: f64 = 1e-9;

fn tiles(length: f64, step: f64) -> Option<usize> {
    let n = length / step;
    let r = n.round();
    ((n - r).abs() <= TILING_TOL * n.max(1.0)).then_some(r as usize)
}

pub fn build_geometry(config: &GeometryConfig) -> Result<DomainGeometry> {
    let c = config;
    for (name, v) in [("lx", c.lx), ("ly", c.ly), ("l_minus", c.l_minus), ("l_plus", c.l_plus)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
        }
    }
    for (name, n) in [("nx", c.nx), ("ny", c.ny), ("nz_minus", c.nz_minus), ("nz_plus", c.nz_plus)] {
        if n == 0 {
            return Err(Error::InvalidGeometry(format!("{name} must be at least 1")));
        }
    }
    let dz = c.l_minus / c.nz_minus as f64;
    match tiles(c.l_plus, dz) {
        Some(n) if n == c.nz_plus => {}
        _ => return Err(Error::NonTilingGrid { what: "l_plus with the spacing of the lower slab" }),
    }
    if c.trace_order == TraceOrder::Second && (c.nz_minus < 2 || c.nz_plus < 2) {
        return Err(Error::InvalidGeometry(
            "second-order traces need at least two cell layers per slab".into(),
        ));
    }
    let (eta, eta_cells) = match c.eta {
        None => (0.0, 0),
        Some(eta) => {
            let limit = c.l_minus.min(c.l_plus);
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidGeometry(format!("eta must be positive, got {eta}")));
            }
            if eta > limit * (1.0 + TILING_TOL) {
                return Err(Error::EtaTooLarge { eta, limit });
            }
            match tiles(eta, dz) {
                Some(n) if n >= 1 => (n as f64 * dz, n),
                _ => return Err(Error::NonTilingGrid { what: "eta" }),
            }
        }
    };
    Ok(DomainGeometry {
        base_lx: c.lx,
        base_ly: c.ly,
        l_minus: c.l_minus,
        l_plus: c.l_plus,
        nx: c.nx,
        ny: c.ny,
        nz_minus: c.nz_minus,
        nz_plus: c.nz_plus,
        dx: c.lx / c.nx as f64,
        dy: c.ly / c.ny as f64,
        dz,
        eta,
        eta_cells,
        trace_order: c.trace_order,
    })
}

impl DomainGeometry {
    #[inline]
    pub fn nz(&self) -> usize {
        self.nz_minus + self.nz_plus
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz()]
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz()
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Footprint `dA = dx·dy` of one column on the spacer.
    #[inline]
    pub fn face_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Index of the z-face carrying the spacer.
    #[inline]
    pub fn spacer_face_index(&self) -> usize {
        self.nz_minus
    }

    pub fn spacings(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn volume(&self) -> f64 {
        self.base_lx * self.base_ly * (self.l_minus + self.l_plus)
    }

    /// Whether layer `k` lies in the upper slab (`z > 0`).
    #[inline]
    pub fn is_upper(&self, k: usize) -> bool {
        k >= self.nz_minus
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            (i as f64 + 0.5) * self.dx,
            (j as f64 + 0.5) * self.dy,
            (k as f64 - self.nz_minus as f64 + 0.5) * self.dz,
        ]
    }

    pub fn thin_layer_active(&self) -> bool {
        self.eta_cells > 0
    }

    /// Whether layer `k` belongs to the η-neighbourhood of the spacer.
    #[inline]
    pub fn in_thin_layer(&self, k: usize) -> bool {
        self.eta_cells > 0 && k + self.eta_cells >= self.nz_minus && k < self.nz_minus + self.eta_cells
    }

    /// Layer index of the reflection `z ↦ -z`, if it exists on the grid.
    #[inline]
    pub fn mirror_layer(&self, k: usize) -> Option<usize> {
        let target = (2 * self.nz_minus).checked_sub(k + 1)?;
        (target < self.nz()).then_some(target)
    }

    /// Column-major index `(i, j)` over the spacer.
    #[inline]
    pub fn column_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }
}

/// Outward normal `ν` of the slab containing layer `k`.
#[inline]
pub fn normal_at(geom: &DomainGeometry, k: usize) -> Vec3 {
    if geom.is_upper(k) {
        scale(-1.0, E_Z)
    } else {
        E_Z
    }
}

/// The extension of the spacer's exterior normal: `-e_z` above, `+e_z` below.
pub fn outward_normal(geom: &DomainGeometry) -> VectorField {
    VectorField::from_fn(geom.dims(), |_, _, k| normal_at(geom, k))
}

/// Traces of `m` on both sides of the spacer, one value per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacerTraces {
    pub nx: usize,
    pub ny: usize,
    /// `γ⁺m`, approached from `z > 0`.
    pub gamma_plus: Vec<Vec3>,
    /// `γ⁻m`, approached from `z < 0`.
    pub gamma_minus: Vec<Vec3>,
}

impl SpacerTraces {
    pub fn uniform(nx: usize, ny: usize, plus: Vec3, minus: Vec3) -> Self {
        Self { nx, ny, gamma_plus: vec![plus; nx * ny], gamma_minus: vec![minus; nx * ny] }
    }

    /// `γ*`: the traces with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            gamma_plus: self.gamma_minus.clone(),
            gamma_minus: self.gamma_plus.clone(),
        }
    }
}

pub fn extract_traces(m: &VectorField, geom: &DomainGeometry) -> Result<SpacerTraces> {
    extract_traces_with(m, geom, geom.trace_order)
}

pub fn extract_traces_with(
    m: &VectorField,
    geom: &DomainGeometry,
    order: TraceOrder,
) -> Result<SpacerTraces> {
    m.check_dims(geom.dims())?;
    let k_up = geom.nz_minus;
    let k_down = geom.nz_minus - 1;
    let mut plus = Vec::with_capacity(geom.nx * geom.ny);
    let mut minus = Vec::with_capacity(geom.nx * geom.ny);
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            match order {
                TraceOrder::First => {
                    plus.push(m.get(i, j, k_up));
                    minus.push(m.get(i, j, k_down));
                }
                TraceOrder::Second => {
                    if geom.nz_minus < 2 || geom.nz_plus < 2 {
                        return Err(Error::InvalidGeometry(
                            "second-order traces need at least two cell layers per slab".into(),
                        ));
                    }
                    let extrapolate = |near: Vec3, far: Vec3| sub(scale(1.5, near), scale(0.5, far));
                    plus.push(extrapolate(m.get(i, j, k_up), m.get(i, j, k_up + 1)));
                    minus.push(extrapolate(m.get(i, j, k_down), m.get(i, j, k_down - 1)));
                }
            }
        }
    }
    Ok(SpacerTraces { nx: geom.nx, ny: geom.ny, gamma_plus: plus, gamma_minus: minus })
}

/// Reflection `m*(x, y, z) = m(x, y, -z)` over the whole domain.
pub fn mirror(m: &VectorField, geom: &DomainGeometry) -> Result<VectorField> {
    m.check_dims(geom.dims())?;
    if geom.nz_minus != geom.nz_plus {
        return Err(Error::AsymmetricSlabs { nz_minus: geom.nz_minus, nz_plus: geom.nz_plus });
    }
    let nz = geom.nz();
    Ok(VectorField::from_fn(geom.dims(), |i, j, k| m.get(i, j, nz - 1 - k)))
}

/// Reflection restricted to the first `layers` cell layers on each side of
/// the spacer; cells outside that band are left at zero.
pub fn mirror_in_layers(m: &VectorField, geom: &DomainGeometry, layers: usize) -> Result<VectorField> {
    m.check_dims(geom.dims())?;
    if layers > geom.nz_minus || layers > geom.nz_plus {
        return Err(Error::AsymmetricSlabs { nz_minus: geom.nz_minus, nz_plus: geom.nz_plus });
    }
    let lo = geom.nz_minus - layers;
    let hi = geom.nz_minus + layers;
    Ok(VectorField::from_fn(geom.dims(), |i, j, k| {
        if (lo..hi).contains(&k) {
            m.get(i, j, 2 * geom.nz_minus - 1 - k)
        } else {
            [0.0; 3]
        }
    }))
}
