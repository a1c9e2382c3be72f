//! Effective field `h_tot = h − Km + AΔm + surface + penalty` on the cells of Ω.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energetics::MaterialParams;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{extract_traces, normal_at, DomainGeometry, SpacerTraces};
use crate::vec3::{add, axpy, dot, mat_vec, norm2, scale, sub, Vec3, ZERO};

/// How the spacer energies enter the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceModel {
    /// Nonlinear Neumann condition realized by ghost cells.
    #[default]
    SharpBc,
    /// Volumized surface energy over the η-layer.
    ThinLayer,
}

/// Treatment of the saturation constraint `‖m‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Constraint {
    /// Penalty field `−k(‖m‖²−1)m`.
    Penalized { k: f64 },
    /// Exact renormalization after each step.
    #[default]
    Projected,
}

impl Constraint {
    pub fn penalty(&self) -> Option<f64> {
        match *self {
            Constraint::Penalized { k } => Some(k),
            Constraint::Projected => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldAssembly {
    pub surface: SurfaceModel,
    pub constraint: Constraint,
}

/// Prescribed normal derivative `∂m/∂ν` of the nonlinear boundary condition
/// at one side of the spacer, given the trace `g`, the opposite trace `gs`
/// and the outward normal `nu`.
pub fn bc_normal_derivative(g: Vec3, gs: Vec3, nu: Vec3, params: &MaterialParams) -> Result<Vec3> {
    if params.a_exch == 0.0 {
        return Err(Error::ZeroExchange);
    }
    Ok(bc_normal_derivative_unchecked(g, gs, nu, params))
}

#[inline]
fn bc_normal_derivative_unchecked(g: Vec3, gs: Vec3, nu: Vec3, params: &MaterialParams) -> Vec3 {
    let ng = dot(nu, g);
    let gg = dot(g, gs);
    let jump = axpy(gs, -gg, g);
    let ks = scale(params.ks * ng, axpy(nu, -ng, g));
    let j = scale(params.j1 + 2.0 * params.j2 * gg, jump);
    scale(1.0 / params.a_exch, add(ks, j))
}

/// Ghost data of the sharp boundary condition, one entry per spacer column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacerGhosts {
    /// `∂m/∂ν` on Γ⁺ and Γ⁻.
    pub deriv_plus: Vec<Vec3>,
    pub deriv_minus: Vec<Vec3>,
    /// Ghost values standing in for the cell across the spacer.
    pub ghost_plus: Vec<Vec3>,
    pub ghost_minus: Vec<Vec3>,
}

/// Ghost values `g = interior + dz·∂m/∂ν` for both faces. With the outward
/// normal of each slab the same sign works on both sides.
pub fn nonlinear_bc_ghost(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> Result<SpacerGhosts> {
    let traces = extract_traces(m, geom)?;
    ghosts_from_traces(m, &traces, geom, params)
}

pub fn ghosts_from_traces(
    m: &VectorField,
    traces: &SpacerTraces,
    geom: &DomainGeometry,
    params: &MaterialParams,
) -> Result<SpacerGhosts> {
    if params.a_exch == 0.0 {
        return Err(Error::ZeroExchange);
    }
    let nu_plus = normal_at(geom, geom.nz_minus);
    let nu_minus = normal_at(geom, geom.nz_minus - 1);
    let cols = geom.nx * geom.ny;
    let mut out = SpacerGhosts {
        deriv_plus: Vec::with_capacity(cols),
        deriv_minus: Vec::with_capacity(cols),
        ghost_plus: Vec::with_capacity(cols),
        ghost_minus: Vec::with_capacity(cols),
    };
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            let c = geom.column_index(i, j);
            let (gp, gm) = (traces.gamma_plus[c], traces.gamma_minus[c]);
            let dp = bc_normal_derivative_unchecked(gp, gm, nu_plus, params);
            let dm = bc_normal_derivative_unchecked(gm, gp, nu_minus, params);
            out.ghost_plus.push(axpy(m.get(i, j, geom.nz_minus), geom.dz, dp));
            out.ghost_minus.push(axpy(m.get(i, j, geom.nz_minus - 1), geom.dz, dm));
            out.deriv_plus.push(dp);
            out.deriv_minus.push(dm);
        }
    }
    Ok(out)
}

/// 7-point Laplacian with mirror ghosts on ∂Ω and at the spacer. With
/// `ghosts`, the spacer neighbours are replaced by the nonlinear ghost values.
pub fn laplacian_neumann(m: &VectorField, geom: &DomainGeometry, ghosts: Option<&SpacerGhosts>) -> Result<VectorField> {
    m.check_dims(geom.dims())?;
    let [nx, ny, nz] = geom.dims();
    let (ix2, iy2, iz2) = (geom.dx.powi(-2), geom.dy.powi(-2), geom.dz.powi(-2));
    let data: Vec<Vec3> = (0..m.len())
        .into_par_iter()
        .map(|idx| {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let c = m.get(i, j, k);
            let mut acc = ZERO;
            let mut link = |n: Vec3, w: f64| acc = axpy(acc, w, sub(n, c));
            if i > 0 {
                link(m.get(i - 1, j, k), ix2);
            }
            if i + 1 < nx {
                link(m.get(i + 1, j, k), ix2);
            }
            if j > 0 {
                link(m.get(i, j - 1, k), iy2);
            }
            if j + 1 < ny {
                link(m.get(i, j + 1, k), iy2);
            }
            if k > 0 && k != geom.nz_minus {
                link(m.get(i, j, k - 1), iz2);
            }
            if k + 1 < nz && k + 1 != geom.nz_minus {
                link(m.get(i, j, k + 1), iz2);
            }
            if let Some(g) = ghosts {
                let col = geom.column_index(i, j);
                if k == geom.nz_minus {
                    link(g.ghost_plus[col], iz2);
                } else if k + 1 == geom.nz_minus {
                    link(g.ghost_minus[col], iz2);
                }
            }
            acc
        })
        .collect();
    VectorField::from_vec(m.dims(), data)
}

/// Thin-layer field `H_s^η`, zero outside the flagged layers.
pub fn thin_layer_field(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> Result<VectorField> {
    m.check_dims(geom.dims())?;
    if !geom.thin_layer_active() {
        return Err(Error::ThinLayerInactive);
    }
    let [nx, ny, _] = geom.dims();
    let w = 1.0 / (2.0 * geom.eta);
    let data: Vec<Vec3> = (0..m.len())
        .into_par_iter()
        .map(|idx| {
            let k = idx / (nx * ny);
            if !geom.in_thin_layer(k) {
                return ZERO;
            }
            let (i, j) = (idx % nx, (idx / nx) % ny);
            let ms = m.get(i, j, geom.mirror_layer(k).expect("thin layer fits inside both slabs"));
            let v = m.get(i, j, k);
            let nu = normal_at(geom, k);
            let ks = scale(2.0 * params.ks, sub(scale(dot(v, nu), nu), v));
            let j1 = scale(2.0 * params.j1, sub(ms, v));
            let j2 = scale(4.0 * params.j2, sub(scale(dot(v, ms), ms), scale(norm2(ms), v)));
            scale(w, add(add(ks, j1), j2))
        })
        .collect();
    VectorField::from_vec(m.dims(), data)
}

/// `−k(‖m‖²−1)m` per cell.
pub fn penalty_field(m: &VectorField, k: f64) -> VectorField {
    let data = m.data().par_iter().map(|&v| scale(-k * (norm2(v) - 1.0), v)).collect();
    VectorField::from_vec(m.dims(), data).expect("same shape")
}

/// Full effective field with `h` (already on cells) frozen.
pub fn assemble_h_tot(
    m: &VectorField,
    h: Option<&VectorField>,
    geom: &DomainGeometry,
    params: &MaterialParams,
    assembly: &FieldAssembly,
) -> Result<VectorField> {
    m.check_dims(geom.dims())?;
    if let Some(h) = h {
        h.check_dims(geom.dims())?;
    }
    let (ghosts, surface) = match assembly.surface {
        SurfaceModel::SharpBc => {
            let surface_active = params.ks != 0.0 || params.j1 != 0.0 || params.j2 != 0.0;
            let ghosts = if surface_active { Some(nonlinear_bc_ghost(m, geom, params)?) } else { None };
            (ghosts, None)
        }
        SurfaceModel::ThinLayer => (None, Some(thin_layer_field(m, geom, params)?)),
    };
    let lap = laplacian_neumann(m, geom, ghosts.as_ref())?;
    let penalty = assembly.constraint.penalty();
    let a = params.a_exch;
    let data = (0..m.len())
        .into_par_iter()
        .map(|n| {
            let v = m.data()[n];
            let mut out = axpy(scale(-1.0, mat_vec(params.anisotropy.get(n), v)), a, lap.data()[n]);
            if let Some(h) = h {
                out = add(out, h.data()[n]);
            }
            if let Some(s) = &surface {
                out = add(out, s.data()[n]);
            }
            if let Some(k) = penalty {
                out = axpy(out, -k * (norm2(v) - 1.0), v);
            }
            out
        })
        .collect();
    VectorField::from_vec(m.dims(), data)
}
