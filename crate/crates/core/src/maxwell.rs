//! Yee-grid Maxwell solver on a padded box around the magnet.
//!
//! `h` lives on cell faces, `e` on cell edges. Component `a` of a face field
//! is stored on the faces normal to axis `a` (dims `+1` along `a`); component
//! `a` of an edge field on the edges parallel to `a` (dims `+1` across `a`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energetics::MaterialParams;
use crate::error::{Error, Result};
use crate::field::{Grid3, VectorField};
use crate::geometry::DomainGeometry;
use crate::numeric::CompensatedSum;
use crate::poisson::solve_neumann;
use crate::vec3::{Vec3, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Perfect electric conductor: tangential `e` held at zero.
    #[default]
    Pec,
    /// First-order Mur absorbing walls.
    Mur1,
}

/// Computational box: the magnet grid padded by `padding` cells per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YeeBox {
    pub dims: [usize; 3],
    pub padding: usize,
    pub spacing: [f64; 3],
    pub magnet: [usize; 3],
}

impl YeeBox {
    pub fn around(geom: &DomainGeometry, padding: usize) -> Self {
        let magnet = geom.dims();
        Self { dims: magnet.map(|n| n + 2 * padding), padding, spacing: geom.spacings(), magnet }
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    pub fn edge_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims.map(|n| n + 1);
        d[axis] -= 1;
        d
    }

    /// Index into the magnet grid of box cell `c`, if it lies in Ω.
    #[inline]
    pub fn magnet_cell(&self, c: [isize; 3]) -> Option<usize> {
        let p = self.padding as isize;
        let mut local = [0usize; 3];
        for a in 0..3 {
            let v = c[a] - p;
            if v < 0 || v >= self.magnet[a] as isize {
                return None;
            }
            local[a] = v as usize;
        }
        Some(local[0] + self.magnet[0] * (local[1] + self.magnet[1] * local[2]))
    }

    /// Largest stable leapfrog step `1/(c·√Σ h⁻²)`.
    pub fn cfl_limit(&self, mu0: f64, eps0: f64) -> f64 {
        let c = 1.0 / (mu0 * eps0).sqrt();
        1.0 / (c * self.spacing.iter().map(|h| h.powi(-2)).sum::<f64>().sqrt())
    }

    /// Quadrature weight of a face sample: `½` on the box walls.
    #[inline]
    fn face_weight(&self, axis: usize, c: [usize; 3]) -> f64 {
        if c[axis] == 0 || c[axis] == self.dims[axis] {
            0.5
        } else {
            1.0
        }
    }

    /// Quadrature weight of an edge sample: `½` per wall it lies on.
    #[inline]
    fn edge_weight(&self, axis: usize, c: [usize; 3]) -> f64 {
        let mut w = 1.0;
        for b in (0..3).filter(|&b| b != axis) {
            if c[b] == 0 || c[b] == self.dims[b] {
                w *= 0.5;
            }
        }
        w
    }

    #[inline]
    fn edge_is_boundary(&self, axis: usize, c: [usize; 3]) -> bool {
        (0..3).filter(|&b| b != axis).any(|b| c[b] == 0 || c[b] == self.dims[b])
    }

    /// Sum of `value(cell)/4` over the Ω cells sharing edge `c` of axis `axis`.
    #[inline]
    fn edge_gather(&self, axis: usize, c: [usize; 3], mut value: impl FnMut(usize) -> f64) -> f64 {
        let (b, d) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut acc = 0.0;
        for db in 0..2isize {
            for dd in 0..2isize {
                let mut cell = c.map(|x| x as isize);
                cell[b] -= db;
                cell[d] -= dd;
                if let Some(n) = self.magnet_cell(cell) {
                    acc += 0.25 * value(n);
                }
            }
        }
        acc
    }
}

/// Three staggered scalar grids, one per vector component.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub comps: [Grid3; 3],
}

impl StaggeredField {
    pub fn faces(yee: &YeeBox) -> Self {
        Self { comps: std::array::from_fn(|a| Grid3::zeros(yee.face_dims(a))) }
    }

    pub fn edges(yee: &YeeBox) -> Self {
        Self { comps: std::array::from_fn(|a| Grid3::zeros(yee.edge_dims(a))) }
    }

    pub fn uniform_faces(yee: &YeeBox, v: Vec3) -> Self {
        let mut f = Self::faces(yee);
        for (a, g) in f.comps.iter_mut().enumerate() {
            g.data.iter_mut().for_each(|x| *x = v[a]);
        }
        f
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(Grid3::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(Grid3::max_abs).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().for_each(|g| g.data.iter_mut().for_each(|x| *x *= s));
        out
    }
}

#[inline]
fn shift(c: [usize; 3], axis: usize) -> [usize; 3] {
    let mut c = c;
    c[axis] += 1;
    c
}

#[inline]
fn back(c: [usize; 3], axis: usize) -> [usize; 3] {
    let mut c = c;
    c[axis] -= 1;
    c
}

#[inline]
fn at(g: &Grid3, c: [usize; 3]) -> f64 {
    g.get(c[0], c[1], c[2])
}

fn par_fill(dims: [usize; 3], f: impl Fn([usize; 3]) -> f64 + Sync) -> Grid3 {
    let n = dims[0] * dims[1] * dims[2];
    let data = (0..n)
        .into_par_iter()
        .map(|idx| f([idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])]))
        .collect();
    Grid3 { dims, data }
}

/// Discrete curl of an edge field, sampled on faces.
pub fn curl_e(yee: &YeeBox, e: &StaggeredField) -> StaggeredField {
    let h = yee.spacing;
    StaggeredField {
        comps: std::array::from_fn(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            par_fill(yee.face_dims(a), |f| {
                (at(&e.comps[c], shift(f, b)) - at(&e.comps[c], f)) / h[b]
                    - (at(&e.comps[b], shift(f, c)) - at(&e.comps[b], f)) / h[c]
            })
        }),
    }
}

/// Discrete curl of a face field, sampled on interior edges (zero on walls).
pub fn curl_h(yee: &YeeBox, hf: &StaggeredField) -> StaggeredField {
    let h = yee.spacing;
    StaggeredField {
        comps: std::array::from_fn(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            par_fill(yee.edge_dims(a), |ed| {
                if yee.edge_is_boundary(a, ed) {
                    return 0.0;
                }
                (at(&hf.comps[c], ed) - at(&hf.comps[c], back(ed, b))) / h[b]
                    - (at(&hf.comps[b], ed) - at(&hf.comps[b], back(ed, c))) / h[c]
            })
        }),
    }
}

/// Divergence of a face field at box cell centers.
pub fn divergence(yee: &YeeBox, f: &StaggeredField) -> Grid3 {
    let h = yee.spacing;
    par_fill(yee.dims, |c| (0..3).map(|a| (at(&f.comps[a], shift(c, a)) - at(&f.comps[a], c)) / h[a]).sum())
}

/// Transfer `T`: zero-extended cell field averaged onto faces.
pub fn transfer_to_faces(yee: &YeeBox, m: &VectorField) -> StaggeredField {
    let value = |c: [isize; 3], a: usize| yee.magnet_cell(c).map_or(0.0, |n| m.data()[n][a]);
    StaggeredField {
        comps: std::array::from_fn(|a| {
            par_fill(yee.face_dims(a), |f| {
                let hi = f.map(|x| x as isize);
                let mut lo = hi;
                lo[a] -= 1;
                0.5 * (value(lo, a) + value(hi, a))
            })
        }),
    }
}

/// Interpolation `I = Tᵀ`: face values averaged to the cells of Ω.
pub fn interp_to_cells(yee: &YeeBox, f: &StaggeredField) -> VectorField {
    let p = yee.padding;
    VectorField::from_fn(yee.magnet, |i, j, k| {
        let c = [i + p, j + p, k + p];
        std::array::from_fn(|a| 0.5 * (at(&f.comps[a], c) + at(&f.comps[a], shift(c, a))))
    })
}

/// Time-dependent applied current `f`, uniform over Ω.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AppliedCurrent {
    #[default]
    Zero,
    /// `amplitude · exp(−((t−t0)/width)²)`.
    Pulse { amplitude: Vec3, t0: f64, width: f64 },
}

impl AppliedCurrent {
    pub fn value(&self, t: f64) -> Vec3 {
        match *self {
            AppliedCurrent::Zero => ZERO,
            AppliedCurrent::Pulse { amplitude, t0, width } => {
                let g = (-((t - t0) / width).powi(2)).exp();
                amplitude.map(|x| x * g)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, AppliedCurrent::Zero)
    }
}

/// Energy exchanged during one Maxwell substep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepIncrements {
    /// `(σ/μ0) τ Σ |ē|²` over conducting edges.
    pub ohmic: f64,
    /// `(σ/μ0) τ Σ ē·f`.
    pub source: f64,
    /// `−⟨(hⁿ+hⁿ⁺¹)/2, δm̄⟩`: work done on the field by the magnetization.
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EMState {
    pub yee: YeeBox,
    pub e: StaggeredField,
    pub h: StaggeredField,
    pub bc: BoundaryCondition,
    /// Leapfrog substep; enters the discrete electric energy.
    pub substep: f64,
    div_ref: Grid3,
    /// Fraction of each edge's neighbourhood inside Ω.
    omega_weight: [Vec<f64>; 3],
}

impl EMState {
    pub fn new(yee: YeeBox, bc: BoundaryCondition, substep: f64) -> Self {
        let omega_weight = std::array::from_fn(|a| {
            let g = Grid3::zeros(yee.edge_dims(a));
            (0..g.data.len())
                .map(|n| {
                    let (i, j, k) = g.coords(n);
                    yee.edge_gather(a, [i, j, k], |_| 1.0)
                })
                .collect()
        });
        Self {
            e: StaggeredField::edges(&yee),
            h: StaggeredField::faces(&yee),
            div_ref: Grid3::zeros(yee.dims),
            yee,
            bc,
            substep,
            omega_weight,
        }
    }

    /// Records `div(h + T m)` as the reference for [`Self::divergence_drift`].
    pub fn reset_div_ref(&mut self, m: &VectorField) {
        self.div_ref = self.div_b(m);
    }

    /// `div(h + T m)` at box cell centers.
    pub fn div_b(&self, m: &VectorField) -> Grid3 {
        let tm = transfer_to_faces(&self.yee, m);
        let mut b = self.h.clone();
        for (g, t) in b.comps.iter_mut().zip(&tm.comps) {
            g.data.iter_mut().zip(&t.data).for_each(|(x, y)| *x += y);
        }
        divergence(&self.yee, &b)
    }

    pub fn divergence_drift(&self, m: &VectorField) -> f64 {
        let d = self.div_b(m);
        d.data.iter().zip(&self.div_ref.data).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn interp_h_to_cells(&self) -> VectorField {
        interp_to_cells(&self.yee, &self.h)
    }

    /// `(½‖h‖², (ε0/2μ0)‖e‖² − (τ²/8μ0²)‖curl e‖²)`. The correction vanishes
    /// as `τ → 0`; with it the leapfrog conserves energy exactly.
    pub fn energy_parts(&self, params: &MaterialParams) -> (f64, f64) {
        let dv = self.yee.cell_volume();
        let yee = &self.yee;
        let face_sq = |f: &StaggeredField| {
            let mut acc = CompensatedSum::new();
            for (a, g) in f.comps.iter().enumerate() {
                for (n, &x) in g.data.iter().enumerate() {
                    let (i, j, k) = g.coords(n);
                    acc.add(yee.face_weight(a, [i, j, k]) * x * x);
                }
            }
            acc.value() * dv
        };
        let mut e2 = CompensatedSum::new();
        for (a, g) in self.e.comps.iter().enumerate() {
            for (n, &x) in g.data.iter().enumerate() {
                let (i, j, k) = g.coords(n);
                e2.add(yee.edge_weight(a, [i, j, k]) * x * x);
            }
        }
        let plain = 0.5 * params.eps0 / params.mu0 * e2.value() * dv;
        let correction = if self.substep > 0.0 {
            self.substep.powi(2) / (8.0 * params.mu0.powi(2)) * face_sq(&curl_e(yee, &self.e))
        } else {
            0.0
        };
        (0.5 * face_sq(&self.h), plain - correction)
    }

    /// One kick-drift-kick leapfrog substep of length `tau`.
    ///
    /// `m_rate` is `T(∂m/∂t)` on faces; `f` the applied current on the cells
    /// of Ω at the substep midpoint.
    pub fn fdtd_step(
        &mut self,
        m_rate: Option<&StaggeredField>,
        f: Option<&VectorField>,
        params: &MaterialParams,
        tau: f64,
    ) -> Result<StepIncrements> {
        let limit = self.yee.cfl_limit(params.mu0, params.eps0);
        if !(tau > 0.0) || tau > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt: tau, limit });
        }
        self.substep = tau;
        let yee = self.yee;
        let kick = tau / (2.0 * params.mu0);
        let h_old = self.h.clone();
        self.half_kick(kick, m_rate, tau);

        let e_old = self.e.clone();
        let ch = curl_h(&yee, &self.h);
        let sigma = params.sigma;
        let source: [Vec<f64>; 3] = std::array::from_fn(|a| match f {
            Some(f) if sigma > 0.0 => {
                let g = &self.e.comps[a];
                (0..g.data.len())
                    .map(|n| {
                        let (i, j, k) = g.coords(n);
                        yee.edge_gather(a, [i, j, k], |cell| f.data()[cell][a])
                    })
                    .collect()
            }
            _ => vec![0.0; self.e.comps[a].data.len()],
        });
        for a in 0..3 {
            let w = &self.omega_weight[a];
            let g = &mut self.e.comps[a];
            let dims = g.dims;
            let (curl, src) = (&ch.comps[a].data, &source[a]);
            g.data.par_iter_mut().enumerate().for_each(|(n, x)| {
                let c = [n % dims[0], (n / dims[0]) % dims[1], n / (dims[0] * dims[1])];
                if yee.edge_is_boundary(a, c) {
                    return;
                }
                let s = sigma * w[n] * tau / (2.0 * params.eps0);
                *x = ((1.0 - s) * *x + tau / params.eps0 * (curl[n] - sigma * src[n])) / (1.0 + s);
            });
        }
        if self.bc == BoundaryCondition::Mur1 {
            self.apply_mur(&e_old, params, tau);
        }
        self.half_kick(kick, m_rate, tau);

        let dv = yee.cell_volume();
        let mut inc = StepIncrements::default();
        if sigma > 0.0 {
            let (mut ohm, mut src) = (CompensatedSum::new(), CompensatedSum::new());
            for a in 0..3 {
                let g = &self.e.comps[a];
                for n in 0..g.data.len() {
                    let w = self.omega_weight[a][n];
                    if w == 0.0 {
                        continue;
                    }
                    let (i, j, k) = g.coords(n);
                    let q = yee.edge_weight(a, [i, j, k]);
                    let mean = 0.5 * (g.data[n] + e_old.comps[a].data[n]);
                    ohm.add(q * w * mean * mean);
                    src.add(q * mean * source[a][n]);
                }
            }
            let factor = sigma / params.mu0 * tau * dv;
            inc.ohmic = factor * ohm.value();
            inc.source = factor * src.value();
        }
        if let Some(rate) = m_rate {
            let mut acc = CompensatedSum::new();
            for a in 0..3 {
                let g = &rate.comps[a];
                for (n, &r) in g.data.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let (i, j, k) = g.coords(n);
                    let mean = 0.5 * (self.h.comps[a].data[n] + h_old.comps[a].data[n]);
                    acc.add(yee.face_weight(a, [i, j, k]) * mean * r);
                }
            }
            inc.coupling = -acc.value() * tau * dv;
        }
        Ok(inc)
    }

    fn half_kick(&mut self, kick: f64, m_rate: Option<&StaggeredField>, tau: f64) {
        let ce = curl_e(&self.yee, &self.e);
        for a in 0..3 {
            let g = &mut self.h.comps[a];
            let curl = &ce.comps[a].data;
            match m_rate {
                Some(rate) => {
                    let r = &rate.comps[a].data;
                    g.data.par_iter_mut().enumerate().for_each(|(n, x)| *x -= kick * curl[n] + 0.5 * tau * r[n]);
                }
                None => g.data.par_iter_mut().enumerate().for_each(|(n, x)| *x -= kick * curl[n]),
            }
        }
    }

    fn apply_mur(&mut self, e_old: &StaggeredField, params: &MaterialParams, tau: f64) {
        let c = 1.0 / (params.mu0 * params.eps0).sqrt();
        let yee = self.yee;
        for a in 0..3 {
            let g = &mut self.e.comps[a];
            let old = &e_old.comps[a];
            for n in 0..g.data.len() {
                let (i, j, k) = g.coords(n);
                let pos = [i, j, k];
                let Some(b) = (0..3).find(|&b| b != a && (pos[b] == 0 || pos[b] == yee.dims[b])) else {
                    continue;
                };
                let inner = if pos[b] == 0 { shift(pos, b) } else { back(pos, b) };
                let h = yee.spacing[b];
                let coef = (c * tau - h) / (c * tau + h);
                let value = at(old, inner) + coef * (at(g, inner) - old.data[n]);
                g.data[n] = value;
            }
        }
    }
}

/// Initial magnetic excitation.
#[derive(Debug, Clone, PartialEq)]
pub enum H0Spec {
    /// `h0 = −∇φ` with `Δφ = div T m0`.
    Magnetostatic,
    /// A raw face field, projected so that `div(h0 + T m0) = 0`.
    Explicit(StaggeredField),
}

/// Gradient `−∇φ` of a cell potential on faces, zero on the walls.
pub fn neg_gradient(yee: &YeeBox, phi: &Grid3) -> StaggeredField {
    let h = yee.spacing;
    StaggeredField {
        comps: std::array::from_fn(|a| {
            par_fill(yee.face_dims(a), |f| {
                if f[a] == 0 || f[a] == yee.dims[a] {
                    0.0
                } else {
                    -(at(phi, f) - at(phi, back(f, a))) / h[a]
                }
            })
        }),
    }
}

/// Curl-free `H = −∇φ` with `div(H + T m) = 0`, walls insulating.
pub fn magnetostatic_field(yee: &YeeBox, m: &VectorField) -> Result<StaggeredField> {
    let rhs = divergence(yee, &transfer_to_faces(yee, m));
    let phi = solve_neumann(&rhs, yee.spacing)?;
    Ok(neg_gradient(yee, &phi))
}

/// Builds the initial EM state with divergence-compatible `h0` and `e0 = 0`.
pub fn init_divfree(
    m0: &VectorField,
    geom: &DomainGeometry,
    padding: usize,
    spec: &H0Spec,
    bc: BoundaryCondition,
    substep: f64,
) -> Result<EMState> {
    m0.check_dims(geom.dims())?;
    let yee = YeeBox::around(geom, padding);
    let mut em = EMState::new(yee, bc, substep);
    em.h = match spec {
        H0Spec::Magnetostatic => magnetostatic_field(&yee, m0)?,
        H0Spec::Explicit(raw) => {
            for a in 0..3 {
                if raw.comps[a].dims != yee.face_dims(a) {
                    return Err(Error::ShapeMismatch { expected: yee.face_dims(a), found: raw.comps[a].dims });
                }
            }
            let tm = transfer_to_faces(&yee, m0);
            let mut b = raw.clone();
            for (g, t) in b.comps.iter_mut().zip(&tm.comps) {
                g.data.iter_mut().zip(&t.data).for_each(|(x, y)| *x += y);
            }
            let phi = solve_neumann(&divergence(&yee, &b), yee.spacing)?;
            let grad = neg_gradient(&yee, &phi);
            let mut h = raw.clone();
            for (g, d) in h.comps.iter_mut().zip(&grad.comps) {
                g.data.iter_mut().zip(&d.data).for_each(|(x, y)| *x += y);
            }
            h
        }
    };
    em.reset_div_ref(m0);
    Ok(em)
}
