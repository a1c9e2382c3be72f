//! Discrete energy functionals.
//!
//! Every volume integral is a midpoint sum over cells with weight `dV`, every
//! spacer integral a sum over columns with weight `dA = dx·dy`. Sums are
//! compensated and evaluated in a fixed order, so results do not depend on
//! thread count.

use crate::effective_field::SurfaceModel;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{extract_traces, normal_at, DomainGeometry, SpacerTraces};
use crate::maxwell::EMState;
use crate::numeric::{sum, CompensatedSum};
use crate::vec3::{cross, dot, is_symmetric_psd, mat_vec, norm2, sub, Mat3, Vec3};

/// Per-cell anisotropy matrix field `K(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyField {
    data: Vec<Mat3>,
}

impl AnisotropyField {
    pub fn zero(cells: usize) -> Self {
        Self::uniform(cells, [[0.0; 3]; 3])
    }

    pub fn uniform(cells: usize, k: Mat3) -> Self {
        Self { data: vec![k; cells] }
    }

    /// Easy axis `a`: `K = κ(I − a aᵀ)` penalizes deviation from `±a`.
    pub fn easy_axis(cells: usize, axis: Vec3, kappa: f64) -> Self {
        let n = norm2(axis).sqrt();
        let a = [axis[0] / n, axis[1] / n, axis[2] / n];
        let mut k = [[0.0; 3]; 3];
        for (r, row) in k.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let id = if r == c { 1.0 } else { 0.0 };
                *v = kappa * (id - a[r] * a[c]);
            }
        }
        Self::uniform(cells, k)
    }

    pub fn from_vec(data: Vec<Mat3>) -> Self {
        Self { data }
    }

    #[inline]
    pub fn get(&self, cell: usize) -> &Mat3 {
        &self.data[cell]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Mat3] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    /// Exchange constant `A`.
    pub a_exch: f64,
    pub anisotropy: AnisotropyField,
    /// Surface anisotropy `Ks`.
    pub ks: f64,
    /// Bilinear super-exchange `J1`.
    pub j1: f64,
    /// Biquadratic super-exchange `J2`.
    pub j2: f64,
    /// Gilbert damping `α`.
    pub alpha: f64,
    pub mu0: f64,
    pub eps0: f64,
    /// Conductivity inside the ferromagnet.
    pub sigma: f64,
}

impl MaterialParams {
    /// Isotropic material with `K = 0` on `cells` cells.
    pub fn isotropic(cells: usize, a_exch: f64, alpha: f64) -> Self {
        Self {
            a_exch,
            anisotropy: AnisotropyField::zero(cells),
            ks: 0.0,
            j1: 0.0,
            j2: 0.0,
            alpha,
            mu0: 1.0,
            eps0: 1.0,
            sigma: 0.0,
        }
    }

    pub fn validate(&self, geom: &DomainGeometry) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for (name, v) in [("a_exch", self.a_exch), ("ks", self.ks), ("j1", self.j1), ("j2", self.j2), ("sigma", self.sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("mu0", self.mu0), ("eps0", self.eps0)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.anisotropy.len() != geom.cell_count() {
            return bad(format!(
                "anisotropy field has {} cells, geometry has {}",
                self.anisotropy.len(),
                geom.cell_count()
            ));
        }
        if let Some(n) = self.anisotropy.as_slice().iter().position(|k| !is_symmetric_psd(k, 1e-12)) {
            return bad(format!("anisotropy matrix at cell {n} is not symmetric positive-semidefinite"));
        }
        Ok(())
    }
}

/// All summands of the total energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub anisotropy: f64,
    pub maxwell_h: f64,
    pub maxwell_e: f64,
    pub surf_anis: f64,
    /// `J1` term of the super-exchange.
    pub superexch_q: f64,
    /// `J2` term of the super-exchange.
    pub superexch_biq: f64,
    pub penalty: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn components(&self) -> [f64; 8] {
        [
            self.exchange,
            self.anisotropy,
            self.maxwell_h,
            self.maxwell_e,
            self.surf_anis,
            self.superexch_q,
            self.superexch_biq,
            self.penalty,
        ]
    }

    fn with_total(mut self) -> Self {
        self.total = sum(self.components());
        self
    }
}

/// `(A/2) Σ ‖∇_h m‖² dV` with forward differences inside each slab; the
/// spacer face is never differenced across.
pub fn exchange_energy(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> f64 {
    let [nx, ny, nz] = geom.dims();
    let (ix2, iy2, iz2) = (geom.dx.powi(-2), geom.dy.powi(-2), geom.dz.powi(-2));
    let mut acc = CompensatedSum::new();
    for k in 0..nz {
        let z_link = k + 1 < nz && k + 1 != geom.nz_minus;
        for j in 0..ny {
            for i in 0..nx {
                let c = m.get(i, j, k);
                let mut local = 0.0;
                if i + 1 < nx {
                    local += norm2(sub(m.get(i + 1, j, k), c)) * ix2;
                }
                if j + 1 < ny {
                    local += norm2(sub(m.get(i, j + 1, k), c)) * iy2;
                }
                if z_link {
                    local += norm2(sub(m.get(i, j, k + 1), c)) * iz2;
                }
                acc.add(local);
            }
        }
    }
    0.5 * params.a_exch * acc.value() * geom.cell_volume()
}

/// `½ Σ (K m)·m dV`.
pub fn anisotropy_energy(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> f64 {
    let s = sum(m.data().iter().enumerate().map(|(n, &v)| dot(mat_vec(params.anisotropy.get(n), v), v)));
    0.5 * s * geom.cell_volume()
}

/// `(J1/2) ∫_Γ ‖γ⁺m − γ⁻m‖²` and `J2 ∫_Γ ‖γ⁺m ∧ γ⁻m‖²`, integrated once over Γ.
pub fn superexchange_energy(traces: &SpacerTraces, params: &MaterialParams, geom: &DomainGeometry) -> (f64, f64) {
    let da = geom.face_area();
    let pairs = || traces.gamma_plus.iter().zip(&traces.gamma_minus);
    let quad = sum(pairs().map(|(&p, &q)| norm2(sub(p, q))));
    let biq = sum(pairs().map(|(&p, &q)| norm2(cross(p, q))));
    (0.5 * params.j1 * quad * da, params.j2 * biq * da)
}

/// `(Ks/2) ∫_{Γ±} ‖γm ∧ ν‖²`, summed over both sides of the spacer.
pub fn surface_anisotropy_energy(traces: &SpacerTraces, params: &MaterialParams, geom: &DomainGeometry) -> f64 {
    let nu_plus = normal_at(geom, geom.nz_minus);
    let nu_minus = normal_at(geom, geom.nz_minus - 1);
    let s = sum(traces
        .gamma_plus
        .iter()
        .zip(&traces.gamma_minus)
        .map(|(&p, &q)| norm2(cross(p, nu_plus)) + norm2(cross(q, nu_minus))));
    0.5 * params.ks * s * geom.face_area()
}

/// Thin-layer integrands `(Ks, J1, J2)` at one cell, before the `1/(2η)` weight.
#[inline]
pub(crate) fn thin_layer_integrands(m: Vec3, m_star: Vec3, nu: Vec3) -> (f64, f64, f64) {
    let mm = norm2(m);
    let ss = norm2(m_star);
    let ms = dot(m, m_star);
    let mn = dot(m, nu);
    (mm - mn * mn, 0.5 * (mm + ss) - ms, ss * mm - ms * ms)
}

/// Energy `E_s^η` spreading the surface energies over the `eta_cells` layers
/// on each side of the spacer.
pub fn thin_layer_energy(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> Result<f64> {
    m.check_dims(geom.dims())?;
    if !geom.thin_layer_active() {
        return Err(Error::ThinLayerInactive);
    }
    let mut acc = CompensatedSum::new();
    for k in (geom.nz_minus - geom.eta_cells)..(geom.nz_minus + geom.eta_cells) {
        let ks = geom.mirror_layer(k).expect("thin layer fits inside both slabs");
        let nu = normal_at(geom, k);
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                let (a, b, c) = thin_layer_integrands(m.get(i, j, k), m.get(i, j, ks), nu);
                acc.add(params.ks * a + params.j1 * b + params.j2 * c);
            }
        }
    }
    Ok(acc.value() * geom.cell_volume() / (2.0 * geom.eta))
}

/// The three thin-layer terms separately: `(Ks, J1, J2)` contributions.
pub fn thin_layer_energy_parts(m: &VectorField, geom: &DomainGeometry, params: &MaterialParams) -> Result<(f64, f64, f64)> {
    m.check_dims(geom.dims())?;
    if !geom.thin_layer_active() {
        return Err(Error::ThinLayerInactive);
    }
    let (mut a, mut b, mut c) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for k in (geom.nz_minus - geom.eta_cells)..(geom.nz_minus + geom.eta_cells) {
        let ks = geom.mirror_layer(k).expect("thin layer fits inside both slabs");
        let nu = normal_at(geom, k);
        for j in 0..geom.ny {
            for i in 0..geom.nx {
                let (x, y, z) = thin_layer_integrands(m.get(i, j, k), m.get(i, j, ks), nu);
                a.add(x);
                b.add(y);
                c.add(z);
            }
        }
    }
    let w = geom.cell_volume() / (2.0 * geom.eta);
    Ok((params.ks * a.value() * w, params.j1 * b.value() * w, params.j2 * c.value() * w))
}

/// `(k/4) Σ (‖m‖² − 1)² dV`.
pub fn penalty_energy(m: &VectorField, geom: &DomainGeometry, k: f64) -> f64 {
    0.25 * k * sum(m.data().iter().map(|&v| (norm2(v) - 1.0).powi(2))) * geom.cell_volume()
}

/// `(½‖h‖², (ε0/2μ0)‖e‖²)` over the computational box, in the discrete form
/// conserved by the leapfrog update (see [`EMState::energy_parts`]).
pub fn maxwell_energy(em: &EMState, params: &MaterialParams) -> (f64, f64) {
    em.energy_parts(params)
}

/// Everything needed to evaluate the total energy of a state.
#[derive(Debug, Clone, Copy)]
pub struct EnergyInputs<'a> {
    pub m: &'a VectorField,
    pub geom: &'a DomainGeometry,
    pub params: &'a MaterialParams,
    pub surface: SurfaceModel,
    /// Penalty coefficient, when the saturation constraint is penalized.
    pub penalty: Option<f64>,
    pub em: Option<&'a EMState>,
}

pub fn total_energy(state: &EnergyInputs<'_>) -> Result<EnergyBreakdown> {
    let EnergyInputs { m, geom, params, surface, penalty, em } = *state;
    m.check_dims(geom.dims())?;
    let mut e = EnergyBreakdown {
        exchange: exchange_energy(m, geom, params),
        anisotropy: anisotropy_energy(m, geom, params),
        ..Default::default()
    };
    match surface {
        SurfaceModel::SharpBc => {
            let traces = extract_traces(m, geom)?;
            e.surf_anis = surface_anisotropy_energy(&traces, params, geom);
            (e.superexch_q, e.superexch_biq) = superexchange_energy(&traces, params, geom);
        }
        SurfaceModel::ThinLayer => {
            (e.surf_anis, e.superexch_q, e.superexch_biq) = thin_layer_energy_parts(m, geom, params)?;
        }
    }
    if let Some(k) = penalty {
        e.penalty = penalty_energy(m, geom, k);
    }
    if let Some(em) = em {
        (e.maxwell_h, e.maxwell_e) = maxwell_energy(em, params);
    }
    Ok(e.with_total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryConfig, TraceOrder};
    use crate::vec3::{scale, E_X, E_Y, E_Z};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_geom(n: usize, nz: usize, eta: Option<f64>) -> DomainGeometry {
        build_geometry(&GeometryConfig {
            lx: 1.0,
            ly: 1.0,
            l_minus: 0.5,
            l_plus: 0.5,
            nx: n,
            ny: n,
            nz_minus: nz,
            nz_plus: nz,
            eta,
            trace_order: TraceOrder::First,
        })
        .unwrap()
    }

    fn params(g: &DomainGeometry) -> MaterialParams {
        let mut p = MaterialParams::isotropic(g.cell_count(), 1.3, 0.5);
        p.ks = 0.7;
        p.j1 = 0.4;
        p.j2 = 0.25;
        p
    }

    fn random_field(g: &DomainGeometry, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField::from_fn(g.dims(), |_, _, _| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
    }

    #[test]
    fn uniform_field_has_no_exchange() {
        let g = unit_geom(4, 2, None);
        let m = VectorField::uniform(g.dims(), [0.6, 0.0, 0.8]);
        assert_eq!(exchange_energy(&m, &g, &params(&g)), 0.0);
    }

    #[test]
    fn exchange_never_couples_across_spacer() {
        let g = unit_geom(4, 2, None);
        let m = VectorField::from_fn(g.dims(), |_, _, k| if g.is_upper(k) { E_X } else { E_Y });
        assert_eq!(exchange_energy(&m, &g, &params(&g)), 0.0);
    }

    /// Helix `m = (cos qz, sin qz, 0)` has exact density `A q²/2`; the forward
    /// difference converges at second order in the chord length.
    #[test]
    fn helix_exchange_converges_second_order() {
        let q = std::f64::consts::PI;
        let a = 1.3;
        let err = |nz: usize| {
            let g = unit_geom(2, nz, None);
            let m = VectorField::from_fn(g.dims(), |i, j, k| {
                let z = g.cell_center(i, j, k)[2];
                [(q * z).cos(), (q * z).sin(), 0.0]
            });
            // Continuous reference over the differenced region: each slab
            // contributes (nz-1) links of length dz.
            let exact = 0.5 * a * q * q * g.base_lx * g.base_ly * 2.0 * (nz as f64 - 1.0) * g.dz;
            (exchange_energy(&m, &g, &params(&g)) - exact).abs() / exact
        };
        let (e1, e2) = (err(8), err(16));
        let order = (e1 / e2).log2();
        assert!(order > 1.9 && order < 2.1, "observed order {order}");
    }

    #[test]
    fn anisotropy_closed_forms() {
        let g = unit_geom(4, 2, None);
        let m = VectorField::uniform(g.dims(), E_Z);
        let mut p = params(&g);
        assert_eq!(anisotropy_energy(&m, &g, &p), 0.0);
        p.anisotropy = AnisotropyField::uniform(g.cell_count(), [[0.0; 3], [0.0; 3], [0.0, 0.0, 3.0]]);
        assert!((anisotropy_energy(&m, &g, &p) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn anisotropy_matches_naive_loop() {
        let g = unit_geom(4, 2, None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ks: Vec<Mat3> = (0..g.cell_count())
            .map(|_| {
                let b: Mat3 = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
                std::array::from_fn(|r| std::array::from_fn(|c| (0..3).map(|l| b[l][r] * b[l][c]).sum()))
            })
            .collect();
        let mut p = params(&g);
        p.anisotropy = AnisotropyField::from_vec(ks.clone());
        let m = random_field(&g, 4);
        let mut naive = 0.0;
        for (n, v) in m.data().iter().enumerate() {
            for r in 0..3 {
                for c in 0..3 {
                    naive += 0.5 * v[r] * ks[n][r][c] * v[c] * g.cell_volume();
                }
            }
        }
        assert!((anisotropy_energy(&m, &g, &p) - naive).abs() < 1e-12 * naive.abs());
    }

    #[test]
    fn superexchange_closed_forms() {
        let g = unit_geom(4, 2, None);
        let p = params(&g);
        let same = SpacerTraces::uniform(4, 4, E_X, E_X);
        assert_eq!(superexchange_energy(&same, &p, &g), (0.0, 0.0));
        let anti = SpacerTraces::uniform(4, 4, E_X, scale(-1.0, E_X));
        let (q, b) = superexchange_energy(&anti, &p, &g);
        assert!((q - 2.0 * p.j1).abs() < 1e-14 && b == 0.0);
        let ortho = SpacerTraces::uniform(4, 4, E_X, E_Y);
        let (q, b) = superexchange_energy(&ortho, &p, &g);
        assert!((q - p.j1).abs() < 1e-14 && (b - p.j2).abs() < 1e-14);
        let r = random_traces(11);
        assert_eq!(superexchange_energy(&r, &p, &g), superexchange_energy(&r.swapped(), &p, &g));
    }

    fn random_traces(seed: u64) -> SpacerTraces {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        SpacerTraces {
            nx: 4,
            ny: 4,
            gamma_plus: (0..16).map(|_| v()).collect(),
            gamma_minus: (0..16).map(|_| v()).collect(),
        }
    }

    #[test]
    fn surface_anisotropy_closed_forms() {
        let g = unit_geom(4, 2, None);
        let p = params(&g);
        let along = SpacerTraces::uniform(4, 4, E_Z, scale(-1.0, E_Z));
        assert_eq!(surface_anisotropy_energy(&along, &p, &g), 0.0);
        let inplane = SpacerTraces::uniform(4, 4, E_X, E_X);
        assert!((surface_anisotropy_energy(&inplane, &p, &g) - p.ks).abs() < 1e-14);
        let s = 0.5f64.sqrt();
        let tilted = SpacerTraces::uniform(4, 4, [s, 0.0, s], [s, 0.0, s]);
        assert!((surface_anisotropy_energy(&tilted, &p, &g) - 0.5 * p.ks).abs() < 1e-14);
    }

    #[test]
    fn thin_layer_closed_forms() {
        let g = unit_geom(4, 4, Some(0.25));
        let p = params(&g);
        let up = VectorField::uniform(g.dims(), E_Z);
        assert!(thin_layer_energy(&up, &g, &p).unwrap().abs() < 1e-15);
        let inplane = VectorField::uniform(g.dims(), E_X);
        assert!((thin_layer_energy(&inplane, &g, &p).unwrap() - p.ks).abs() < 1e-13);
        let split = VectorField::from_fn(g.dims(), |_, _, k| if g.is_upper(k) { E_X } else { scale(-1.0, E_X) });
        let e = thin_layer_energy(&split, &g, &p).unwrap();
        assert!((e - (p.ks + 2.0 * p.j1)).abs() < 1e-13, "{e}");
        assert!(matches!(thin_layer_energy(&split, &unit_geom(4, 4, None), &p), Err(Error::ThinLayerInactive)));
    }

    #[test]
    fn penalty_closed_forms() {
        let g = unit_geom(4, 2, None);
        assert_eq!(penalty_energy(&VectorField::uniform(g.dims(), E_Y), &g, 10.0), 0.0);
        let m = VectorField::uniform(g.dims(), [2.0, 0.0, 0.0]);
        assert!((penalty_energy(&m, &g, 10.0) - 22.5).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_of_components() {
        let g = unit_geom(4, 2, None);
        let p = params(&g);
        let m = random_field(&g, 9);
        let inputs = EnergyInputs { m: &m, geom: &g, params: &p, surface: SurfaceModel::SharpBc, penalty: Some(3.0), em: None };
        let e = total_energy(&inputs).unwrap();
        assert_eq!(e.total, sum(e.components()));
        assert!(e.components().iter().all(|&c| c >= 0.0));
        let aligned = VectorField::uniform(g.dims(), E_Z);
        let mut quiet = p.clone();
        quiet.ks = 0.0;
        let inputs = EnergyInputs { m: &aligned, params: &quiet, ..inputs };
        assert_eq!(total_energy(&inputs).unwrap().total, 0.0);
    }
}
