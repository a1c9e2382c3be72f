//! Time integration of the Landau-Lifshitz-Gilbert equation coupled to the
//! Maxwell stepper.
//!
//! Each step advances `m` by an explicit Runge-Kutta method with the cell
//! field `h` frozen at the step start, then runs `subcycles` leapfrog
//! substeps driven by the realized rate `(mⁿ⁺¹ − mⁿ)/dt`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective_field::{assemble_h_tot, Constraint, FieldAssembly};
use crate::energetics::{total_energy, EnergyBreakdown, EnergyInputs, MaterialParams};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::DomainGeometry;
use crate::maxwell::{transfer_to_faces, AppliedCurrent, EMState};
use crate::numeric::sum;
use crate::vec3::{add, axpy, cross, dot, is_finite, norm, norm2, scale, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Heun,
    Rk4,
}

/// Source of the field `h` seen by the magnetization.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldCoupling {
    /// Full Maxwell coupling.
    Maxwell(EMState),
    /// Fixed applied field on the cells of Ω, not fed back by `m`.
    Static(VectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Maxwell substeps per magnetization step.
    pub subcycles: usize,
    pub integrator: Integrator,
    pub assembly: FieldAssembly,
    /// Safety factor `C` of the explicit stability bound.
    pub stability_c: f64,
    pub current: AppliedCurrent,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            subcycles: 1,
            integrator: Integrator::Heun,
            assembly: FieldAssembly::default(),
            stability_c: 0.25,
            current: AppliedCurrent::Zero,
        }
    }
}

/// Solves `α v + m ∧ v = F`.
#[inline]
pub fn gilbert_solve(m: Vec3, f: Vec3, alpha: f64) -> Vec3 {
    let mf = cross(m, f);
    let num = axpy(sub(scale(alpha, f), mf), dot(m, f) / alpha, m);
    scale(1.0 / (alpha * alpha + norm2(m)), num)
}

/// `∂m/∂t` for the current `m` with `h` (on cells) frozen.
///
/// In projected mode the driving field is restricted to the tangent plane of
/// `m`, which is the Landau-Lifshitz form `−m∧h − αm∧(m∧h)`.
pub fn llg_rhs(
    m: &VectorField,
    h: Option<&VectorField>,
    geom: &DomainGeometry,
    params: &MaterialParams,
    assembly: &FieldAssembly,
) -> Result<VectorField> {
    let htot = assemble_h_tot(m, h, geom, params, assembly)?;
    let alpha = params.alpha;
    let gain = 1.0 + alpha * alpha;
    let projected = matches!(assembly.constraint, Constraint::Projected);
    let data = m
        .data()
        .par_iter()
        .zip(htot.data())
        .map(|(&v, &f)| {
            let f = if projected {
                let n2 = norm2(v);
                if n2 > 0.0 {
                    axpy(f, -dot(v, f) / n2, v)
                } else {
                    f
                }
            } else {
                f
            };
            gilbert_solve(v, scale(gain, f), alpha)
        })
        .collect();
    VectorField::from_vec(m.dims(), data)
}

/// Explicit stability bound `C·h²·α/(A(1+α²))`, tightened by the penalty
/// stiffness when present.
pub fn stability_limit(geom: &DomainGeometry, params: &MaterialParams, scheme: &SchemeConfig) -> f64 {
    let alpha = params.alpha;
    let gain = 1.0 + alpha * alpha;
    let c = scheme.stability_c;
    let hmin = geom.spacings().into_iter().fold(f64::INFINITY, f64::min);
    let mut limit = if params.a_exch > 0.0 { c * hmin * hmin * alpha / (params.a_exch * gain) } else { f64::INFINITY };
    if let Constraint::Penalized { k } = scheme.assembly.constraint {
        if k > 0.0 {
            limit = limit.min(4.0 * c * alpha / (k * gain));
        }
    }
    limit
}

/// Running time integrals of the energy inequality.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerIntegrals {
    /// `(α/(1+α²)) ∫ ‖∂m/∂t‖²`, trapezoid on the step endpoints.
    pub dissipation: f64,
    /// `(σ/μ0) ∫ ‖e‖²` over the conductor.
    pub ohmic: f64,
    /// `(σ/μ0) ∫ e·f`.
    pub source: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub step: usize,
    pub m: VectorField,
    pub coupling: FieldCoupling,
    pub params: MaterialParams,
    pub geom: DomainGeometry,
    pub integrals: LedgerIntegrals,
    /// `∂m/∂t` at the current state, reused as the next step's first stage.
    rate: Option<VectorField>,
}

impl SimState {
    pub fn new(geom: DomainGeometry, params: MaterialParams, m: VectorField, coupling: FieldCoupling) -> Result<Self> {
        m.check_dims(geom.dims())?;
        params.validate(&geom)?;
        if !m.is_finite() {
            return Err(Error::NonFinite { step: 0, what: "initial magnetization".into() });
        }
        match &coupling {
            FieldCoupling::Maxwell(em) => {
                if em.yee.magnet != geom.dims() {
                    return Err(Error::ShapeMismatch { expected: geom.dims(), found: em.yee.magnet });
                }
                if !(em.h.is_finite() && em.e.is_finite()) {
                    return Err(Error::NonFinite { step: 0, what: "initial electromagnetic field".into() });
                }
            }
            FieldCoupling::Static(h) => {
                h.check_dims(geom.dims())?;
                if !h.is_finite() {
                    return Err(Error::NonFinite { step: 0, what: "applied field".into() });
                }
            }
        }
        Ok(Self { t: 0.0, step: 0, m, coupling, params, geom, integrals: LedgerIntegrals::default(), rate: None })
    }

    pub fn em(&self) -> Option<&EMState> {
        match &self.coupling {
            FieldCoupling::Maxwell(em) => Some(em),
            FieldCoupling::Static(_) => None,
        }
    }

    /// `h` on the cells of Ω.
    pub fn h_cells(&self) -> VectorField {
        match &self.coupling {
            FieldCoupling::Maxwell(em) => em.interp_h_to_cells(),
            FieldCoupling::Static(h) => h.clone(),
        }
    }

    pub fn energy(&self, scheme: &SchemeConfig) -> Result<EnergyBreakdown> {
        total_energy(&EnergyInputs {
            m: &self.m,
            geom: &self.geom,
            params: &self.params,
            surface: scheme.assembly.surface,
            penalty: scheme.assembly.constraint.penalty(),
            em: self.em(),
        })
    }

    /// `∂m/∂t` at the current state.
    pub fn rate(&mut self, scheme: &SchemeConfig) -> Result<&VectorField> {
        if self.rate.is_none() {
            let h = self.h_cells();
            self.rate = Some(llg_rhs(&self.m, Some(&h), &self.geom, &self.params, &scheme.assembly)?);
        }
        Ok(self.rate.as_ref().expect("just filled"))
    }

    /// `max |‖m‖ − 1|` over cells.
    pub fn saturation_deviation(&self) -> f64 {
        self.m.data().iter().fold(0.0, |a, &v| a.max((norm(v) - 1.0).abs()))
    }

    pub fn divergence_drift(&self) -> f64 {
        self.em().map_or(0.0, |em| em.divergence_drift(&self.m))
    }

    /// Rejects time steps beyond the stability or CFL bounds.
    pub fn check_scheme(&self, scheme: &SchemeConfig) -> Result<()> {
        if !(scheme.dt > 0.0 && scheme.dt.is_finite()) || scheme.subcycles == 0 {
            return Err(Error::Validation {
                field: "scheme.dt".into(),
                reason: "dt must be positive and subcycles at least 1".into(),
            });
        }
        let limit = stability_limit(&self.geom, &self.params, scheme);
        if scheme.dt > limit * (1.0 + 1e-12) {
            return Err(Error::StabilityViolation { dt: scheme.dt, limit });
        }
        if let Some(em) = self.em() {
            let tau = scheme.dt / scheme.subcycles as f64;
            let cfl = em.yee.cfl_limit(self.params.mu0, self.params.eps0);
            if tau > cfl * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt: tau, limit: cfl });
            }
        }
        Ok(())
    }

    pub fn step(&mut self, scheme: &SchemeConfig) -> Result<()> {
        self.check_scheme(scheme)?;
        let dt = scheme.dt;
        let h = self.h_cells();
        let k1 = match self.rate.take() {
            Some(r) => r,
            None => llg_rhs(&self.m, Some(&h), &self.geom, &self.params, &scheme.assembly)?,
        };
        let rhs = |m: &VectorField| llg_rhs(m, Some(&h), &self.geom, &self.params, &scheme.assembly);
        let shifted = |k: &VectorField, s: f64| self.m.zip_map(k, |m, k| axpy(m, s, k));
        let mut next = match scheme.integrator {
            Integrator::Heun => {
                let k2 = rhs(&shifted(&k1, dt))?;
                self.m.zip_map(&k1.zip_map(&k2, add), |m, s| axpy(m, 0.5 * dt, s))
            }
            Integrator::Rk4 => {
                let k2 = rhs(&shifted(&k1, 0.5 * dt))?;
                let k3 = rhs(&shifted(&k2, 0.5 * dt))?;
                let k4 = rhs(&shifted(&k3, dt))?;
                let combo = VectorField::from_vec(
                    self.m.dims(),
                    (0..self.m.len())
                        .map(|n| {
                            let (a, b, c, d) = (k1.data()[n], k2.data()[n], k3.data()[n], k4.data()[n]);
                            add(add(a, scale(2.0, b)), add(scale(2.0, c), d))
                        })
                        .collect(),
                )?;
                self.m.zip_map(&combo, |m, s| axpy(m, dt / 6.0, s))
            }
        };
        let step = self.step;
        if matches!(scheme.assembly.constraint, Constraint::Projected) {
            for v in next.data_mut() {
                let n = norm(*v);
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::NonFinite { step, what: "zero or non-finite magnetization in projection".into() });
                }
                *v = scale(1.0 / n, *v);
            }
        }
        if !next.data().iter().all(|&v| is_finite(v)) {
            return Err(Error::NonFinite { step, what: "magnetization".into() });
        }

        let m_dot = next.zip_map(&self.m, |a, b| scale(1.0 / dt, sub(a, b)));
        let params = &self.params;
        if let FieldCoupling::Maxwell(em) = &mut self.coupling {
            let yee = em.yee;
            let rate = transfer_to_faces(&yee, &m_dot);
            let tau = dt / scheme.subcycles as f64;
            for s in 0..scheme.subcycles {
                let f = if params.sigma > 0.0 && !scheme.current.is_zero() {
                    let t_mid = self.t + (s as f64 + 0.5) * tau;
                    Some(VectorField::uniform(self.geom.dims(), scheme.current.value(t_mid)))
                } else {
                    None
                };
                let inc = em.fdtd_step(Some(&rate), f.as_ref(), params, tau)?;
                self.integrals.ohmic += inc.ohmic;
                self.integrals.source += inc.source;
            }
            if !(em.h.is_finite() && em.e.is_finite()) {
                return Err(Error::NonFinite { step, what: "electromagnetic field".into() });
            }
        }

        self.m = next;
        self.t += dt;
        self.step += 1;
        let h_new = self.h_cells();
        let k_new = llg_rhs(&self.m, Some(&h_new), &self.geom, &self.params, &scheme.assembly)?;
        let dv = self.geom.cell_volume();
        let weight = self.params.alpha / (1.0 + self.params.alpha * self.params.alpha);
        let power = |k: &VectorField| sum(k.data().iter().map(|&v| norm2(v))) * dv;
        self.integrals.dissipation += 0.5 * dt * weight * (power(&k1) + power(&k_new));
        self.rate = Some(k_new);
        Ok(())
    }
}

/// Number of steps of size `dt` needed to reach `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    if t_end <= 0.0 {
        0
    } else {
        (t_end / dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Advances to `t_end`, calling `observe` at the start, every `every` steps
/// and after the last step.
pub fn run(
    state: &mut SimState,
    scheme: &SchemeConfig,
    t_end: f64,
    every: usize,
    mut observe: impl FnMut(&mut SimState) -> Result<()>,
) -> Result<()> {
    state.check_scheme(scheme)?;
    let steps = step_count(t_end, scheme.dt);
    let every = every.max(1);
    observe(state)?;
    for n in 1..=steps {
        state.step(scheme)?;
        if n % every == 0 || n == steps {
            observe(state)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective_field::SurfaceModel;
    use crate::geometry::{build_geometry, GeometryConfig, TraceOrder};
    use crate::vec3::{E_X, E_Z, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(m: Vec3, v: Vec3, f: Vec3, alpha: f64) -> f64 {
        norm(sub(add(scale(alpha, v), cross(m, v)), f))
    }

    #[test]
    fn gilbert_special_cases() {
        let f = [1.0, -2.0, 0.5];
        assert_eq!(gilbert_solve(ZERO, f, 0.5), scale(2.0, f));
        let m = [0.6, 0.0, 0.8];
        let v = gilbert_solve(m, scale(3.0, m), 0.25);
        assert!(norm(sub(v, scale(12.0, m))) < 1e-13);
    }

    #[test]
    fn gilbert_residual_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let m: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.15..1.15));
            let f: Vec3 = std::array::from_fn(|_| rng.gen_range(-577.0..577.0));
            let alpha = 10f64.powf(rng.gen_range(-2.0..1.0));
            let v = gilbert_solve(m, f, alpha);
            assert!(residual(m, v, f, alpha) <= 1e-12 * (1.0 + norm(f)));
        }
    }

    fn one_cell() -> DomainGeometry {
        build_geometry(&GeometryConfig {
            lx: 1.0,
            ly: 1.0,
            l_minus: 0.5,
            l_plus: 0.5,
            nx: 1,
            ny: 1,
            nz_minus: 1,
            nz_plus: 1,
            eta: None,
            trace_order: TraceOrder::First,
        })
        .unwrap()
    }

    #[test]
    fn projected_rhs_is_landau_lifshitz() {
        let g = one_cell();
        let p = MaterialParams::isotropic(g.cell_count(), 0.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let u: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let u = scale(1.0 / norm(u), u);
            let hv: Vec3 = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let m = VectorField::uniform(g.dims(), u);
            let h = VectorField::uniform(g.dims(), hv);
            let r = llg_rhs(&m, Some(&h), &g, &p, &FieldAssembly::default()).unwrap();
            let ll = sub(scale(-1.0, cross(u, hv)), scale(p.alpha, cross(u, cross(u, hv))));
            assert!(norm(sub(r.data()[0], ll)) < 1e-12);
            assert!(dot(r.data()[0], u).abs() < 1e-13);
        }
    }

    #[test]
    fn penalized_rate_has_identity_for_parallel_part() {
        let m = [0.3, -0.2, 1.1];
        let f = [0.7, 0.1, -0.4];
        let alpha = 0.4;
        let v = gilbert_solve(m, f, alpha);
        assert!((dot(m, v) - dot(m, f) / alpha).abs() < 1e-13);
    }

    fn small_geom() -> DomainGeometry {
        build_geometry(&GeometryConfig {
            lx: 4.0,
            ly: 4.0,
            l_minus: 2.0,
            l_plus: 2.0,
            nx: 4,
            ny: 4,
            nz_minus: 2,
            nz_plus: 2,
            eta: None,
            trace_order: TraceOrder::First,
        })
        .unwrap()
    }

    #[test]
    fn aligned_state_only_advances_time() {
        let g = small_geom();
        let p = MaterialParams::isotropic(g.cell_count(), 1.0, 0.5);
        let m = VectorField::uniform(g.dims(), E_Z);
        let em = EMState::new(crate::maxwell::YeeBox::around(&g, 2), Default::default(), 0.0);
        let mut s = SimState::new(g, p, m.clone(), FieldCoupling::Maxwell(em.clone())).unwrap();
        let scheme = SchemeConfig { dt: 0.05, ..Default::default() };
        for _ in 0..5 {
            s.step(&scheme).unwrap();
        }
        assert_eq!(s.m, m);
        assert_eq!(s.em().unwrap().h, em.h);
        assert!((s.t - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nan_in_initial_state_is_rejected() {
        let g = small_geom();
        let p = MaterialParams::isotropic(g.cell_count(), 1.0, 0.5);
        let mut m = VectorField::uniform(g.dims(), E_Z);
        m.set(1, 1, 1, [f64::NAN, 0.0, 0.0]);
        let h = VectorField::zeros(g.dims());
        assert!(matches!(SimState::new(g, p, m, FieldCoupling::Static(h)), Err(Error::NonFinite { step: 0, .. })));
    }

    #[test]
    fn stability_bound_is_enforced() {
        let g = small_geom();
        let p = MaterialParams::isotropic(g.cell_count(), 1.0, 1.0);
        let s = SimState::new(g, p, VectorField::uniform(small_geom().dims(), E_X), FieldCoupling::Static(VectorField::zeros(small_geom().dims()))).unwrap();
        let limit = stability_limit(&s.geom, &s.params, &SchemeConfig::default());
        assert!((limit - 0.125).abs() < 1e-15);
        let scheme = SchemeConfig { dt: 0.2, ..Default::default() };
        assert!(matches!(s.check_scheme(&scheme), Err(Error::StabilityViolation { .. })));
    }

    #[test]
    fn projected_steps_keep_unit_norm() {
        let g = small_geom();
        let mut p = MaterialParams::isotropic(g.cell_count(), 1.0, 0.5);
        p.j1 = 0.5;
        p.ks = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = VectorField::from_fn(g.dims(), |_, _, _| {
            let v: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            scale(1.0 / norm(v), v)
        });
        let h = VectorField::zeros(g.dims());
        let mut s = SimState::new(g, p, m, FieldCoupling::Static(h)).unwrap();
        let scheme = SchemeConfig {
            dt: 0.02,
            assembly: FieldAssembly { surface: SurfaceModel::SharpBc, constraint: Constraint::Projected },
            ..Default::default()
        };
        for _ in 0..20 {
            s.step(&scheme).unwrap();
            assert!(s.saturation_deviation() <= 1e-14);
        }
    }

    /// Closed-form single spin in a constant field along `e_z`: precession
    /// at rate `H`, polar relaxation `tan(θ/2) = tan(θ0/2)·e^{−αHt}`.
    #[test]
    fn single_spin_matches_closed_form() {
        let g = one_cell();
        let alpha = 0.2;
        let big_h = 2.0;
        let p = MaterialParams::isotropic(g.cell_count(), 0.0, alpha);
        let m0 = VectorField::uniform(g.dims(), E_X);
        let h = VectorField::uniform(g.dims(), scale(big_h, E_Z));
        let mut s = SimState::new(g, p, m0, FieldCoupling::Static(h)).unwrap();
        let scheme = SchemeConfig { dt: 1e-3, integrator: Integrator::Rk4, ..Default::default() };
        for _ in 0..1000 {
            s.step(&scheme).unwrap();
        }
        let t = s.t;
        let theta = 2.0 * ((std::f64::consts::FRAC_PI_4).tan() * (-alpha * big_h * t).exp()).atan();
        let phi = big_h * t;
        let exact = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let got = s.m.data()[0];
        assert!(norm(sub(got, exact)) < 1e-10, "{got:?} vs {exact:?}");
    }

    #[test]
    fn step_count_rounds_up() {
        assert_eq!(step_count(0.0, 0.1), 0);
        assert_eq!(step_count(1.0, 0.1), 10);
        assert_eq!(step_count(1.05, 0.1), 11);
    }
}
