//! Energy inequality, saturation, weak-form and stationarity residuals, and
//! windowed time averages of the electromagnetic field.

use serde::{Deserialize, Serialize};

use crate::dynamics::LedgerIntegrals;
use crate::energetics::{EnergyBreakdown, MaterialParams};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{extract_traces, normal_at, DomainGeometry};
use crate::maxwell::{curl_h, divergence, interp_to_cells, magnetostatic_field, transfer_to_faces, StaggeredField, YeeBox};
use crate::numeric::CompensatedSum;
use crate::vec3::{add, cross, dot, mat_vec, norm, scale, sub, Vec3, E_X, E_Y, E_Z};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub integrals: LedgerIntegrals,
}

/// Time series of every term of the energy inequality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn push(&mut self, t: f64, energy: EnergyBreakdown, integrals: LedgerIntegrals) {
        self.rows.push(LedgerRow { t, energy, integrals });
    }

    /// Last row with `t ≤ time` (up to roundoff).
    pub fn at(&self, time: f64) -> Option<&LedgerRow> {
        let tol = 1e-9 * time.abs().max(1.0);
        self.rows.iter().rev().find(|r| r.t <= time + tol)
    }
}

/// `E(T) + dissipation + Ohmic + source − E(0)`; non-positive when the
/// inequality holds.
pub fn energy_inequality_residual(ledger: &EnergyLedger, time: f64) -> f64 {
    let (Some(first), Some(row)) = (ledger.rows.first(), ledger.at(time)) else {
        return 0.0;
    };
    let i = &row.integrals;
    row.energy.total + i.dissipation + i.ohmic + i.source - first.energy.total
}

/// `max |‖m‖ − 1|` over cells.
pub fn saturation_deviation(m: &VectorField) -> f64 {
    m.data().iter().fold(0.0, |a, &v| a.max((norm(v) - 1.0).abs()))
}

/// Scalar test function `ψ(ξ) = b_{i}(ξx)·b_{j}(ξy)·b_{k}(ξz)` in the
/// normalized coordinates of the domain, with `b ∈ {1, ξ, cos πξ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFunction {
    pub modes: [u8; 3],
}

impl TestFunction {
    /// Library index `i + 3j + 9k`.
    pub fn id(&self) -> usize {
        self.modes[0] as usize + 3 * self.modes[1] as usize + 9 * self.modes[2] as usize
    }

    pub fn eval(&self, xi: Vec3) -> f64 {
        (0..3)
            .map(|a| match self.modes[a] {
                0 => 1.0,
                1 => xi[a],
                _ => (std::f64::consts::PI * xi[a]).cos(),
            })
            .product()
    }

    /// Samples at the cell centers of Ω.
    pub fn sample(&self, geom: &DomainGeometry) -> Vec<f64> {
        let height = geom.l_minus + geom.l_plus;
        VectorField::from_fn(geom.dims(), |i, j, k| {
            let x = geom.cell_center(i, j, k);
            [self.eval([x[0] / geom.base_lx, x[1] / geom.base_ly, (x[2] + geom.l_minus) / height]), 0.0, 0.0]
        })
        .data()
        .iter()
        .map(|v| v[0])
        .collect()
    }
}

/// All 27 tensor products.
pub fn test_function_library() -> Vec<TestFunction> {
    (0..27u8).map(|n| TestFunction { modes: [n % 3, (n / 3) % 3, n / 9] }).collect()
}

/// Right side of the magnetization weak form (without the `(1+α²)` factor)
/// tested against the vector field `phi`:
/// `A Σ (u∧∂u)·∂φ + (u∧Ku)·φ − (u∧H)·φ − surface terms·γφ`.
pub fn weak_rhs(
    u: &VectorField,
    h: Option<&VectorField>,
    phi: &VectorField,
    geom: &DomainGeometry,
    params: &MaterialParams,
) -> Result<f64> {
    u.check_dims(geom.dims())?;
    phi.check_dims(geom.dims())?;
    let [nx, ny, nz] = geom.dims();
    let dv = geom.cell_volume();
    let inv = geom.spacings().map(|s| s.powi(-2));
    let mut acc = CompensatedSum::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = u.index(i, j, k);
                let (c, pc) = (u.data()[n], phi.data()[n]);
                let mut face = |d: [usize; 3], w: f64| {
                    let nd = u.index(d[0], d[1], d[2]);
                    acc.add(params.a_exch * w * dot(cross(c, u.data()[nd]), sub(phi.data()[nd], pc)) * dv);
                };
                if i + 1 < nx {
                    face([i + 1, j, k], inv[0]);
                }
                if j + 1 < ny {
                    face([i, j + 1, k], inv[1]);
                }
                if k + 1 < nz && k + 1 != geom.nz_minus {
                    face([i, j, k + 1], inv[2]);
                }
                let mut vol = dot(cross(c, mat_vec(params.anisotropy.get(n), c)), pc);
                if let Some(h) = h {
                    vol -= dot(cross(c, h.data()[n]), pc);
                }
                acc.add(vol * dv);
            }
        }
    }
    let tu = extract_traces(u, geom)?;
    let tphi = extract_traces(phi, geom)?;
    let da = geom.face_area();
    let sides = [(normal_at(geom, geom.nz_minus), &tu.gamma_plus, &tu.gamma_minus, &tphi.gamma_plus), (
        normal_at(geom, geom.nz_minus - 1),
        &tu.gamma_minus,
        &tu.gamma_plus,
        &tphi.gamma_minus,
    )];
    for (nu, g, gs, gp) in sides {
        for col in 0..g.len() {
            let (m, ms) = (g[col], gs[col]);
            let wedge = cross(m, ms);
            let s = add(
                add(scale(params.ks * dot(nu, m), cross(m, nu)), scale(params.j1, wedge)),
                scale(2.0 * params.j2 * dot(m, ms), wedge),
            );
            acc.add(-dot(s, gp[col]) * da);
        }
    }
    Ok(acc.value())
}

/// A stored sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub m: VectorField,
    /// `h` on the cells of Ω.
    pub h_cells: VectorField,
    /// Full staggered `(h, e)`, when Maxwell-coupled.
    pub em: Option<(StaggeredField, StaggeredField)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

/// Signed weak-form residual `Σ_n [LHS − (1+α²)·RHS]` over the intervals of
/// the trajectory, evaluated at interval midpoints, for a time-independent
/// vector test field `phi`.
pub fn weak_residual_signed(
    traj: &Trajectory,
    phi: &VectorField,
    geom: &DomainGeometry,
    params: &MaterialParams,
) -> Result<f64> {
    let alpha = params.alpha;
    let gain = 1.0 + alpha * alpha;
    let dv = geom.cell_volume();
    let mut acc = CompensatedSum::new();
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if dt <= 0.0 {
            continue;
        }
        let mid = a.m.zip_map(&b.m, |x, y| scale(0.5, add(x, y)));
        let hmid = a.h_cells.zip_map(&b.h_cells, |x, y| scale(0.5, add(x, y)));
        let mut lhs = CompensatedSum::new();
        for n in 0..mid.len() {
            let rate = scale(1.0 / dt, sub(b.m.data()[n], a.m.data()[n]));
            let v = sub(rate, scale(alpha, cross(mid.data()[n], rate)));
            lhs.add(dot(v, phi.data()[n]) * dv);
        }
        let rhs = weak_rhs(&mid, Some(&hmid), phi, geom, params)?;
        acc.add((lhs.value() - gain * rhs) * dt);
    }
    Ok(acc.value())
}

fn directional(geom: &DomainGeometry, psi: &[f64], dir: Vec3) -> VectorField {
    VectorField::from_vec(geom.dims(), psi.iter().map(|&s| scale(s, dir)).collect()).expect("sampled on geom")
}

/// Euclidean norm of the three signed residuals for `ψ e_x`, `ψ e_y`, `ψ e_z`.
pub fn weak_residual_m(
    traj: &Trajectory,
    test_fn: &TestFunction,
    geom: &DomainGeometry,
    params: &MaterialParams,
) -> Result<f64> {
    let psi = test_fn.sample(geom);
    let mut sq = 0.0;
    for dir in [E_X, E_Y, E_Z] {
        let r = weak_residual_signed(traj, &directional(geom, &psi, dir), geom, params)?;
        sq += r * r;
    }
    Ok(sq.sqrt())
}

/// Maximum over `test_fns` of the stationarity residual of `u` under `H`.
pub fn stationarity_residual(
    u: &VectorField,
    h: &VectorField,
    params: &MaterialParams,
    geom: &DomainGeometry,
    test_fns: &[TestFunction],
) -> Result<f64> {
    Ok(stationarity_report(u, h, params, geom, test_fns)?.into_iter().map(|(_, r)| r).fold(0.0, f64::max))
}

/// Per-function stationarity residuals `(id, residual)`.
pub fn stationarity_report(
    u: &VectorField,
    h: &VectorField,
    params: &MaterialParams,
    geom: &DomainGeometry,
    test_fns: &[TestFunction],
) -> Result<Vec<(usize, f64)>> {
    h.check_dims(geom.dims())?;
    test_fns
        .iter()
        .map(|tf| {
            let psi = tf.sample(geom);
            let mut sq = 0.0;
            for dir in [E_X, E_Y, E_Z] {
                let r = weak_rhs(u, Some(h), &directional(geom, &psi, dir), geom, params)?;
                sq += r * r;
            }
            Ok((tf.id(), sq.sqrt()))
        })
        .collect()
}

/// Limit field `H = −∇φ` with `div(H + ū) = 0`, plus its residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaLimitField {
    pub faces: StaggeredField,
    pub cells: VectorField,
    /// `max |curl H|` over interior edges.
    pub curl_max: f64,
    /// `max |div(H + ū)|` over box cells.
    pub div_max: f64,
}

pub fn omega_limit_field(u: &VectorField, geom: &DomainGeometry, padding: usize) -> Result<OmegaLimitField> {
    u.check_dims(geom.dims())?;
    let yee = YeeBox::around(geom, padding);
    let faces = magnetostatic_field(&yee, u)?;
    let curl_max = curl_h(&yee, &faces).max_abs();
    let mut b = faces.clone();
    for (x, t) in b.comps.iter_mut().zip(&transfer_to_faces(&yee, u).comps) {
        x.data.iter_mut().zip(&t.data).for_each(|(p, q)| *p += q);
    }
    let div_max = divergence(&yee, &b).max_abs();
    let cells = interp_to_cells(&yee, &faces);
    Ok(OmegaLimitField { faces, cells, curl_max, div_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowShape {
    /// Piecewise linear: `clamp(a − |s|, 0, 1)`.
    #[default]
    Trapezoid,
    /// C∞ ramps of unit width.
    SmoothBump,
}

/// Mollifier `ρ_a` supported on `[−a, a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingWindow {
    pub a: f64,
    pub shape: WindowShape,
}

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let f = |y: f64| (-1.0 / y).exp();
    f(x) / (f(x) + f(1.0 - x))
}

impl AveragingWindow {
    pub fn new(a: f64, shape: WindowShape) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Validation { field: "window.a".into(), reason: format!("half-width must be positive, got {a}") });
        }
        Ok(Self { a, shape })
    }

    pub fn rho(&self, s: f64) -> f64 {
        let x = self.a - s.abs();
        match self.shape {
            WindowShape::Trapezoid => x.clamp(0.0, 1.0),
            WindowShape::SmoothBump => smooth_step(x),
        }
    }
}

/// Trapezoid weights `w_i` with `Σ w_i g(t_i) ≈ ∫ g(t) ρ(t − t_n) dt`.
fn window_weights(times: &[f64], t_n: f64, window: &AveragingWindow) -> Result<Vec<f64>> {
    let (start, end) = (t_n - window.a, t_n + window.a);
    let tol = 1e-9 * window.a.max(1.0);
    match (times.first(), times.last()) {
        (Some(&first), Some(&last)) if first <= start + tol && last >= end - tol => {}
        _ => return Err(Error::WindowOutOfRange { start, end }),
    }
    let rho: Vec<f64> = times.iter().map(|&t| window.rho(t - t_n)).collect();
    let mut w = vec![0.0; times.len()];
    for i in 0..times.len().saturating_sub(1) {
        let half = 0.5 * (times[i + 1] - times[i]);
        w[i] += half * rho[i];
        w[i + 1] += half * rho[i + 1];
    }
    Ok(w)
}

/// `∫ ρ_a` by the trapezoid rule on the given sample times.
pub fn window_mass(times: &[f64], t_n: f64, window: &AveragingWindow) -> Result<f64> {
    Ok(window_weights(times, t_n, window)?.iter().sum())
}

/// `(h_a, e_a) = (1/2a) ∫ (h, e)(t_n + s) ρ_a(s) ds`.
pub fn time_average_fields(
    traj: &Trajectory,
    t_n: f64,
    window: &AveragingWindow,
) -> Result<(StaggeredField, StaggeredField)> {
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let weights = window_weights(&times, t_n, window)?;
    let Some((h0, e0)) = traj.samples.first().and_then(|s| s.em.as_ref()) else {
        return Err(Error::WindowOutOfRange { start: t_n - window.a, end: t_n + window.a });
    };
    let mut h = h0.scaled(0.0);
    let mut e = e0.scaled(0.0);
    let norm_factor = 1.0 / (2.0 * window.a);
    for (s, &w) in traj.samples.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let Some((hs, es)) = &s.em else {
            return Err(Error::WindowOutOfRange { start: t_n - window.a, end: t_n + window.a });
        };
        for (acc, src) in h.comps.iter_mut().zip(&hs.comps).chain(e.comps.iter_mut().zip(&es.comps)) {
            acc.data.iter_mut().zip(&src.data).for_each(|(x, y)| *x += w * norm_factor * y);
        }
    }
    Ok((h, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective_field::{assemble_h_tot, FieldAssembly};
    use crate::geometry::{build_geometry, GeometryConfig, TraceOrder};
    use crate::vec3::ZERO;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> DomainGeometry {
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

    fn random_unit(g: &DomainGeometry, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorField::from_fn(g.dims(), |_, _, _| {
            let v: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            scale(1.0 / norm(v), v)
        })
    }

    #[test]
    fn ledger_residual_vanishes_at_start() {
        let mut l = EnergyLedger::default();
        let e = EnergyBreakdown { exchange: 3.0, total: 3.0, ..Default::default() };
        l.push(0.0, e, LedgerIntegrals::default());
        assert_eq!(energy_inequality_residual(&l, 0.0), 0.0);
        l.push(1.0, EnergyBreakdown { total: 2.0, ..e }, LedgerIntegrals { dissipation: 0.5, ohmic: 0.25, source: 0.0 });
        assert_eq!(energy_inequality_residual(&l, 1.0), -0.25);
    }

    #[test]
    fn saturation_closed_forms() {
        let g = geom();
        assert!(saturation_deviation(&random_unit(&g, 1)) < 1e-15);
        let mut m = VectorField::uniform(g.dims(), E_X);
        m.set(0, 1, 2, [1.1, 0.0, 0.0]);
        assert!((saturation_deviation(&m) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn library_has_27_distinct_functions() {
        let lib = test_function_library();
        assert_eq!(lib.len(), 27);
        let ids: std::collections::BTreeSet<_> = lib.iter().map(TestFunction::id).collect();
        assert_eq!(ids.len(), 27);
        assert_eq!(lib[0].eval([0.3, 0.2, 0.9]), 1.0);
    }

    /// Stationarity form equals `−Σ (u ∧ h_tot)·φ dV` with the sharp ghost
    /// field, by summation by parts.
    #[test]
    fn stationarity_form_is_tested_wedge_with_effective_field() {
        let g = geom();
        let mut p = MaterialParams::isotropic(g.cell_count(), 1.3, 1.0);
        (p.ks, p.j1, p.j2) = (0.4, 0.7, 0.2);
        let u = random_unit(&g, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = VectorField::from_fn(g.dims(), |_, _, _| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let phi = VectorField::from_fn(g.dims(), |_, _, _| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let htot = assemble_h_tot(&u, Some(&h), &g, &p, &FieldAssembly::default()).unwrap();
        let direct: f64 = u.data().iter().zip(htot.data()).zip(phi.data()).map(|((&m, &f), &q)| -dot(cross(m, f), q)).sum::<f64>()
            * g.cell_volume();
        let form = weak_rhs(&u, Some(&h), &phi, &g, &p).unwrap();
        assert!((form - direct).abs() < 1e-12 * direct.abs().max(1.0), "{form} vs {direct}");
    }

    #[test]
    fn stationarity_vanishes_for_trivial_states() {
        let g = geom();
        let p = MaterialParams::isotropic(g.cell_count(), 1.0, 1.0);
        let u = VectorField::uniform(g.dims(), E_Z);
        let h = VectorField::zeros(g.dims());
        assert_eq!(stationarity_residual(&u, &h, &p, &g, &test_function_library()).unwrap(), 0.0);
        let mut q = p.clone();
        q.j1 = 2.0;
        let u = VectorField::uniform(g.dims(), E_X);
        assert_eq!(stationarity_residual(&u, &h, &q, &g, &test_function_library()).unwrap(), 0.0);
    }

    fn static_trajectory(g: &DomainGeometry, m: &VectorField, times: &[f64]) -> Trajectory {
        Trajectory {
            samples: times
                .iter()
                .map(|&t| TrajectorySample { t, m: m.clone(), h_cells: VectorField::zeros(g.dims()), em: None })
                .collect(),
        }
    }

    #[test]
    fn weak_residual_trivial_cases() {
        let g = geom();
        let p = MaterialParams::isotropic(g.cell_count(), 1.0, 0.5);
        let traj = static_trajectory(&g, &VectorField::uniform(g.dims(), E_Z), &[0.0, 0.1, 0.2]);
        for tf in test_function_library() {
            assert_eq!(weak_residual_m(&traj, &tf, &g, &p).unwrap(), 0.0);
        }
        let moving = Trajectory {
            samples: vec![
                TrajectorySample { t: 0.0, m: random_unit(&g, 4), h_cells: VectorField::zeros(g.dims()), em: None },
                TrajectorySample { t: 0.1, m: random_unit(&g, 5), h_cells: VectorField::zeros(g.dims()), em: None },
            ],
        };
        let zero = VectorField::zeros(g.dims());
        assert_eq!(weak_residual_signed(&moving, &zero, &g, &p).unwrap(), 0.0);
    }

    #[test]
    fn weak_residual_is_linear() {
        let g = geom();
        let mut p = MaterialParams::isotropic(g.cell_count(), 1.0, 0.5);
        p.j1 = 0.3;
        let traj = Trajectory {
            samples: (0..3)
                .map(|n| TrajectorySample {
                    t: 0.1 * n as f64,
                    m: random_unit(&g, 10 + n),
                    h_cells: random_unit(&g, 20 + n),
                    em: None,
                })
                .collect(),
        };
        let lib = test_function_library();
        let (a, b) = (lib[5].sample(&g), lib[13].sample(&g));
        let fa = directional(&g, &a, E_X);
        let fb = directional(&g, &b, [0.2, -1.0, 0.4]);
        let both = fa.zip_map(&fb, add);
        let ra = weak_residual_signed(&traj, &fa, &g, &p).unwrap();
        let rb = weak_residual_signed(&traj, &fb, &g, &p).unwrap();
        let rab = weak_residual_signed(&traj, &both, &g, &p).unwrap();
        assert!((rab - ra - rb).abs() < 1e-11 * (ra.abs() + rb.abs()).max(1.0));
    }

    #[test]
    fn windows_satisfy_their_bounds() {
        for shape in [WindowShape::Trapezoid, WindowShape::SmoothBump] {
            let w = AveragingWindow::new(3.0, shape).unwrap();
            let n = 6000;
            let ds = 8.0 / n as f64;
            let mut prev = w.rho(-4.0);
            for i in 1..=n {
                let s = -4.0 + i as f64 * ds;
                let r = w.rho(s);
                assert!((0.0..=1.0).contains(&r));
                if s.abs() <= 2.0 {
                    assert_eq!(r, 1.0);
                }
                if s.abs() >= 3.0 {
                    assert_eq!(r, 0.0);
                }
                assert!(((r - prev) / ds).abs() <= 2.0 + 1e-6);
                prev = r;
            }
        }
    }

    #[test]
    fn trapezoid_mass_closed_form() {
        let w = AveragingWindow::new(2.5, WindowShape::Trapezoid).unwrap();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let mass = window_mass(&times, 5.0, &w).unwrap();
        assert!((mass - 4.0).abs() < 1e-12, "{mass}");
        assert!(matches!(window_mass(&times, 9.0, &w), Err(Error::WindowOutOfRange { .. })));
    }

    #[test]
    fn averages_of_constant_fields() {
        let g = geom();
        let yee = YeeBox::around(&g, 1);
        let c = [0.5, -1.0, 2.0];
        let hc = StaggeredField::uniform_faces(&yee, c);
        let ec = crate::maxwell::StaggeredField::edges(&yee);
        let traj = Trajectory {
            samples: (0..=40)
                .map(|i| TrajectorySample {
                    t: i as f64 * 0.25,
                    m: VectorField::zeros(g.dims()),
                    h_cells: VectorField::zeros(g.dims()),
                    em: Some((hc.clone(), ec.clone())),
                })
                .collect(),
        };
        let w = AveragingWindow::new(3.0, WindowShape::Trapezoid).unwrap();
        let (h, e) = time_average_fields(&traj, 5.0, &w).unwrap();
        let factor = (2.0 * 3.0 - 1.0) / (2.0 * 3.0);
        for (a, comp) in h.comps.iter().enumerate() {
            assert!(comp.data.iter().all(|&x| (x - c[a] * factor).abs() < 1e-14));
        }
        assert_eq!(e.max_abs(), 0.0);
    }

    #[test]
    fn omega_limit_field_of_empty_magnet_is_zero() {
        let g = geom();
        let f = omega_limit_field(&VectorField::zeros(g.dims()), &g, 2).unwrap();
        assert_eq!(f.faces.max_abs(), 0.0);
        assert!(f.cells.data().iter().all(|&v| v == ZERO));
    }
}
