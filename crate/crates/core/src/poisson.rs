//! Cell-centered Poisson solve with homogeneous Neumann walls, by matrix-free
//! conjugate gradients on the zero-mean subspace.

use crate::error::{Error, Result};
use crate::field::Grid3;
use crate::numeric::sum;

/// Relative max-norm tolerance on the residual.
pub const POISSON_TOL: f64 = 1e-12;

const MAX_ITER: usize = 20_000;
const MAX_RESTARTS: usize = 4;

/// 7-point Neumann Laplacian of cell values.
pub fn laplacian(phi: &Grid3, spacing: [f64; 3]) -> Grid3 {
    let [nx, ny, nz] = phi.dims;
    let w = spacing.map(|h| h.powi(-2));
    let mut out = Grid3::zeros(phi.dims);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = phi.get(i, j, k);
                let mut acc = 0.0;
                if i > 0 {
                    acc += (phi.get(i - 1, j, k) - c) * w[0];
                }
                if i + 1 < nx {
                    acc += (phi.get(i + 1, j, k) - c) * w[0];
                }
                if j > 0 {
                    acc += (phi.get(i, j - 1, k) - c) * w[1];
                }
                if j + 1 < ny {
                    acc += (phi.get(i, j + 1, k) - c) * w[1];
                }
                if k > 0 {
                    acc += (phi.get(i, j, k - 1) - c) * w[2];
                }
                if k + 1 < nz {
                    acc += (phi.get(i, j, k + 1) - c) * w[2];
                }
                out.set(i, j, k, acc);
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn remove_mean(v: &mut [f64]) {
    let mean = sum(v.iter().copied()) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `Δφ = rhs` with `∂φ/∂n = 0`. The right side must integrate to zero
/// up to roundoff; `φ` is returned with zero mean.
pub fn solve_neumann(rhs: &Grid3, spacing: [f64; 3]) -> Result<Grid3> {
    let scale = rhs.max_abs().max(1.0);
    let cell_volume = spacing.iter().product::<f64>();
    let flux = sum(rhs.data.iter().copied()) * cell_volume;
    let n = rhs.data.len() as f64;
    if (flux / (cell_volume * n)).abs() > 1e-10 * scale {
        return Err(Error::IncompatibleFlux { flux });
    }
    let mut b = rhs.clone();
    remove_mean(&mut b.data);
    let target = POISSON_TOL * scale;
    let mut phi = Grid3::zeros(rhs.dims);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_RESTARTS {
        let mut r = b.clone();
        let lap = laplacian(&phi, spacing);
        r.data.iter_mut().zip(&lap.data).for_each(|(r, l)| *r -= l);
        remove_mean(&mut r.data);
        residual = r.max_abs();
        if residual <= target {
            return Ok(phi);
        }
        // Solve -Δ δ = -r, which is positive semidefinite.
        let mut p = r.clone();
        let mut rr = dot(&r.data, &r.data);
        let stop = (0.05 * target).powi(2);
        while iterations < MAX_ITER && rr > stop {
            iterations += 1;
            let mut ap = laplacian(&p, spacing);
            ap.data.iter_mut().for_each(|x| *x = -*x);
            let pap = dot(&p.data, &ap.data);
            if pap <= 0.0 {
                break;
            }
            let a = rr / pap;
            phi.data.iter_mut().zip(&p.data).for_each(|(x, p)| *x -= a * p);
            r.data.iter_mut().zip(&ap.data).for_each(|(r, q)| *r -= a * q);
            remove_mean(&mut r.data);
            let rr_new = dot(&r.data, &r.data);
            let beta = rr_new / rr;
            rr = rr_new;
            p.data.iter_mut().zip(&r.data).for_each(|(p, r)| *p = r + beta * *p);
        }
        remove_mean(&mut phi.data);
    }
    let lap = laplacian(&phi, spacing);
    let mut r = b;
    r.data.iter_mut().zip(&lap.data).for_each(|(r, l)| *r -= l);
    residual = residual.min(r.max_abs());
    if residual <= target {
        Ok(phi)
    } else {
        Err(Error::SolverDiverged { iterations, residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_manufactured_solution() {
        let dims = [12, 10, 8];
        let h = [0.5, 0.7, 1.0];
        let exact = Grid3::from_fn(dims, |i, j, k| ((i * 7 + j * 3 + k * 5) % 11) as f64 - 5.0);
        let mut exact_zero = exact.clone();
        remove_mean(&mut exact_zero.data);
        let rhs = laplacian(&exact, h);
        let phi = solve_neumann(&rhs, h).unwrap();
        let res = laplacian(&phi, h);
        for (a, b) in res.data.iter().zip(&rhs.data) {
            assert!((a - b).abs() <= POISSON_TOL * rhs.max_abs().max(1.0));
        }
        for (a, b) in phi.data.iter().zip(&exact_zero.data) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let phi = solve_neumann(&Grid3::zeros([4, 4, 4]), [1.0; 3]).unwrap();
        assert!(phi.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_net_source() {
        let mut rhs = Grid3::zeros([4, 4, 4]);
        rhs.set(1, 1, 1, 1.0);
        assert!(matches!(solve_neumann(&rhs, [1.0; 3]), Err(Error::IncompatibleFlux { .. })));
    }
}
