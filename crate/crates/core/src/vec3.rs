//! Small fixed-size vector and matrix helpers.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO: Vec3 = [0.0; 3];
pub const E_X: Vec3 = [1.0, 0.0, 0.0];
pub const E_Y: Vec3 = [0.0, 1.0, 0.0];
pub const E_Z: Vec3 = [0.0, 0.0, 1.0];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// `a + s * b`
#[inline]
pub fn axpy(a: Vec3, s: f64, b: Vec3) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    norm2(a).sqrt()
}

#[inline]
pub fn is_finite(a: Vec3) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[inline]
pub fn mat_vec(k: &Mat3, v: Vec3) -> Vec3 {
    [dot(k[0], v), dot(k[1], v), dot(k[2], v)]
}

pub fn transpose(k: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in k.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

pub fn det(k: &Mat3) -> f64 {
    dot(k[0], cross(k[1], k[2]))
}

/// Symmetric positive-semidefinite test through all principal minors.
pub fn is_symmetric_psd(k: &Mat3, tol: f64) -> bool {
    let scale = k.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let tol = tol * scale;
    for i in 0..3 {
        for j in 0..3 {
            if (k[i][j] - k[j][i]).abs() > tol {
                return false;
            }
        }
    }
    if (0..3).any(|i| k[i][i] < -tol) {
        return false;
    }
    let minor = |a: usize, b: usize| k[a][a] * k[b][b] - k[a][b] * k[b][a];
    if minor(0, 1) < -tol * scale || minor(0, 2) < -tol * scale || minor(1, 2) < -tol * scale {
        return false;
    }
    det(k) >= -tol * scale * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_right_handed() {
        assert_eq!(cross(E_X, E_Y), E_Z);
        assert_eq!(cross(E_Y, E_Z), E_X);
        assert_eq!(cross(E_Z, E_X), E_Y);
    }

    #[test]
    fn psd_check() {
        let k = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(is_symmetric_psd(&k, 1e-12));
        let bad = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(!is_symmetric_psd(&bad, 1e-12));
        let asym = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(!is_symmetric_psd(&asym, 1e-12));
    }
}
