//! Small fixed-size matrices and the planar phase-space vector.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A real 2×2 matrix acting on one `(position, momentum)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub h11: f64,
    pub h12: f64,
    pub h21: f64,
    pub h22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(h11: f64, h12: f64, h21: f64, h22: f64) -> Self {
        Mat2 { h11, h12, h21, h22 }
    }

    /// Free evolution over a span `tau`: `[[1, tau], [0, 1]]`.
    pub const fn shear(tau: f64) -> Self {
        Mat2::new(1.0, tau, 0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.h11 + self.h22
    }

    pub fn det(&self) -> f64 {
        self.h11 * self.h22 - self.h12 * self.h21
    }

    pub fn is_finite(&self) -> bool {
        self.h11.is_finite() && self.h12.is_finite() && self.h21.is_finite() && self.h22.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.h11
            .abs()
            .max(self.h12.abs())
            .max(self.h21.abs())
            .max(self.h22.abs())
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    /// Inverse of a unimodular matrix, `[[h22, -h12], [-h21, h11]]`.
    pub fn symplectic_inverse(&self) -> Mat2 {
        Mat2::new(self.h22, -self.h12, -self.h21, self.h11)
    }

    pub fn apply(&self, q: f64, p: f64) -> (f64, f64) {
        (self.h11 * q + self.h12 * p, self.h21 * q + self.h22 * p)
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(s * self.h11, s * self.h12, s * self.h21, s * self.h22)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.h11 * r.h11 + self.h12 * r.h21,
            self.h11 * r.h12 + self.h12 * r.h22,
            self.h21 * r.h11 + self.h22 * r.h21,
            self.h21 * r.h12 + self.h22 * r.h22,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.h11 + r.h11,
            self.h12 + r.h12,
            self.h21 + r.h21,
            self.h22 + r.h22,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.h11 - r.h11,
            self.h12 - r.h12,
            self.h21 - r.h21,
            self.h22 - r.h22,
        )
    }
}

/// Dimensionless planar phase-space state, ordered `(x, px, y, py)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseVector {
    pub x: f64,
    pub px: f64,
    pub y: f64,
    pub py: f64,
}

impl PhaseVector {
    pub const ZERO: PhaseVector = PhaseVector::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(x: f64, px: f64, y: f64, py: f64) -> Self {
        PhaseVector { x, px, y, py }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        PhaseVector::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.px, self.y, self.py]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &PhaseVector) -> f64 {
        (*self - *other).norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn scale(self, s: f64) -> Self {
        PhaseVector::new(s * self.x, s * self.px, s * self.y, s * self.py)
    }
}

impl Add for PhaseVector {
    type Output = PhaseVector;

    fn add(self, r: PhaseVector) -> PhaseVector {
        PhaseVector::new(self.x + r.x, self.px + r.px, self.y + r.y, self.py + r.py)
    }
}

impl Sub for PhaseVector {
    type Output = PhaseVector;

    fn sub(self, r: PhaseVector) -> PhaseVector {
        PhaseVector::new(self.x - r.x, self.px - r.px, self.y - r.y, self.py - r.py)
    }
}

/// Real 4×4 matrix on `(x, px, y, py)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Mat4(m)
    }

    /// `blockdiag(h, h)`: the same 2×2 block on the x and y subspaces.
    pub fn block_diag(h: &Mat2) -> Self {
        Mat4([
            [h.h11, h.h12, 0.0, 0.0],
            [h.h21, h.h22, 0.0, 0.0],
            [0.0, 0.0, h.h11, h.h12],
            [0.0, 0.0, h.h21, h.h22],
        ])
    }

    /// Counter-clockwise rotation by `phi` of the pairs `(x, y)` and `(px, py)`.
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Mat4([
            [c, 0.0, -s, 0.0],
            [0.0, c, 0.0, -s],
            [s, 0.0, c, 0.0],
            [0.0, s, 0.0, c],
        ])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn apply(&self, q: &PhaseVector) -> PhaseVector {
        let v = q.to_array();
        let mut out = [0.0; 4];
        for (o, row) in out.iter_mut().zip(self.0.iter()) {
            *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        PhaseVector::from_array(out)
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let mut a = self.0;
        let mut det = 1.0;
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap_or(col);
            if a[pivot][col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for row in col + 1..4 {
                let f = a[row][col] / a[col][col];
                for k in col..4 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        det
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mul for Mat4 {
    type Output = Mat4;

    fn mul(self, r: Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.0[i][k] * r.0[k][j]).sum();
            }
        }
        Mat4(out)
    }
}
