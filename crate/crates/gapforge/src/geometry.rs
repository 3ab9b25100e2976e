//! Goursat fields on R^d, the frame matrices `A_t` and the straightening map.
//!
//! Coordinates are 0-based in code: `x[0]` is `x_1` in the usual 1-based notation.

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};

/// State vector in R^d.
pub type Point = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub u1: f64,
    pub u2: f64,
}

impl Control {
    pub const ZERO: Control = Control { u1: 0.0, u2: 0.0 };

    pub const fn new(u1: f64, u2: f64) -> Self {
        Control { u1, u2 }
    }

    pub fn norm(&self) -> f64 {
        self.u1.hypot(self.u2)
    }

    pub fn norm_inf(&self) -> f64 {
        self.u1.abs().max(self.u2.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }
}

/// The four wells `(±1, ±1)`.
pub const CORNERS: [Control; 4] = [
    Control::new(1.0, 1.0),
    Control::new(1.0, -1.0),
    Control::new(-1.0, 1.0),
    Control::new(-1.0, -1.0),
];

/// `t^n / n!` for small n.
#[inline]
fn taylor_coeff(t: f64, n: usize) -> f64 {
    let mut v = 1.0;
    for i in 1..=n {
        v *= t / i as f64;
    }
    v
}

/// `f_k(x)` for `1 <= k <= d`.
pub fn vector_field(k: usize, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    if k == 0 || k > d {
        return Err(GapError::IndexOutOfRange { k, d });
    }
    let mut v = vec![0.0; d];
    if k == 1 {
        v[0] = 1.0;
        return Ok(v);
    }
    for j in (k - 1)..d {
        v[j] = taylor_coeff(x[0], j + 1 - k);
    }
    Ok(v)
}

/// Central-difference bracket `[f_k, f_l](x) = Df_l f_k - Df_k f_l`.
pub fn lie_bracket_check(k: usize, l: usize, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(GapError::Precondition(format!("step h = {h} must be positive")));
    }
    let fk = vector_field(k, x)?;
    let fl = vector_field(l, x)?;
    let dir = |field: usize, v: &[f64]| -> Result<Vec<f64>> {
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let p = vector_field(field, &xp)?;
        let m = vector_field(field, &xm)?;
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    };
    let dl = dir(l, &fk)?;
    let dk = dir(k, &fl)?;
    Ok(dl.iter().zip(&dk).map(|(a, b)| a - b).collect())
}

/// `A_t`: columns `f_1(η(t)), ..., f_d(η(t))`. Row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    pub t: f64,
    pub d: usize,
    pub entries: Vec<f64>,
}

impl FrameMatrix {
    pub fn new(t: f64, d: usize) -> Self {
        let mut entries = vec![0.0; d * d];
        entries[0] = 1.0;
        for j in 1..d {
            for i in j..d {
                entries[i * d + j] = taylor_coeff(t, i - j);
            }
        }
        FrameMatrix { t, d, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| (0..self.d).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn mul(&self, other: &FrameMatrix) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        out
    }
}

/// `out = A_t x` without allocating. Entries 1.. are a polynomial convolution.
#[inline]
pub fn frame_apply_into(t: f64, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    out[0] = x[0];
    for i in 1..d {
        // sum over m = i - j of t^m/m! x_j, j = 1..=i
        let mut s = 0.0;
        let mut c = 1.0;
        for m in 0..i {
            s += c * x[i - m];
            c *= t / (m + 1) as f64;
        }
        out[i] = s;
    }
}

pub fn phi(x: &[f64]) -> Point {
    let mut out = vec![0.0; x.len()];
    frame_apply_into(x[0], x, &mut out);
    out
}

pub fn phi_inv(x: &[f64]) -> Point {
    let mut out = vec![0.0; x.len()];
    frame_apply_into(-x[0], x, &mut out);
    out
}

#[inline]
pub fn phi_inv_into(x: &[f64], out: &mut [f64]) {
    frame_apply_into(-x[0], x, out);
}

/// `r(x)`: norm of coordinates 3..d of `φ^{-1}(x)`.
pub fn radial(x: &[f64]) -> f64 {
    let y = phi_inv(x);
    y[2..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `u1 f_1(x) + u2 f_2(x)` written into `out`.
#[inline]
pub fn controlled_field_into(x: &[f64], u: Control, out: &mut [f64]) {
    out[0] = u.u1;
    let mut c = u.u2;
    for j in 1..x.len() {
        out[j] = c;
        c *= x[0] / j as f64;
    }
}

pub fn controlled_field(x: &[f64], u: Control) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    controlled_field_into(x, u, &mut out);
    out
}

/// `η(t) = t e_1`.
pub fn eta(t: f64, d: usize) -> Point {
    let mut x = vec![0.0; d];
    x[0] = t;
    x
}

/// Projection onto the last two coordinates.
pub fn tau(x: &[f64]) -> [f64; 2] {
    let d = x.len();
    [x[d - 2], x[d - 1]]
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn field_closed_forms() {
        assert_eq!(vector_field(1, &[0.3, 1.0, 2.0, 5.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(vector_field(2, &[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0, 1.0, 1.0, 0.5]);
        assert_eq!(vector_field(3, &[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            vector_field(5, &[0.0; 4]),
            Err(GapError::IndexOutOfRange { k: 5, d: 4 })
        ));
        assert!(vector_field(0, &[0.0; 4]).is_err());
    }

    #[test]
    fn bracket_oracle() {
        let x = [1.0, 0.0, 0.0, 0.0];
        let b = lie_bracket_check(1, 2, &x, 1e-5).unwrap();
        assert!(close(&b, &[0.0, 0.0, 1.0, 1.0], 1e-8), "{b:?}");
        let y = [0.4, -0.2, 0.7, 1.1];
        assert!(norm(&lie_bracket_check(2, 2, &y, 1e-5).unwrap()) < 1e-12);
        assert!(norm(&lie_bracket_check(1, 4, &y, 1e-5).unwrap()) < 1e-8);
        assert!(lie_bracket_check(1, 2, &y, 0.0).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&[1.0, 1.0, 1.0, 1.0]), vec![1.0, 1.0, 2.0, 2.5]);
        assert_eq!(phi(&[0.7, 0.0, 0.0, 0.0]), vec![0.7, 0.0, 0.0, 0.0]);
        let x = [0.2, -0.3, 0.7, 0.1];
        assert!(close(&phi_inv(&phi(&x)), &x, 1e-13));
        // closed-form inverse for d = 4
        let z = [0.3, 0.5, -0.2, 0.9];
        let expect = [
            z[0],
            z[1],
            z[2] - z[0] * z[1],
            z[3] - z[0] * z[2] + 0.5 * z[0] * z[0] * z[1],
        ];
        assert!(close(&phi_inv(&z), &expect, 1e-15));
    }

    #[test]
    fn radial_examples() {
        assert_eq!(radial(&[0.05, 0.0, 0.0, 0.0]), 0.0);
        assert!((radial(&phi(&[0.0, 0.0, 0.3, 0.4])) - 0.5).abs() < 1e-15);
        assert_eq!(radial(&[0.0, 1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn field_examples() {
        assert_eq!(controlled_field(&[0.3, 0.2, 0.1, 0.0], Control::new(1.0, 0.0)), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(controlled_field(&[1.0, 0.0, 0.0, 0.0], Control::new(0.0, 1.0)), vec![0.0, 1.0, 1.0, 0.5]);
        assert_eq!(controlled_field(&[0.3, 0.2, 0.1, 0.0], Control::ZERO), vec![0.0; 4]);
    }

    #[test]
    fn frame_matrix_structure() {
        let a = FrameMatrix::new(0.8, 5);
        for i in 0..5 {
            assert_eq!(a.get(i, i), 1.0);
            for j in (i + 1)..5 {
                assert_eq!(a.get(i, j), 0.0);
            }
        }
        let prod = a.mul(&FrameMatrix::new(-0.8, 5));
        for i in 0..5 {
            for j in 0..5 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 5 + j] - e).abs() < 1e-12);
            }
        }
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut out = [0.0; 5];
        frame_apply_into(0.8, &x, &mut out);
        assert!(close(&out, &a.apply(&x), 1e-15));
    }
}
