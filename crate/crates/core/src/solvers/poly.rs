//! Dense univariate polynomials with real coefficients and a companion-matrix
//! root finder.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Polynomial with coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `a + b x`.
    pub fn linear(a: f64, b: f64) -> Self {
        Poly(vec![a, b])
    }

    /// `a + b x + c x²`.
    pub fn quadratic(a: f64, b: f64, c: f64) -> Self {
        Poly(vec![a, b, c])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `q(y) = p(y + a)`.
    pub fn taylor_shift(&self, a: f64) -> Poly {
        let mut c = self.0.clone();
        if a == 0.0 {
            return Poly(c);
        }
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                c[j] += a * c[j + 1];
            }
        }
        Poly(c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    /// Polynomial long division; returns `(quotient, remainder)`.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        let dd = d.degree();
        let lead = d.coeff(dd);
        assert!(lead != 0.0, "division by the zero polynomial");
        let mut r = self.0.clone();
        let n = self.degree();
        if n < dd {
            return (Poly::zero(), self.clone());
        }
        let mut q = vec![0.0; n - dd + 1];
        for k in (0..=n - dd).rev() {
            let c = r[k + dd] / lead;
            q[k] = c;
            for j in 0..=dd {
                r[k + j] -= c * d.coeff(j);
            }
        }
        r.truncate(dd.max(1));
        (Poly(q), Poly(r))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in rhs.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Real roots of `p`, from the eigenvalues of its companion matrix.
///
/// Eigenvalues with `|imag| < 1e-8 (1 + |real|)` are accepted as real and
/// then refined by a few Newton steps on `p` itself. Leading coefficients that
/// are negligible relative to the largest one are dropped first.
pub fn real_roots(p: &Poly) -> Vec<f64> {
    let max = p.0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    let mut n = p.degree();
    while n > 0 && p.coeff(n).abs() <= 1e-13 * max {
        n -= 1;
    }
    if n == 0 {
        return Vec::new();
    }
    if p.0[..=n].iter().any(|c| !c.is_finite()) {
        return Vec::new();
    }
    let trimmed = Poly(p.0[..=n].to_vec());
    let mut roots = Vec::with_capacity(n);
    if n == 1 {
        roots.push(-p.coeff(0) / p.coeff(1));
    } else {
        // Symmetric root sets (e.g. even polynomials) can stall the QR
        // iteration; a shifted variable breaks the symmetry.
        for shift in [
            0.0,
            std::f64::consts::FRAC_1_PI,
            -std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::SQRT_2,
        ] {
            let q = trimmed.taylor_shift(shift);
            if let Some(eigs) = companion_eigenvalues(&q) {
                for z in eigs {
                    if z.im.abs() < 1e-8 * (1.0 + z.re.abs()) {
                        roots.push(z.re + shift);
                    }
                }
                break;
            }
        }
    }
    let dp = trimmed.derivative();
    for r in roots.iter_mut() {
        let mut x = *r;
        let mut fx = trimmed.eval(x).abs();
        for _ in 0..8 {
            let d = dp.eval(x);
            if d == 0.0 {
                break;
            }
            let x1 = x - trimmed.eval(x) / d;
            let f1 = trimmed.eval(x1).abs();
            if !(f1 < fx) {
                break;
            }
            x = x1;
            fx = f1;
        }
        *r = x;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Eigenvalues of the companion matrix of `p` (degree ≥ 2, nonzero
/// leading coefficient), or `None` if the Schur iteration does not converge.
fn companion_eigenvalues(p: &Poly) -> Option<Vec<nalgebra::Complex<f64>>> {
    let n = p.degree();
    let lead = p.coeff(n);
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -p.coeff(i) / lead;
    }
    let schur = nalgebra::linalg::Schur::try_new(c, f64::EPSILON, 200 * n)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Real roots of `a x² + b x + c` (degenerating gracefully to linear).
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // Tangency under rounding still counts as a double root.
        if disc > -1e-12 * b * b.max(4.0 * a * c) {
            return vec![-b / (2.0 * a)];
        }
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0, 0.0];
    }
    let mut r = vec![q / a, c / q];
    r.sort_by(|x, y| x.partial_cmp(y).unwrap());
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_product() {
        let p =
            &(&Poly::linear(-1.0, 1.0) * &Poly::linear(2.0, 1.0)) * &Poly::quadratic(1.0, 0.0, 1.0);
        let r = real_roots(&p);
        assert_eq!(r.len(), 2);
        assert!((r[0] + 2.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn division_recovers_factor() {
        let f = Poly::quadratic(1.0, 0.0, 1.0);
        let g = Poly(vec![3.0, -1.0, 0.5, 2.0]);
        let (q, r) = (&f * &g).div_rem(&f);
        for k in 0..4 {
            assert!((q.coeff(k) - g.coeff(k)).abs() < 1e-12);
        }
        assert!(r.0.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn quadratic_cases() {
        assert_eq!(quadratic_roots(1.0, -3.0, 2.0), vec![1.0, 2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
    }

    #[test]
    fn wilkinson_like_roots() {
        let mut p = Poly::constant(1.0);
        for k in 1..=8 {
            p = &p * &Poly::linear(-(k as f64) * 0.5, 1.0);
        }
        let r = real_roots(&p);
        assert_eq!(r.len(), 8);
        for (k, x) in r.iter().enumerate() {
            assert!((x - (k as f64 + 1.0) * 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = Poly(vec![1.5, -2.0, 0.25, 3.0, -1.0]);
        let q = p.taylor_shift(0.7);
        for x in [-2.0, -0.3, 0.0, 1.1, 2.5] {
            assert!((q.eval(x) - p.eval(x + 0.7)).abs() < 1e-10);
        }
    }

    #[test]
    fn even_polynomial_terminates() {
        // Found as a resultant in a rig sample; unshifted QR stalls on it.
        let p = Poly(vec![
            0.938_728_244_855_279_1,
            0.0,
            -0.322_977_539_329_376_9,
            0.0,
            0.039_214_064_236_248_854,
            0.0,
            -0.001_981_616_614_087_296,
            0.0,
            3.603_727_631_091_864e-5,
        ]);
        let roots = real_roots(&p);
        for r in &roots {
            assert!(p.eval(*r).abs() < 1e-9);
            assert!(roots.iter().any(|s| (s + r).abs() < 1e-7));
        }
    }
}
