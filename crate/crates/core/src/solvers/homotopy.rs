//! Predictor-corrector path tracking for square polynomial systems.
//!
//! The homotopy `H(x, t) = (1 - t) γ G(x) + t F(x)` deforms a start system
//! `G` with known roots into the target `F`. With a generic complex `γ` the
//! solution paths stay nonsingular for `t ∈ [0, 1)`, so every isolated root
//! of `F` is the endpoint of some path.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

pub type CVec<const N: usize> = SVector<Complex64, N>;
pub type CMat<const N: usize> = SMatrix<Complex64, N, N>;

/// A square system evaluated over the complex numbers.
pub trait System<const N: usize> {
    fn eval(&self, x: &CVec<N>) -> CVec<N>;
    fn jacobian(&self, x: &CVec<N>) -> CMat<N>;
}

#[derive(Debug, Clone, Copy)]
pub struct TrackerOptions {
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Paths whose norm exceeds this are taken to diverge to infinity.
    pub divergence_norm: f64,
    pub newton_tol: f64,
    pub max_steps: usize,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.02,
            max_step: 0.1,
            min_step: 1e-13,
            divergence_norm: 1e7,
            newton_tol: 1e-10,
            max_steps: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathEnd<const N: usize> {
    /// The path reached `t = 1` at a finite point.
    Finite(CVec<N>),
    /// The path left every bounded region (a root at infinity).
    Diverged,
    /// Step control broke down at a finite point.
    Failed,
}

pub struct Homotopy<'a, F, G> {
    pub target: &'a F,
    pub start: &'a G,
    pub gamma: Complex64,
}

/// Gaussian elimination with partial pivoting.
pub fn solve<const N: usize>(a: &CMat<N>, b: &CVec<N>) -> Option<CVec<N>> {
    let mut m = *a;
    let mut x = *b;
    for col in 0..N {
        let mut piv = col;
        let mut best = m[(col, col)].norm_sqr();
        for r in col + 1..N {
            let v = m[(r, col)].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != col {
            m.swap_rows(piv, col);
            x.swap_rows(piv, col);
        }
        let inv = m[(col, col)].inv();
        for r in col + 1..N {
            let f = m[(r, col)] * inv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in col..N {
                let v = m[(col, c)];
                m[(r, c)] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    for col in (0..N).rev() {
        let mut acc = x[col];
        for c in col + 1..N {
            acc -= m[(col, c)] * x[c];
        }
        x[col] = acc / m[(col, col)];
    }
    Some(x)
}

fn cnorm<const N: usize>(x: &CVec<N>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl<F, G> Homotopy<'_, F, G> {
    fn h<const N: usize>(&self, x: &CVec<N>, t: f64) -> CVec<N>
    where
        F: System<N>,
        G: System<N>,
    {
        self.start.eval(x) * (self.gamma * (1.0 - t)) + self.target.eval(x) * Complex64::new(t, 0.0)
    }

    fn hx<const N: usize>(&self, x: &CVec<N>, t: f64) -> CMat<N>
    where
        F: System<N>,
        G: System<N>,
    {
        self.start.jacobian(x) * (self.gamma * (1.0 - t))
            + self.target.jacobian(x) * Complex64::new(t, 0.0)
    }

    /// Tangent `dx/dt = -H_x⁻¹ H_t`.
    fn tangent<const N: usize>(&self, x: &CVec<N>, t: f64) -> Option<CVec<N>>
    where
        F: System<N>,
        G: System<N>,
    {
        let ht = self.target.eval(x) - self.start.eval(x) * self.gamma;
        solve(&self.hx(x, t), &(-ht))
    }

    fn correct<const N: usize>(&self, mut x: CVec<N>, t: f64, tol: f64) -> Option<CVec<N>>
    where
        F: System<N>,
        G: System<N>,
    {
        let scale = 1.0 + cnorm(&x);
        let mut prev = f64::INFINITY;
        for it in 0..3 {
            let dx = solve(&self.hx(&x, t), &self.h(&x, t))?;
            let n = cnorm(&dx);
            // The first correction must be small compared to the point itself,
            // which guards against jumping onto a neighboring path.
            if (it == 0 && n > 0.05 * scale) || n > 0.5 * prev || !n.is_finite() {
                return None;
            }
            x -= dx;
            if n < tol * scale {
                return Some(x);
            }
            prev = n;
        }
        None
    }

    /// Tracks one path from a root `x0` of the start system at `t = 0`.
    pub fn track<const N: usize>(&self, x0: &CVec<N>, opts: &TrackerOptions) -> PathEnd<N>
    where
        F: System<N>,
        G: System<N>,
    {
        let mut x = *x0;
        let mut t = 0.0f64;
        let mut h = opts.initial_step;
        let mut streak = 0;
        for _ in 0..opts.max_steps {
            if t >= 1.0 {
                break;
            }
            let step = h.min(1.0 - t);
            let predicted = (|| {
                let k1 = self.tangent(&x, t)?;
                let k2 = self.tangent(&(x + k1 * Complex64::from(step * 0.5)), t + step * 0.5)?;
                let k3 = self.tangent(&(x + k2 * Complex64::from(step * 0.5)), t + step * 0.5)?;
                let k4 = self.tangent(&(x + k3 * Complex64::from(step)), t + step)?;
                let two = Complex64::new(2.0, 0.0);
                let sum: CVec<N> = k1 + k2 * two + k3 * two + k4;
                Some(x + sum * Complex64::from(step / 6.0))
            })();
            let t1 = if step >= 1.0 - t { 1.0 } else { t + step };
            match predicted.and_then(|xp| self.correct(xp, t1, opts.newton_tol)) {
                Some(xc) => {
                    x = xc;
                    t = t1;
                    streak += 1;
                    if streak >= 3 {
                        h = (h * 2.0).min(opts.max_step);
                        streak = 0;
                    }
                    if cnorm(&x) > opts.divergence_norm {
                        return PathEnd::Diverged;
                    }
                }
                None => {
                    h *= 0.5;
                    streak = 0;
                    if h < opts.min_step {
                        return if cnorm(&x) > opts.divergence_norm.sqrt() {
                            PathEnd::Diverged
                        } else {
                            PathEnd::Failed
                        };
                    }
                }
            }
        }
        if t < 1.0 {
            return PathEnd::Failed;
        }
        // Final Newton refinement on the target system.
        for _ in 0..4 {
            let Some(dx) = solve(&self.target.jacobian(&x), &self.target.eval(&x)) else {
                break;
            };
            x -= dx;
            if cnorm(&dx) < 1e-14 * (1.0 + cnorm(&x)) {
                break;
            }
        }
        PathEnd::Finite(x)
    }
}

/// Real part of `x` if its imaginary part is negligible.
pub fn real_part<const N: usize>(x: &CVec<N>, tol: f64) -> Option<SVector<f64, N>> {
    let scale = 1.0 + x.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if x.iter().all(|z| z.im.abs() <= tol * scale) {
        Some(x.map(|z| z.re))
    } else {
        None
    }
}
