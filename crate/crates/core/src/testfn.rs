//! Separable analytic test functions `G(t,x,y) = g(t) X(x) Y(y)` on the
//! cylinder and `H(t,x) = h(t) X(x)` on the road, with closed-form
//! derivatives.
//!
//! `X(x) = amp * cos(2 pi k.x + phase)`. The y-profiles cover the Fourier
//! cosine modes `cos(m pi y)` and the compact bumps
//! `y^2 (1-y)^2 cos(r pi y)` which vanish with their first derivative at
//! both ends of the cylinder.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Five-point Gauss-Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Gauss-Legendre quadrature of `f` on `[a, b]`.
pub fn gauss_legendre5<T: Scalar>(a: T, b: T, f: impl Fn(T) -> T) -> T {
    let half = (b - a) * T::of(0.5);
    let mid = (a + b) * T::of(0.5);
    GL5.iter().map(|&(x, w)| T::of(w) * f(mid + half * T::of(x))).sum::<T>() * half
}

/// Time dependence `g(t)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum TimeFactor<T> {
    Constant(T),
    /// `exp(-rate * t)`.
    Exp { rate: T },
    /// `sum_k c_k t^k`.
    Polynomial(Vec<T>),
    /// Arbitrary smooth factor; integrals fall back to Gauss-Legendre.
    #[serde(skip)]
    Custom { value: fn(T) -> T, derivative: fn(T) -> T },
}

impl<T: Scalar> TimeFactor<T> {
    pub fn one() -> Self {
        TimeFactor::Constant(T::one())
    }

    /// `(t (T - t))^2 / (T/2)^4`, a bump vanishing at both ends of `[0, T]`.
    pub fn bump(horizon: T) -> Self {
        let h = horizon;
        let norm = (h * T::of(0.5)).powi(4);
        // t^2 (h - t)^2 = h^2 t^2 - 2 h t^3 + t^4
        TimeFactor::Polynomial(vec![
            T::zero(),
            T::zero(),
            h * h / norm,
            -T::of(2.0) * h / norm,
            T::one() / norm,
        ])
    }

    pub fn value(&self, t: T) -> T {
        match self {
            TimeFactor::Constant(c) => *c,
            TimeFactor::Exp { rate } => (-*rate * t).exp(),
            TimeFactor::Polynomial(c) => poly_eval(c, t),
            TimeFactor::Custom { value, .. } => value(t),
        }
    }

    pub fn derivative(&self, t: T) -> T {
        match self {
            TimeFactor::Constant(_) => T::zero(),
            TimeFactor::Exp { rate } => -*rate * (-*rate * t).exp(),
            TimeFactor::Polynomial(c) => poly_eval(&poly_derivative(c), t),
            TimeFactor::Custom { derivative, .. } => derivative(t),
        }
    }

    /// `int_a^b g`.
    pub fn integral(&self, a: T, b: T) -> T {
        match self {
            TimeFactor::Constant(c) => *c * (b - a),
            TimeFactor::Exp { rate } => {
                if *rate == T::zero() {
                    b - a
                } else {
                    ((-*rate * a).exp() - (-*rate * b).exp()) / *rate
                }
            }
            TimeFactor::Polynomial(c) => {
                let anti = poly_antiderivative(c);
                poly_eval(&anti, b) - poly_eval(&anti, a)
            }
            TimeFactor::Custom { value, .. } => gauss_legendre5(a, b, value),
        }
    }

    /// `int_a^b g^2`.
    pub fn square_integral(&self, a: T, b: T) -> T {
        match self {
            TimeFactor::Constant(c) => *c * *c * (b - a),
            TimeFactor::Exp { rate } => TimeFactor::Exp { rate: *rate * T::of(2.0) }.integral(a, b),
            TimeFactor::Polynomial(c) => TimeFactor::Polynomial(poly_mul(c, c)).integral(a, b),
            TimeFactor::Custom { value, .. } => gauss_legendre5(a, b, |t| value(t) * value(t)),
        }
    }
}

fn poly_eval<T: Scalar>(c: &[T], t: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &ck| acc * t + ck)
}

fn poly_derivative<T: Scalar>(c: &[T]) -> Vec<T> {
    c.iter().enumerate().skip(1).map(|(k, &ck)| ck * T::of_usize(k)).collect()
}

fn poly_antiderivative<T: Scalar>(c: &[T]) -> Vec<T> {
    std::iter::once(T::zero())
        .chain(c.iter().enumerate().map(|(k, &ck)| ck / T::of_usize(k + 1)))
        .collect()
}

fn poly_mul<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + x * y;
        }
    }
    out
}

/// `amp * cos(2 pi k.x + phase)` on the torus `T^{p-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XWave<T> {
    pub amp: T,
    pub k: Vec<i32>,
    pub phase: T,
}

impl<T: Scalar> XWave<T> {
    pub fn constant(c: T, dims: usize) -> Self {
        XWave { amp: c, k: vec![0; dims], phase: T::zero() }
    }

    fn arg(&self, x: &[T]) -> T {
        let two_pi = T::TAU();
        self.k.iter().zip(x).map(|(&k, &xq)| T::of(k as f64) * xq).sum::<T>() * two_pi + self.phase
    }

    pub fn value(&self, x: &[T]) -> T {
        self.amp * self.arg(x).cos()
    }

    pub fn grad(&self, x: &[T]) -> Vec<T> {
        let s = self.arg(x).sin();
        self.k.iter().map(|&k| -self.amp * T::TAU() * T::of(k as f64) * s).collect()
    }

    pub fn laplacian(&self, x: &[T]) -> T {
        let k2: i32 = self.k.iter().map(|k| k * k).sum();
        -T::TAU() * T::TAU() * T::of(k2 as f64) * self.value(x)
    }
}

/// Vertical profile `Y(y)` on [0,1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum YProfile<T> {
    One,
    /// `intercept + slope * y`.
    Affine { intercept: T, slope: T },
    /// `cos(m pi y)`: homogeneous Neumann at both ends.
    Cosine { m: u32 },
    /// `y^2 (1-y)^2 cos(r pi y)`.
    Bump { r: u32 },
}

impl<T: Scalar> YProfile<T> {
    /// `(Y, Y', Y'')` at `y`.
    pub fn jet(&self, y: T) -> (T, T, T) {
        let pi = T::PI();
        match self {
            YProfile::One => (T::one(), T::zero(), T::zero()),
            YProfile::Affine { intercept, slope } => (*intercept + *slope * y, *slope, T::zero()),
            YProfile::Cosine { m } => {
                let w = T::of(*m as f64) * pi;
                let (s, c) = (w * y).sin_cos();
                (c, -w * s, -w * w * c)
            }
            YProfile::Bump { r } => {
                let one = T::one();
                let two = T::of(2.0);
                let b = y * y * (one - y) * (one - y);
                let b1 = two * y * (one - y) * (one - two * y);
                let b2 = two * (one - T::of(6.0) * y + T::of(6.0) * y * y);
                let w = T::of(*r as f64) * pi;
                let (s, c) = (w * y).sin_cos();
                let (c1, c2) = (-w * s, -w * w * c);
                (b * c, b1 * c + b * c1, b2 * c + two * b1 * c1 + b * c2)
            }
        }
    }
}

/// Spatial part of a field test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMode<T> {
    pub wave: XWave<T>,
    pub profile: YProfile<T>,
}

impl<T: Scalar> FieldMode<T> {
    pub fn zero(p: usize) -> Self {
        FieldMode { wave: XWave::constant(T::zero(), p - 1), profile: YProfile::One }
    }

    pub fn constant(c: T, p: usize) -> Self {
        FieldMode { wave: XWave::constant(c, p - 1), profile: YProfile::One }
    }

    /// `amp cos(2 pi k.x) cos(m pi y)`.
    pub fn cosine(amp: T, k: Vec<i32>, m: u32) -> Self {
        FieldMode { wave: XWave { amp, k, phase: T::zero() }, profile: YProfile::Cosine { m } }
    }

    /// `amp cos(2 pi k.x + phase) y^2 (1-y)^2 cos(r pi y)`.
    pub fn bump(amp: T, k: Vec<i32>, phase: T, r: u32) -> Self {
        FieldMode { wave: XWave { amp, k, phase }, profile: YProfile::Bump { r } }
    }

    pub fn value(&self, x: &[T], y: T) -> T {
        self.wave.value(x) * self.profile.jet(y).0
    }

    /// Gradient `(d/dx_1, ..., d/dx_{p-1}, d/dy)`.
    pub fn grad(&self, x: &[T], y: T) -> Vec<T> {
        let (yv, y1, _) = self.profile.jet(y);
        let mut g: Vec<T> = self.wave.grad(x).into_iter().map(|v| v * yv).collect();
        g.push(self.wave.value(x) * y1);
        g
    }

    pub fn laplacian_x(&self, x: &[T], y: T) -> T {
        self.wave.laplacian(x) * self.profile.jet(y).0
    }

    pub fn d_y(&self, x: &[T], y: T) -> T {
        self.wave.value(x) * self.profile.jet(y).1
    }

    pub fn d_yy(&self, x: &[T], y: T) -> T {
        self.wave.value(x) * self.profile.jet(y).2
    }

    pub fn laplacian(&self, x: &[T], y: T) -> T {
        self.laplacian_x(x, y) + self.d_yy(x, y)
    }
}

/// Spatial part of a road test function.
pub type RoadMode<T> = XWave<T>;

/// A test-function pair `(G, H)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestFunctionPair<T> {
    pub g_time: TimeFactor<T>,
    pub g_space: FieldMode<T>,
    pub h_time: TimeFactor<T>,
    pub h_space: RoadMode<T>,
}

impl<T: Scalar> TestFunctionPair<T> {
    pub fn new(g_time: TimeFactor<T>, g_space: FieldMode<T>, h_time: TimeFactor<T>, h_space: RoadMode<T>) -> Self {
        TestFunctionPair { g_time, g_space, h_time, h_space }
    }

    /// `G = c`, `H = 0`.
    pub fn constant_field(c: T, p: usize) -> Self {
        TestFunctionPair {
            g_time: TimeFactor::one(),
            g_space: FieldMode::constant(c, p),
            h_time: TimeFactor::one(),
            h_space: XWave::constant(T::zero(), p - 1),
        }
    }

    pub fn zero(p: usize) -> Self {
        Self::constant_field(T::zero(), p)
    }

    /// Fourier-cosine pair `G = e^{-lambda t} cos(2 pi k.x) cos(m pi y)`,
    /// `H = e^{-mu t} road_amp cos(2 pi k.x)`.
    pub fn fourier(k: Vec<i32>, m: u32, lambda: T, road_amp: T, mu: T) -> Self {
        TestFunctionPair {
            g_time: TimeFactor::Exp { rate: lambda },
            g_space: FieldMode::cosine(T::one(), k.clone(), m),
            h_time: TimeFactor::Exp { rate: mu },
            h_space: XWave { amp: road_amp, k, phase: T::zero() },
        }
    }

    pub fn g(&self, t: T, x: &[T], y: T) -> T {
        self.g_time.value(t) * self.g_space.value(x, y)
    }

    pub fn dt_g(&self, t: T, x: &[T], y: T) -> T {
        self.g_time.derivative(t) * self.g_space.value(x, y)
    }

    pub fn grad_g(&self, t: T, x: &[T], y: T) -> Vec<T> {
        let gt = self.g_time.value(t);
        self.g_space.grad(x, y).into_iter().map(|v| gt * v).collect()
    }

    pub fn lap_x_g(&self, t: T, x: &[T], y: T) -> T {
        self.g_time.value(t) * self.g_space.laplacian_x(x, y)
    }

    pub fn d_yy_g(&self, t: T, x: &[T], y: T) -> T {
        self.g_time.value(t) * self.g_space.d_yy(x, y)
    }

    pub fn d_y_g(&self, t: T, x: &[T], y: T) -> T {
        self.g_time.value(t) * self.g_space.d_y(x, y)
    }

    pub fn h(&self, t: T, x: &[T]) -> T {
        self.h_time.value(t) * self.h_space.value(x)
    }

    pub fn dt_h(&self, t: T, x: &[T]) -> T {
        self.h_time.derivative(t) * self.h_space.value(x)
    }

    pub fn grad_h(&self, t: T, x: &[T]) -> Vec<T> {
        let ht = self.h_time.value(t);
        self.h_space.grad(x).into_iter().map(|v| ht * v).collect()
    }

    pub fn lap_h(&self, t: T, x: &[T]) -> T {
        self.h_time.value(t) * self.h_space.laplacian(x)
    }

    /// Largest relative mismatch between the analytic derivatives and
    /// central finite differences over the given sample points
    /// `(t, x, y)`. Differences are scaled by `max(1, |analytic|)`.
    pub fn derivative_self_test(&self, points: &[(T, Vec<T>, T)]) -> T {
        let h = T::of(1e-4);
        let two = T::of(2.0);
        let rel = |a: T, b: T| (a - b).abs() / a.abs().max(T::one());
        let mut worst = T::zero();
        for (t, x, y) in points {
            let (t, y) = (*t, *y);
            let fd_t = (self.g(t + h, x, y) - self.g(t - h, x, y)) / (two * h);
            worst = worst.max(rel(self.dt_g(t, x, y), fd_t));
            let fd_ht = (self.h(t + h, x) - self.h(t - h, x)) / (two * h);
            worst = worst.max(rel(self.dt_h(t, x), fd_ht));

            let grad = self.grad_g(t, x, y);
            let grad_h = self.grad_h(t, x);
            let mut lap_x = T::zero();
            let mut lap_h = T::zero();
            for q in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[q] = xp[q] + h;
                xm[q] = xm[q] - h;
                let (gp, g0, gm) = (self.g(t, &xp, y), self.g(t, x, y), self.g(t, &xm, y));
                worst = worst.max(rel(grad[q], (gp - gm) / (two * h)));
                lap_x = lap_x + (gp - two * g0 + gm) / (h * h);
                let (hp, h0, hm) = (self.h(t, &xp), self.h(t, x), self.h(t, &xm));
                worst = worst.max(rel(grad_h[q], (hp - hm) / (two * h)));
                lap_h = lap_h + (hp - two * h0 + hm) / (h * h);
            }
            worst = worst.max(rel(self.lap_x_g(t, x, y), lap_x));
            worst = worst.max(rel(self.lap_h(t, x), lap_h));
            let (gp, g0, gm) = (self.g(t, x, y + h), self.g(t, x, y), self.g(t, x, y - h));
            worst = worst.max(rel(self.d_y_g(t, x, y), (gp - gm) / (two * h)));
            worst = worst.max(rel(grad[x.len()], (gp - gm) / (two * h)));
            worst = worst.max(rel(self.d_yy_g(t, x, y), (gp - two * g0 + gm) / (h * h)));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points(p: usize) -> Vec<(f64, Vec<f64>, f64)> {
        let mut pts = Vec::new();
        for &t in &[0.0, 0.03, 0.4] {
            for &y in &[0.1, 0.37, 0.9] {
                let x: Vec<f64> = (0..p - 1).map(|q| 0.13 + 0.29 * q as f64 + y * 0.5).collect();
                pts.push((t, x, y));
            }
        }
        pts
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pairs = vec![
            TestFunctionPair::fourier(vec![1], 1, 2.0, 0.5, 1.0),
            TestFunctionPair::fourier(vec![2, 1], 3, 0.5, -1.0, 0.0),
            TestFunctionPair::new(
                TimeFactor::bump(0.5),
                FieldMode::bump(1.3, vec![1], 0.4, 2),
                TimeFactor::Polynomial(vec![1.0, -2.0, 0.5]),
                XWave { amp: 0.7, k: vec![3], phase: 1.1 },
            ),
            TestFunctionPair::new(
                TimeFactor::Custom { value: |t: f64| (3.0 * t).sin(), derivative: |t: f64| 3.0 * (3.0 * t).cos() },
                FieldMode { wave: XWave::constant(1.0, 1), profile: YProfile::Affine { intercept: 0.2, slope: 1.5 } },
                TimeFactor::one(),
                XWave::constant(0.0, 1),
            ),
        ];
        for pair in &pairs {
            let p = pair.g_space.wave.k.len() + 1;
            let worst = pair.derivative_self_test(&sample_points(p));
            assert!(worst < 1e-6, "{pair:?}: {worst}");
        }
    }

    #[test]
    fn time_integrals_exact() {
        let e = TimeFactor::Exp { rate: 3.0 };
        assert!((e.integral(0.1, 0.7) - ((-0.3f64).exp() - (-2.1f64).exp()) / 3.0).abs() < 1e-15);
        let b = TimeFactor::<f64>::bump(1.0);
        let gl = gauss_legendre5(0.0, 1.0, |t| b.value(t) * b.value(t));
        assert!((b.square_integral(0.0, 1.0) - gl).abs() < 1e-12);
        let c = TimeFactor::Custom { value: |t: f64| t.cos(), derivative: |t: f64| -t.sin() };
        assert!((c.integral(0.0, 0.2) - 0.2f64.sin()).abs() < 1e-14);
        assert_eq!(b.value(0.0), 0.0);
        assert!((b.value(0.5) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bump_vanishes_at_ends() {
        let m = FieldMode::<f64>::bump(1.0, vec![1], 0.0, 1);
        for y in [0.0, 1.0] {
            assert!(m.value(&[0.3], y).abs() < 1e-15);
            assert!(m.d_y(&[0.3], y).abs() < 1e-15);
        }
    }
}
