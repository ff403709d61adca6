//! Conservative explicit finite-volume solver for the field-road system
//!
//! ```text
//! d_t v = d Lap v                     in T^{p-1} x (0,1)
//! -d d_y v = alpha (u - v)            at y = 0
//! d_y v = 0                           at y = 1
//! d_t u = D Lap_x u + alpha (v - u)   on T^{p-1}
//! ```
//!
//! Cells are centred; `v` is stored with the y-cell slowest, then the
//! x-cells row-major, matching the lattice layout. The field/road exchange
//! uses the face trace `v_f = (2d v_0 / h + alpha u) / (2d / h + alpha)`,
//! which makes the flux `kappa (u - v_0)` with `kappa = 2 d alpha / (2 d + alpha h)`.
//! The same flux enters both updates with opposite signs, so the discrete
//! mass `h_x^{p-1} (h_y sum v + sum u)` is conserved to roundoff, and
//! `kappa <= alpha` keeps the maximum principle under the usual CFL bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::testfn::{FieldMode, TestFunctionPair, TimeFactor, XWave, YProfile};

/// Solver parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdeParams<T> {
    pub p: usize,
    /// Cells along y.
    pub m: usize,
    /// Cells along each torus direction.
    pub mx: usize,
    pub d: T,
    pub road_d: T,
    pub alpha: T,
    pub cfl_safety: T,
}

impl<T: Scalar> PdeParams<T> {
    pub fn new(p: usize, m: usize, d: T, road_d: T, alpha: T, cfl_safety: T) -> Result<Self> {
        let params = PdeParams { p, m, mx: m, d, road_d, alpha, cfl_safety };
        params.validate()?;
        Ok(params)
    }

    /// Use `mx` cells per torus direction; `mx = 1` gives the
    /// x-independent reduced problem.
    pub fn with_x_cells(mut self, mx: usize) -> Result<Self> {
        self.mx = mx;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("solver supports p in {{2, 3}}, got {}", self.p)));
        }
        if self.m < 4 || self.mx == 0 {
            return Err(Error::InvalidParameter(format!("need at least 4 cells in y, got {}", self.m)));
        }
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !(pos(self.d) && pos(self.road_d) && pos(self.alpha)) {
            return Err(Error::InvalidParameter("d, D and alpha must be positive".into()));
        }
        if !pos(self.cfl_safety) {
            return Err(Error::InvalidParameter("CFL safety factor must be positive".into()));
        }
        Ok(())
    }

    pub fn hy(&self) -> T {
        T::one() / T::of_usize(self.m)
    }

    pub fn hx(&self) -> T {
        T::one() / T::of_usize(self.mx)
    }

    pub fn x_cells(&self) -> usize {
        self.mx.pow(self.p as u32 - 1)
    }

    fn x_stiffness(&self) -> T {
        if self.mx == 1 {
            T::zero()
        } else {
            T::of_usize(self.p - 1) / (self.hx() * self.hx())
        }
    }

    pub fn kappa(&self) -> T {
        let two_d = T::of(2.0) * self.d;
        two_d * self.alpha / (two_d + self.alpha * self.hy())
    }

    /// `dt = safety / (2 (max(d sum h^-2, D sum_x h^-2) + alpha / h_y))`; with
    /// unit rates and equal spacing this is `safety h^2 / (2 (p + alpha h))`.
    pub fn stable_dt(&self) -> T {
        let hy = self.hy();
        let field = self.d * (self.x_stiffness() + T::one() / (hy * hy));
        let road = self.road_d * self.x_stiffness();
        self.cfl_safety / (T::of(2.0) * (field.max(road) + self.alpha / hy))
    }

    fn check_cfl(&self, dt: T) -> Result<()> {
        let hy = self.hy();
        let kappa = self.kappa();
        let field = dt * (T::of(2.0) * self.d * (self.x_stiffness() + T::one() / (hy * hy)) + kappa / hy);
        let road = dt * (T::of(2.0) * self.road_d * self.x_stiffness() + kappa);
        let limit = T::one() + T::of(1e-12);
        if field > limit || road > limit {
            return Err(Error::Cfl(format!(
                "dt = {dt:e} gives field factor {field:e} and road factor {road:e}; both must be <= 1"
            )));
        }
        Ok(())
    }
}

/// Grid functions and step metadata.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdeState<T> {
    pub params: PdeParams<T>,
    pub v: Vec<T>,
    pub u: Vec<T>,
    pub time: T,
    pub dt: T,
    pub steps: u64,
}

/// Forcing terms `phi(t, x, y)` on the field and `psi(t, x)` on the road.
pub trait Source<T> {
    fn field(&self, t: T, x: &[T], y: T) -> T;
    fn road(&self, t: T, x: &[T]) -> T;
}

impl<T: Scalar> Source<T> for TestFunctionPair<T> {
    fn field(&self, t: T, x: &[T], y: T) -> T {
        self.g(t, x, y)
    }

    fn road(&self, t: T, x: &[T]) -> T {
        self.h(t, x)
    }
}

/// `s(horizon - t)`.
pub struct Reversed<'a, S: ?Sized, T> {
    pub inner: &'a S,
    pub horizon: T,
}

impl<S: Source<T> + ?Sized, T: Scalar> Source<T> for Reversed<'_, S, T> {
    fn field(&self, t: T, x: &[T], y: T) -> T {
        self.inner.field(self.horizon - t, x, y)
    }

    fn road(&self, t: T, x: &[T]) -> T {
        self.inner.road(self.horizon - t, x)
    }
}

impl<T: Scalar> PdeState<T> {
    pub fn x_center(&self, xlin: usize) -> Vec<T> {
        let mx = self.params.mx;
        let hx = self.params.hx();
        let dims = self.params.p - 1;
        let mut x = vec![T::zero(); dims];
        let mut rem = xlin;
        for q in (0..dims).rev() {
            x[q] = (T::of_usize(rem % mx) + T::of(0.5)) * hx;
            rem /= mx;
        }
        x
    }

    pub fn y_center(&self, j: usize) -> T {
        (T::of_usize(j) + T::of(0.5)) * self.params.hy()
    }

    fn shift(&self, xlin: usize, q: usize, forward: bool) -> usize {
        let mx = self.params.mx;
        let stride = mx.pow((self.params.p - 2 - q) as u32);
        let c = (xlin / stride) % mx;
        let c2 = if forward { (c + 1) % mx } else { (c + mx - 1) % mx };
        xlin - c * stride + c2 * stride
    }

    fn x_laplacian(&self, f: &[T], base: usize, xlin: usize) -> T {
        if self.params.mx == 1 {
            return T::zero();
        }
        let hx2 = self.params.hx() * self.params.hx();
        let centre = f[base + xlin];
        let mut acc = T::zero();
        for q in 0..self.params.p - 1 {
            acc = acc + f[base + self.shift(xlin, q, true)] + f[base + self.shift(xlin, q, false)]
                - T::of(2.0) * centre;
        }
        acc / hx2
    }

    /// Face value of `v` at `y = 0` for each road cell.
    pub fn bottom_trace(&self) -> Vec<T> {
        let two_d_h = T::of(2.0) * self.params.d / self.params.hy();
        let a = self.params.alpha;
        self.v[..self.u.len()].iter().zip(&self.u).map(|(&v0, &u)| (two_d_h * v0 + a * u) / (two_d_h + a)).collect()
    }

    /// Values of the top cell row, the `y = 1` trace under the Neumann condition.
    pub fn top_trace(&self) -> &[T] {
        let nx = self.u.len();
        &self.v[(self.params.m - 1) * nx..]
    }

    fn step_by(&mut self, dt: T, source: Option<&dyn Source<T>>) -> Result<()> {
        self.params.check_cfl(dt)?;
        let nx = self.params.x_cells();
        let m = self.params.m;
        let hy = self.params.hy();
        let (d, road_d) = (self.params.d, self.params.road_d);
        let kappa = self.params.kappa();
        let mut dv = vec![T::zero(); self.v.len()];
        let mut du = vec![T::zero(); nx];
        for j in 0..m {
            let base = j * nx;
            for xlin in 0..nx {
                let c = self.v[base + xlin];
                let mut flux_y = T::zero();
                if j + 1 < m {
                    flux_y = flux_y + (self.v[base + nx + xlin] - c);
                }
                if j > 0 {
                    flux_y = flux_y + (self.v[base - nx + xlin] - c);
                }
                dv[base + xlin] = d * (self.x_laplacian(&self.v, base, xlin) + flux_y / (hy * hy));
            }
        }
        for xlin in 0..nx {
            let exchange = kappa * (self.u[xlin] - self.v[xlin]);
            dv[xlin] = dv[xlin] + exchange / hy;
            du[xlin] = road_d * self.x_laplacian(&self.u, 0, xlin) - exchange;
        }
        if let Some(src) = source {
            for xlin in 0..nx {
                let x = self.x_center(xlin);
                for j in 0..m {
                    dv[j * nx + xlin] = dv[j * nx + xlin] + src.field(self.time, &x, self.y_center(j));
                }
                du[xlin] = du[xlin] + src.road(self.time, &x);
            }
        }
        for (v, dvv) in self.v.iter_mut().zip(&dv) {
            *v = *v + dt * *dvv;
        }
        for (u, duu) in self.u.iter_mut().zip(&du) {
            *u = *u + dt * *duu;
        }
        self.time = self.time + dt;
        self.steps += 1;
        Ok(())
    }

    /// `h_x^{p-1} (h_y sum v + sum u)`.
    pub fn total_mass(&self) -> T {
        let hxp = self.params.hx().powi(self.params.p as i32 - 1);
        hxp * (self.params.hy() * self.v.iter().copied().sum::<T>() + self.u.iter().copied().sum::<T>())
    }

    /// Sup distance of `(v, u)` to the flat state carrying the same mass.
    pub fn flat_distance(&self) -> T {
        let level = self.total_mass() * T::of(0.5);
        self.v.iter().chain(&self.u).map(|&w| (w - level).abs()).fold(T::zero(), T::max)
    }

    /// `(min, max)` over all cells of `v` and `u`.
    pub fn range(&self) -> (T, T) {
        self.v.iter().chain(&self.u).fold((T::infinity(), T::neg_infinity()), |(lo, hi), &w| (lo.min(w), hi.max(w)))
    }

    /// Multilinear interpolation of `v` from cell centres; periodic in `x`,
    /// constant extension in `y` beyond the first and last centres.
    pub fn interpolate_field(&self, x: &[T], y: T) -> T {
        let nx = self.params.x_cells();
        let m = self.params.m;
        let pos = (y / self.params.hy() - T::of(0.5)).max(T::zero()).min(T::of_usize(m - 1));
        let j0 = pos.floor().to_usize().unwrap_or(0).min(m - 1);
        let j1 = (j0 + 1).min(m - 1);
        let wy = pos - T::of_usize(j0);
        let row = |j: usize| self.interpolate_x(&self.v[j * nx..(j + 1) * nx], x);
        row(j0) * (T::one() - wy) + row(j1) * wy
    }

    pub fn interpolate_road(&self, x: &[T]) -> T {
        self.interpolate_x(&self.u, x)
    }

    fn interpolate_x(&self, f: &[T], x: &[T]) -> T {
        let mx = self.params.mx;
        let dims = self.params.p - 1;
        let mut lo = vec![0usize; dims];
        let mut w = vec![T::zero(); dims];
        for q in 0..dims {
            let pos = x[q] * T::of_usize(mx) - T::of(0.5);
            let fl = pos.floor();
            w[q] = pos - fl;
            let i = fl.to_i64().unwrap_or(0).rem_euclid(mx as i64) as usize;
            lo[q] = i;
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << dims) {
            let mut lin = 0;
            let mut weight = T::one();
            for q in 0..dims {
                let up = corner >> q & 1 == 1;
                let c = if up { (lo[q] + 1) % mx } else { lo[q] };
                lin = lin * mx + c;
                weight = weight * if up { w[q] } else { T::one() - w[q] };
            }
            acc = acc + weight * f[lin];
        }
        acc
    }

    /// Midpoint-rule `<v, f>` on the cylinder.
    pub fn field_inner(&self, f: impl Fn(&[T], T) -> T) -> T {
        let nx = self.params.x_cells();
        let cell = self.params.hx().powi(self.params.p as i32 - 1) * self.params.hy();
        let mut acc = T::zero();
        for xlin in 0..nx {
            let x = self.x_center(xlin);
            for j in 0..self.params.m {
                acc = acc + self.v[j * nx + xlin] * f(&x, self.y_center(j));
            }
        }
        acc * cell
    }

    /// Midpoint-rule `<w, f>` on the road for a road grid function `w`.
    pub fn road_inner(&self, w: &[T], f: impl Fn(&[T]) -> T) -> T {
        let cell = self.params.hx().powi(self.params.p as i32 - 1);
        w.iter().enumerate().map(|(xlin, &wi)| wi * f(&self.x_center(xlin))).sum::<T>() * cell
    }
}

/// Cell-centred sampling of `(v0, u0)`; values outside `[0, 1]` are rejected
/// because exclusion forbids such densities.
pub fn init_pde<T: Scalar>(
    v0: impl Fn(&[T], T) -> T,
    u0: impl Fn(&[T]) -> T,
    params: PdeParams<T>,
) -> Result<PdeState<T>> {
    let state = init_pde_unchecked(v0, u0, params)?;
    let nx = state.u.len();
    for (k, &v) in state.v.iter().enumerate() {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(Error::ProfileOutOfRange {
                value: v.to_f64_lossy(),
                location: format!("field cell (x-cell {}, y-cell {})", k % nx, k / nx),
            });
        }
    }
    for (k, &u) in state.u.iter().enumerate() {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(Error::ProfileOutOfRange { value: u.to_f64_lossy(), location: format!("road cell {k}") });
        }
    }
    Ok(state)
}

/// As [`init_pde`] but accepting signed data (dual problems, manufactured
/// fields).
pub fn init_pde_unchecked<T: Scalar>(
    v0: impl Fn(&[T], T) -> T,
    u0: impl Fn(&[T]) -> T,
    params: PdeParams<T>,
) -> Result<PdeState<T>> {
    params.validate()?;
    let nx = params.x_cells();
    let dt = params.stable_dt();
    let mut state = PdeState {
        v: vec![T::zero(); nx * params.m],
        u: vec![T::zero(); nx],
        params,
        time: T::zero(),
        dt,
        steps: 0,
    };
    for xlin in 0..nx {
        let x = state.x_center(xlin);
        for j in 0..state.params.m {
            state.v[j * nx + xlin] = v0(&x, state.y_center(j));
        }
        state.u[xlin] = u0(&x);
    }
    Ok(state)
}

/// One explicit step of size `state.dt`.
pub fn pde_step<T: Scalar>(state: &mut PdeState<T>) -> Result<()> {
    let dt = state.dt;
    state.step_by(dt, None)
}

/// Advance to `t_end`, landing exactly on each snapshot time. Returns the
/// states at `snapshot_times`, which must be sorted and lie in
/// `[state.time, t_end]`.
pub fn solve<T: Scalar>(state: &mut PdeState<T>, t_end: T, snapshot_times: &[T]) -> Result<Vec<PdeState<T>>> {
    solve_with_source(state, t_end, snapshot_times, None)
}

pub fn solve_with_source<T: Scalar>(
    state: &mut PdeState<T>,
    t_end: T,
    snapshot_times: &[T],
    source: Option<&dyn Source<T>>,
) -> Result<Vec<PdeState<T>>> {
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("snapshot times must be sorted".into()));
    }
    if snapshot_times.iter().any(|&t| t < state.time || t > t_end) {
        return Err(Error::InvalidParameter("snapshot times must lie within the solve window".into()));
    }
    let mut out = Vec::with_capacity(snapshot_times.len());
    let mut targets = snapshot_times.iter().copied().peekable();
    let tol = state.dt * T::of(1e-9);
    loop {
        while let Some(&target) = targets.peek() {
            if target - state.time <= tol {
                let mut snap = state.clone();
                snap.time = target;
                out.push(snap);
                targets.next();
            } else {
                break;
            }
        }
        let next_stop = targets.peek().copied().unwrap_or(t_end).min(t_end);
        if t_end - state.time <= tol {
            state.time = t_end;
            break;
        }
        let dt = state.dt.min(next_stop - state.time);
        state.step_by(dt, source)?;
        if (next_stop - state.time).abs() <= tol {
            state.time = next_stop;
        }
    }
    Ok(out)
}

/// `n + 1` equally spaced snapshots on `[0, t_end]`, including both ends.
pub fn solve_uniform<T: Scalar>(
    state: &mut PdeState<T>,
    t_end: T,
    n: usize,
    source: Option<&dyn Source<T>>,
) -> Result<Vec<PdeState<T>>> {
    let t0 = state.time;
    let times: Vec<T> = (0..=n).map(|k| t0 + (t_end - t0) * T::of_usize(k) / T::of_usize(n.max(1))).collect();
    solve_with_source(state, t_end, &times, source)
}

fn trapezoid<T: Scalar>(times: &[T], values: &[T]) -> T {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) * T::of(0.5))
        .sum()
}

/// Signed residuals `(r_field, r_road)` of the weak formulation at time
/// `t`: left-hand side minus right-hand side, with midpoint quadrature in
/// space and the trapezoid rule over the snapshot times in `[0, t]`.
/// The snapshots must start at time 0 and include `t`.
pub fn weak_residual<T: Scalar>(snapshots: &[PdeState<T>], pair: &TestFunctionPair<T>, t: T) -> Result<(T, T)> {
    let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("no snapshots".into()))?;
    if first.time != T::zero() {
        return Err(Error::InvalidParameter("snapshots must start at time 0".into()));
    }
    let end = snapshots
        .iter()
        .position(|s| (s.time - t).abs() <= T::of(1e-12) * (T::one() + t.abs()))
        .ok_or_else(|| Error::InvalidParameter("no snapshot at the requested time".into()))?;
    let used = &snapshots[..=end];
    let params = &first.params;
    let (d, road_d, alpha) = (params.d, params.road_d, params.alpha);
    let zero = T::zero();
    let one = T::one();

    let mut times = Vec::with_capacity(used.len());
    let mut field_rate = Vec::with_capacity(used.len());
    let mut road_rate = Vec::with_capacity(used.len());
    for s in used {
        let tau = s.time;
        let trace = s.bottom_trace();
        let bulk = s.field_inner(|x, y| pair.dt_g(tau, x, y) + d * (pair.lap_x_g(tau, x, y) + pair.d_yy_g(tau, x, y)));
        let top = s.road_inner(s.top_trace(), |x| d * pair.d_y_g(tau, x, one));
        let bottom = s.road_inner(&trace, |x| d * pair.d_y_g(tau, x, zero));
        let mismatch: Vec<T> = s.u.iter().zip(&trace).map(|(&u, &v)| u - v).collect();
        let exchange = s.road_inner(&mismatch, |x| alpha * pair.g(tau, x, zero));
        field_rate.push(bulk - top + bottom + exchange);
        let road_bulk = s.road_inner(&s.u, |x| pair.dt_h(tau, x) + road_d * pair.lap_h(tau, x));
        let road_exchange = s.road_inner(&mismatch, |x| -alpha * pair.h(tau, x));
        road_rate.push(road_bulk + road_exchange);
        times.push(tau);
    }
    let last = &used[used.len() - 1];
    let lhs_f = last.field_inner(|x, y| pair.g(t, x, y)) - first.field_inner(|x, y| pair.g(zero, x, y));
    let lhs_r = last.road_inner(&last.u, |x| pair.h(t, x)) - first.road_inner(&first.u, |x| pair.h(zero, x));
    Ok((lhs_f - trapezoid(&times, &field_rate), lhs_r - trapezoid(&times, &road_rate)))
}

/// Terms of the duality identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityReport<T> {
    /// `int_0^T (<v, phi> + <u, psi>) dt`.
    pub source_integral: T,
    /// `<v0, G(0)> + <u0, H(0)>`.
    pub initial_pairing: T,
    pub residual: T,
}

/// Defect of `int_0^T (<v,phi> + <u,psi>) - <v0,G(0)> - <u0,H(0)>`, where
/// `(G, H)` solves the backward dual problem with sources `(phi, psi)` and
/// zero final data. The dual is obtained by solving the forward sourced
/// system with reversed sources and reading it backwards. `snapshots` sets
/// the time quadrature resolution.
pub fn duality_check<T: Scalar>(
    v0: impl Fn(&[T], T) -> T,
    u0: impl Fn(&[T]) -> T,
    sources: &dyn Source<T>,
    horizon: T,
    params: PdeParams<T>,
    snapshots: usize,
) -> Result<DualityReport<T>> {
    let mut dual = init_pde_unchecked(|_, _| T::zero(), |_| T::zero(), params.clone())?;
    let reversed = Reversed { inner: sources, horizon };
    solve_with_source(&mut dual, horizon, &[], Some(&reversed))?;

    let mut primal = init_pde_unchecked(v0, u0, params)?;
    let initial = primal.clone();
    let snaps = solve_uniform(&mut primal, horizon, snapshots, None)?;
    let times: Vec<T> = snaps.iter().map(|s| s.time).collect();
    let rates: Vec<T> = snaps
        .iter()
        .map(|s| {
            let tau = s.time;
            s.field_inner(|x, y| sources.field(tau, x, y)) + s.road_inner(&s.u, |x| sources.road(tau, x))
        })
        .collect();
    let source_integral = trapezoid(&times, &rates);
    let cell = initial.params.hx().powi(initial.params.p as i32 - 1);
    let initial_pairing = cell
        * (initial.params.hy() * initial.v.iter().zip(&dual.v).map(|(&a, &b)| a * b).sum::<T>()
            + initial.u.iter().zip(&dual.u).map(|(&a, &b)| a * b).sum::<T>());
    Ok(DualityReport { source_integral, initial_pairing, residual: source_integral - initial_pairing })
}

/// Compactly supported bump members `cos(2 pi k.x + phase) y^2 (1-y)^2 cos(r pi y)`
/// for direction `q` (1-based; `q = p` is the y direction), ordered by
/// increasing `|k| + r`.
pub fn bump_family<T: Scalar>(p: usize, q: usize, size: usize) -> Result<Vec<FieldMode<T>>> {
    if q == 0 || q > p {
        return Err(Error::InvalidParameter(format!("direction q must lie in 1..={p}, got {q}")));
    }
    let mut members: Vec<(usize, usize, usize, FieldMode<T>)> = Vec::new();
    let axis = if q < p { q - 1 } else { 0 };
    let kmin = if q < p { 1 } else { 0 };
    for kmag in kmin..kmin + size.max(1) {
        for r in 0..size.max(1) {
            for (ph, phase) in [T::zero(), T::FRAC_PI_2()].into_iter().enumerate() {
                if kmag == 0 && ph == 1 {
                    continue;
                }
                let mut k = vec![0; p - 1];
                k[axis] = kmag as i32;
                let mode = FieldMode { wave: XWave { amp: T::one(), k, phase }, profile: YProfile::Bump { r: r as u32 } };
                members.push((kmag + r, kmag, r * 2 + ph, mode));
            }
        }
    }
    members.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    Ok(members.into_iter().take(size).map(|m| m.3).collect())
}

/// Lower bounds on the energy `E_q(v)` from a finite family of compact
/// bumps `G_i`.
///
/// `members[i]` is the best multiple of the single member,
/// `1/2 int <v, d_q G_i>^2 / ||G_i||^2 dt`; `value` is the best
/// combination `sum_i a_i(t) G_i` over the span, `1/2 int A^T Gram^{-1} A dt`,
/// which dominates every member. `<v, d_q G>` is computed exactly for the
/// piecewise-constant reconstruction of `v`, so constants give zero.
/// Time integrals use the trapezoid rule on the snapshots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyEstimate<T> {
    pub value: Option<T>,
    pub best_member: Option<usize>,
    pub members: Vec<T>,
}

impl<T: Scalar> EnergyEstimate<T> {
    pub fn best_single(&self) -> Option<T> {
        self.best_member.map(|k| self.members[k])
    }
}

impl<T: Scalar> PdeState<T> {
    /// `<v, d_q g>` for the piecewise-constant reconstruction of `v`.
    fn pair_derivative(&self, g: &FieldMode<T>, q: usize) -> T {
        let p = self.params.p;
        let nx = self.params.x_cells();
        let (hx, hy) = (self.params.hx(), self.params.hy());
        let half = T::of(0.5);
        let mut acc = T::zero();
        for xlin in 0..nx {
            let x = self.x_center(xlin);
            for j in 0..self.params.m {
                let y = self.y_center(j);
                let jump = if q == p {
                    (g.value(&x, y + half * hy) - g.value(&x, y - half * hy)) * hx.powi(p as i32 - 1)
                } else {
                    let mut xr = x.clone();
                    let mut xl = x.clone();
                    xr[q - 1] = xr[q - 1] + half * hx;
                    xl[q - 1] = xl[q - 1] - half * hx;
                    (g.value(&xr, y) - g.value(&xl, y)) * hx.powi(p as i32 - 2) * hy
                };
                acc = acc + self.v[j * nx + xlin] * jump;
            }
        }
        acc
    }
}

fn cholesky_solve<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<T>();
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<T>()) / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<T>()) / l[i][i];
    }
    Some(x)
}

pub fn energy_functional<T: Scalar>(snapshots: &[PdeState<T>], q: usize, family_size: usize) -> Result<EnergyEstimate<T>> {
    let first = snapshots.first().ok_or_else(|| Error::InvalidParameter("no snapshots".into()))?;
    let p = first.params.p;
    let family = bump_family::<T>(p, q, family_size)?;
    if family.is_empty() {
        return Ok(EnergyEstimate { value: None, best_member: None, members: Vec::new() });
    }
    let n = family.len();
    let ones = PdeState { v: vec![T::one(); first.v.len()], ..first.clone() };
    let gram: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| ones.field_inner(|x, y| family[i].value(x, y) * family[j].value(x, y))).collect())
        .collect();
    let times: Vec<T> = snapshots.iter().map(|s| s.time).collect();
    let pairings: Vec<Vec<T>> = snapshots.iter().map(|s| family.iter().map(|g| s.pair_derivative(g, q)).collect()).collect();
    let half = T::of(0.5);
    let members: Vec<T> = (0..n)
        .map(|i| {
            let rate: Vec<T> = pairings.iter().map(|a| half * a[i] * a[i] / gram[i][i]).collect();
            trapezoid(&times, &rate)
        })
        .collect();
    let span_rate: Vec<T> = pairings
        .iter()
        .map(|a| {
            cholesky_solve(&gram, a)
                .map(|c| half * c.iter().zip(a).map(|(&ci, &ai)| ci * ai).sum::<T>())
                .unwrap_or(T::zero())
        })
        .collect();
    let best = members.iter().enumerate().fold(0, |b, (k, &v)| if v > members[b] { k } else { b });
    let span = trapezoid(&times, &span_rate).max(members[best]);
    Ok(EnergyEstimate { value: Some(span), best_member: Some(best), members })
}

/// Time factor used by the duality sources: a bump vanishing at both ends.
pub fn source_time_factor<T: Scalar>(horizon: T) -> TimeFactor<T> {
    TimeFactor::bump(horizon)
}
