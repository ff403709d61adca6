//! Empirical measures, local box averages, discrete difference operators and
//! the exact path evaluation of the Dynkin martingales.
//!
//! Every observable here is a linear or quadratic function of the
//! configuration with static per-site weights times a time factor, so along a
//! piecewise-constant path all time integrals reduce to per-interval sums of
//! antiderivatives. The trackers keep those sums incrementally, touching only
//! the O(p) sites an event changes.

use serde::Serialize;

use crate::dynamics::{Configuration, Event, ModelParams, Touched, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeom;
use crate::scalar::Scalar;
use crate::stats::MeanStderr;
use crate::testfn::{FieldMode, RoadMode, TestFunctionPair, TimeFactor};

/// `<pi_field, G(t)> = N^{-p} sum eta(s) G(t, s/N)`.
pub fn pair_field<T: Scalar>(config: &Configuration, pair: &TestFunctionPair<T>, t: T, geom: &LatticeGeom) -> T {
    let gt = pair.g_time.value(t);
    field_weights(geom, &pair.g_space)
        .iter()
        .zip(&config.eta)
        .filter(|(_, &e)| e == 1)
        .map(|(&w, _)| w)
        .sum::<T>()
        * gt
}

/// `<pi_road, H(t)> = N^{-(p-1)} sum xi(i) H(t, i/N)`.
pub fn pair_road<T: Scalar>(config: &Configuration, pair: &TestFunctionPair<T>, t: T, geom: &LatticeGeom) -> T {
    let ht = pair.h_time.value(t);
    road_weights(geom, &pair.h_space)
        .iter()
        .zip(&config.xi)
        .filter(|(_, &e)| e == 1)
        .map(|(&w, _)| w)
        .sum::<T>()
        * ht
}

fn field_point<T: Scalar>(geom: &LatticeGeom, s: usize) -> (Vec<T>, T) {
    let m = geom.site_to_macro::<T>(s).expect("bulk index in range");
    (m.x, m.y)
}

fn road_point<T: Scalar>(geom: &LatticeGeom, i: usize) -> Vec<T> {
    geom.road_to_macro::<T>(i).expect("road index in range")
}

fn field_weights<T: Scalar>(geom: &LatticeGeom, mode: &FieldMode<T>) -> Vec<T> {
    let scale = T::of_usize(geom.n()).powi(-(geom.p() as i32));
    (0..geom.bulk_len())
        .map(|s| {
            let (x, y) = field_point::<T>(geom, s);
            mode.value(&x, y) * scale
        })
        .collect()
}

fn road_weights<T: Scalar>(geom: &LatticeGeom, mode: &RoadMode<T>) -> Vec<T> {
    let scale = T::of_usize(geom.n()).powi(-(geom.p() as i32 - 1));
    (0..geom.road_len()).map(|i| mode.value(&road_point::<T>(geom, i)) * scale).collect()
}

/// Which boundary layer a replacement estimate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Upper,
    Lower,
}

impl Boundary {
    pub fn name(&self) -> &'static str {
        match self {
            Boundary::Upper => "upper",
            Boundary::Lower => "lower",
        }
    }
}

fn box_radius(n: usize, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!("box size eps must lie in (0, 1/2], got {eps}")));
    }
    Ok((eps * n as f64 + 1e-9).floor() as usize)
}

/// Box normalisation `[(2 floor(eps N) + 1)^{p-1} (floor(eps N) + 1)]^{-1}`.
pub fn box_normalization(geom: &LatticeGeom, eps: f64) -> Result<f64> {
    let k = box_radius(geom.n(), eps)?;
    Ok(1.0 / (((2 * k + 1) as f64).powi(geom.p() as i32 - 1) * (k + 1) as f64))
}

/// Bulk sites of the box `bulk ∩ (s + [-eps N, eps N]^p)` around a boundary
/// site, sorted and without repetition.
pub fn box_sites(geom: &LatticeGeom, s: usize, eps: f64) -> Result<Vec<usize>> {
    geom.check_bulk(s)?;
    let n = geom.n();
    let (xlin, j) = geom.split(s);
    if j != 1 && j != n - 1 {
        return Err(Error::OutsideDomain(s));
    }
    let k = box_radius(n, eps)?;
    let mut xs = vec![xlin];
    for q in 0..geom.p() - 1 {
        let mut next = Vec::with_capacity(xs.len() * (2 * k + 1));
        for &x0 in &xs {
            next.push(x0);
            let (mut fw, mut bw) = (x0, x0);
            for _ in 0..k {
                fw = geom.shift_x(fw, q, true);
                bw = geom.shift_x(bw, q, false);
                next.push(fw);
                next.push(bw);
            }
        }
        next.sort_unstable();
        next.dedup();
        xs = next;
    }
    let jlo = j.saturating_sub(k).max(1);
    let jhi = (j + k).min(n - 1);
    let mut out: Vec<usize> = (jlo..=jhi).flat_map(|jj| xs.iter().map(move |&x| geom.join(x, jj))).collect();
    out.sort_unstable();
    Ok(out)
}

/// `eta^{eps N}(s)`: occupation fraction of the box around boundary site `s`.
pub fn box_average(config: &Configuration, geom: &LatticeGeom, s: usize, eps: f64) -> Result<f64> {
    let sites = box_sites(geom, s, eps)?;
    let occ: usize = sites.iter().map(|&k| config.eta[k] as usize).sum();
    Ok(occ as f64 / sites.len() as f64)
}

fn x_position<T: Scalar>(geom: &LatticeGeom, xlin: usize) -> Vec<T> {
    let n = T::of_usize(geom.n());
    geom.x_coords(xlin).into_iter().map(|c| T::of_usize(c) / n).collect()
}

/// `Delta_x^N f` at bulk site `s` for a spatial function `f(x, y)`.
pub fn discrete_laplacian_x<T: Scalar>(f: impl Fn(&[T], T) -> T, geom: &LatticeGeom, s: usize) -> Result<T> {
    geom.check_bulk(s)?;
    let (xlin, j) = geom.split(s);
    let n = T::of_usize(geom.n());
    let y = T::of_usize(j) / n;
    let centre = f(&x_position(geom, xlin), y);
    let mut acc = T::zero();
    for q in 0..geom.p() - 1 {
        let fw = f(&x_position(geom, geom.shift_x(xlin, q, true)), y);
        let bw = f(&x_position(geom, geom.shift_x(xlin, q, false)), y);
        acc = acc + fw - T::of(2.0) * centre + bw;
    }
    Ok(acc * n * n)
}

/// `Delta_x^N h` at road site `i` for a road function `h(x)`.
pub fn discrete_laplacian_road<T: Scalar>(h: impl Fn(&[T]) -> T, geom: &LatticeGeom, i: usize) -> Result<T> {
    geom.check_road(i)?;
    discrete_laplacian_x(|x: &[T], _| h(x), geom, i)
}

/// `partial_yy^N f` at an interior site (not in the upper or lower layer).
pub fn discrete_dyy<T: Scalar>(f: impl Fn(&[T], T) -> T, geom: &LatticeGeom, s: usize) -> Result<T> {
    geom.check_bulk(s)?;
    let (xlin, j) = geom.split(s);
    if j == 1 || j == geom.n() - 1 {
        return Err(Error::OutsideDomain(s));
    }
    let n = T::of_usize(geom.n());
    let x = x_position::<T>(geom, xlin);
    let at = |jj: usize| f(&x, T::of_usize(jj) / n);
    Ok((at(j + 1) - T::of(2.0) * at(j) + at(j - 1)) * n * n)
}

/// One-sided `partial_y^N f` at a boundary-layer site: forward difference on
/// the lower layer, backward difference on the upper layer.
pub fn discrete_dy<T: Scalar>(f: impl Fn(&[T], T) -> T, geom: &LatticeGeom, s: usize) -> Result<T> {
    geom.check_bulk(s)?;
    let (xlin, j) = geom.split(s);
    let n = T::of_usize(geom.n());
    let x = x_position::<T>(geom, xlin);
    let at = |jj: usize| f(&x, T::of_usize(jj) / n);
    if j == 1 {
        Ok((at(2) - at(1)) * n)
    } else if j == geom.n() - 1 {
        Ok((at(j) - at(j - 1)) * n)
    } else {
        Err(Error::OutsideDomain(s))
    }
}

/// Martingale and quadratic-variation values at the evaluation times.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MartingaleSeries<T> {
    pub times: Vec<T>,
    pub field: Vec<T>,
    pub road: Vec<T>,
    /// `int_0^t B^field ds`.
    pub qv_field: Vec<T>,
    /// `int_0^t B^road ds`.
    pub qv_road: Vec<T>,
}

impl<T: Scalar> MartingaleSeries<T> {
    pub fn total(&self, k: usize) -> T {
        self.field[k] + self.road[k]
    }

    pub fn qv_total(&self, k: usize) -> T {
        self.qv_field[k] + self.qv_road[k]
    }
}

/// Static weights turning `(eta, xi)` into the pairings, the compensators and
/// the carré du champ for a fixed test-function pair.
///
/// With `G = g(t) phi(x, y)` and `H = h(t) psi(x)`:
/// pairing `F = sum w_s eta_s`, compensator `g(t) * (sum c_s eta_s + sum c'_i xi_i + c_0)`,
/// and `B = g^2 Q^field + h^2 Q^road`.
#[derive(Clone, Debug)]
pub struct MartingaleWeights<T> {
    geom: LatticeGeom,
    b: T,
    g_time: TimeFactor<T>,
    h_time: TimeFactor<T>,
    field_w: Vec<T>,
    field_eta: Vec<T>,
    field_xi: Vec<T>,
    field_const: T,
    road_w: Vec<T>,
    road_xi: Vec<T>,
    road_eta: Vec<T>,
    qf_edge: Vec<T>,
    qf_exchange: Vec<T>,
    qf_reservoir: Vec<T>,
    qr_edge: Vec<T>,
    qr_exchange: Vec<T>,
    road_incident: Vec<Vec<u32>>,
}

impl<T: Scalar> MartingaleWeights<T> {
    pub fn new(geom: &LatticeGeom, model: &ModelParams, pair: &TestFunctionPair<T>) -> Result<Self> {
        model.validate()?;
        let p = geom.p() as i32;
        let n = T::of_usize(geom.n());
        let layer = geom.layer_len();
        let (d, road_d, alpha, b) = (T::of(model.d), T::of(model.road_d), T::of(model.alpha), T::of(model.b));
        let np = n.powi(-p);
        let np1 = n.powi(-(p - 1));
        let phi = |x: &[T], y: T| pair.g_space.value(x, y);
        let psi = |x: &[T]| pair.h_space.value(x);

        let field_w = field_weights(geom, &pair.g_space);
        let road_w = road_weights(geom, &pair.h_space);

        let mut field_eta = vec![T::zero(); geom.bulk_len()];
        for (s, c) in field_eta.iter_mut().enumerate() {
            let mut acc = d * discrete_laplacian_x(phi, geom, s)? * np;
            let j = geom.layer_of(s);
            if j == 1 {
                acc = acc + d * discrete_dy(phi, geom, s)? * np1;
            } else if j == geom.n() - 1 {
                acc = acc - d * discrete_dy(phi, geom, s)? * np1;
            } else {
                acc = acc + d * discrete_dyy(phi, geom, s)? * np;
            }
            *c = acc;
        }
        let lower_phi: Vec<T> = (0..layer).map(|i| field_w[i] / np).collect();
        let upper = geom.upper_sites();
        let mut field_xi = vec![T::zero(); layer];
        for i in 0..layer {
            field_eta[i] = field_eta[i] - alpha * np1 * lower_phi[i];
            field_xi[i] = alpha * np1 * lower_phi[i];
        }
        let mut field_const = T::zero();
        for s in upper.clone() {
            let phi_s = field_w[s] / np;
            field_eta[s] = field_eta[s] - np * phi_s;
            field_const = field_const + b * np * phi_s;
        }

        let mut road_xi = vec![T::zero(); layer];
        let mut road_eta = vec![T::zero(); layer];
        for i in 0..layer {
            let psi_i = psi(&road_point::<T>(geom, i));
            road_xi[i] = np1 * (road_d * discrete_laplacian_road(psi, geom, i)? - alpha * psi_i);
            road_eta[i] = np1 * alpha * psi_i;
        }

        let two_p = n.powi(-2 * p);
        let qf_edge: Vec<T> = geom
            .field_edges()
            .iter()
            .map(|&(a, c)| {
                let diff = (field_w[a as usize] - field_w[c as usize]) / np * n;
                d * two_p * diff * diff
            })
            .collect();
        let qf_exchange: Vec<T> =
            lower_phi.iter().map(|&v| alpha * n.powi(-(2 * p - 1)) * v * v).collect();
        let qf_reservoir: Vec<T> = upper
            .map(|s| {
                let v = field_w[s] / np;
                two_p * v * v
            })
            .collect();
        let two_p1 = n.powi(-2 * (p - 1));
        let qr_edge: Vec<T> = geom
            .road_edges()
            .iter()
            .map(|&(a, c)| {
                let diff = (road_w[a as usize] - road_w[c as usize]) / np1 * n;
                road_d * two_p1 * diff * diff
            })
            .collect();
        let qr_exchange: Vec<T> = road_w.iter().map(|&v| alpha * two_p1 * (v / np1) * (v / np1)).collect();

        let mut road_incident = vec![Vec::new(); layer];
        for (e, &(a, c)) in geom.road_edges().iter().enumerate() {
            road_incident[a as usize].push(e as u32);
            road_incident[c as usize].push(e as u32);
        }

        Ok(MartingaleWeights {
            geom: geom.clone(),
            b,
            g_time: pair.g_time.clone(),
            h_time: pair.h_time.clone(),
            field_w,
            field_eta,
            field_xi,
            field_const,
            road_w,
            road_xi,
            road_eta,
            qf_edge,
            qf_exchange,
            qf_reservoir,
            qr_edge,
            qr_exchange,
            road_incident,
        })
    }

    pub fn geometry(&self) -> &LatticeGeom {
        &self.geom
    }

    /// `[F, C^field, R, C^road, Q^field, Q^road]` summed over the whole
    /// configuration (time factors excluded).
    pub fn evaluate(&self, c: &Configuration) -> [T; 6] {
        let eta = |s: usize| T::of(c.eta[s] as f64);
        let xi = |i: usize| T::of(c.xi[i] as f64);
        let mut out = [T::zero(); 6];
        for s in 0..self.geom.bulk_len() {
            out[0] = out[0] + self.field_w[s] * eta(s);
            out[1] = out[1] + self.field_eta[s] * eta(s);
        }
        out[1] = out[1] + self.field_const;
        for i in 0..self.geom.road_len() {
            out[1] = out[1] + self.field_xi[i] * xi(i);
            out[2] = out[2] + self.road_w[i] * xi(i);
            out[3] = out[3] + self.road_xi[i] * xi(i) + self.road_eta[i] * eta(i);
            let mismatch = (eta(i) - xi(i)).powi(2);
            out[4] = out[4] + self.qf_exchange[i] * mismatch;
            out[5] = out[5] + self.qr_exchange[i] * mismatch;
        }
        for (e, &(a, b)) in self.geom.field_edges().iter().enumerate() {
            out[4] = out[4] + self.qf_edge[e] * (eta(a as usize) - eta(b as usize)).powi(2);
        }
        for (k, s) in self.geom.upper_sites().enumerate() {
            out[4] = out[4] + self.qf_reservoir[k] * self.reservoir_rate(eta(s));
        }
        for (e, &(a, b)) in self.geom.road_edges().iter().enumerate() {
            out[5] = out[5] + self.qr_edge[e] * (xi(a as usize) - xi(b as usize)).powi(2);
        }
        out
    }

    fn reservoir_rate(&self, eta: T) -> T {
        self.b * (T::one() - eta) + (T::one() - self.b) * eta
    }

    /// Contribution of the terms that involve the touched sites.
    fn local(&self, c: &Configuration, touched: Touched) -> [T; 6] {
        let eta = |s: usize| T::of(c.eta[s] as f64);
        let xi = |i: usize| T::of(c.xi[i] as f64);
        let layer = self.geom.layer_len();
        let upper_start = self.geom.upper_sites().start;
        let mut out = [T::zero(); 6];
        let exchange = |out: &mut [T; 6], i: usize| {
            let mismatch = (eta(i) - xi(i)).powi(2);
            out[4] = out[4] + self.qf_exchange[i] * mismatch;
            out[5] = out[5] + self.qr_exchange[i] * mismatch;
        };
        let mut buf = [0usize; 2];
        let (etas, xis): (&[usize], &[usize]) = match touched {
            Touched::Eta1(a) => {
                buf[0] = a;
                (&buf[..1], &[])
            }
            Touched::Eta2(a, b) => {
                buf = [a, b];
                (&buf[..], &[])
            }
            Touched::Xi1(a) => {
                buf[0] = a;
                (&[], &buf[..1])
            }
            Touched::Xi2(a, b) => {
                buf = [a, b];
                (&[], &buf[..])
            }
        };
        for (k, &s) in etas.iter().enumerate() {
            out[0] = out[0] + self.field_w[s] * eta(s);
            out[1] = out[1] + self.field_eta[s] * eta(s);
            if s < layer {
                out[3] = out[3] + self.road_eta[s] * eta(s);
                exchange(&mut out, s);
            }
            if s >= upper_start {
                out[4] = out[4] + self.qf_reservoir[s - upper_start] * self.reservoir_rate(eta(s));
            }
            for &e in self.geom.incident_edges(s) {
                let (a, b) = self.geom.field_edges()[e as usize];
                let other = if a as usize == s { b as usize } else { a as usize };
                if k == 1 && other == etas[0] {
                    continue;
                }
                out[4] = out[4] + self.qf_edge[e as usize] * (eta(a as usize) - eta(b as usize)).powi(2);
            }
        }
        for (k, &i) in xis.iter().enumerate() {
            out[1] = out[1] + self.field_xi[i] * xi(i);
            out[2] = out[2] + self.road_w[i] * xi(i);
            out[3] = out[3] + self.road_xi[i] * xi(i);
            exchange(&mut out, i);
            for &e in &self.road_incident[i] {
                let (a, b) = self.geom.road_edges()[e as usize];
                let other = if a as usize == i { b as usize } else { a as usize };
                if k == 1 && other == xis[0] {
                    continue;
                }
                out[5] = out[5] + self.qr_edge[e as usize] * (xi(a as usize) - xi(b as usize)).powi(2);
            }
        }
        out
    }
}

/// Streams a path and evaluates `M^field`, `M^road` and the integrated
/// quadratic variations at a sorted list of times.
pub struct MartingaleTracker<'w, T> {
    w: &'w MartingaleWeights<T>,
    config: Configuration,
    state: [T; 6],
    start: [T; 2],
    drift: [T; 2],
    qv: [T; 2],
    last: f64,
    times: Vec<f64>,
    next: usize,
    series: MartingaleSeries<T>,
}

impl<'w, T: Scalar> MartingaleTracker<'w, T> {
    pub fn new(w: &'w MartingaleWeights<T>, init: &Configuration, times: &[f64]) -> Result<Self> {
        init.validate(&w.geom)?;
        if times.windows(2).any(|p| p[1] < p[0]) || times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::InvalidParameter("evaluation times must be sorted and nonnegative".into()));
        }
        let state = w.evaluate(init);
        let zero = T::zero();
        let start = [w.g_time.value(zero) * state[0], w.h_time.value(zero) * state[2]];
        Ok(MartingaleTracker {
            w,
            config: init.clone(),
            state,
            start,
            drift: [T::zero(); 2],
            qv: [T::zero(); 2],
            last: 0.0,
            times: times.to_vec(),
            next: 0,
            series: MartingaleSeries::default(),
        })
    }

    /// Integral contributions over `[last, t]` with the current state.
    fn increments(&self, t: f64) -> ([T; 2], [T; 2]) {
        let (a, b) = (T::of(self.last), T::of(t));
        let w = self.w;
        let s = &self.state;
        let drift_f = s[0] * (w.g_time.value(b) - w.g_time.value(a)) + s[1] * w.g_time.integral(a, b);
        let drift_r = s[2] * (w.h_time.value(b) - w.h_time.value(a)) + s[3] * w.h_time.integral(a, b);
        let qv_f = s[4] * w.g_time.square_integral(a, b);
        let qv_r = s[5] * w.h_time.square_integral(a, b);
        ([drift_f, drift_r], [qv_f, qv_r])
    }

    fn record_until(&mut self, t: f64, inclusive: bool) {
        while self.next < self.times.len() {
            let tau = self.times[self.next];
            if tau > t || (!inclusive && tau == t) {
                break;
            }
            let (drift, qv) = self.increments(tau);
            let tt = T::of(tau);
            let w = self.w;
            let mf = w.g_time.value(tt) * self.state[0] - self.start[0] - (self.drift[0] + drift[0]);
            let mr = w.h_time.value(tt) * self.state[2] - self.start[1] - (self.drift[1] + drift[1]);
            self.series.times.push(tt);
            self.series.field.push(mf);
            self.series.road.push(mr);
            self.series.qv_field.push(self.qv[0] + qv[0]);
            self.series.qv_road.push(self.qv[1] + qv[1]);
            self.next += 1;
        }
    }

    /// Feed an effective event occurring at time `t`.
    pub fn on_event(&mut self, t: f64, ev: &Event) {
        self.record_until(t, false);
        let (drift, qv) = self.increments(t);
        for k in 0..2 {
            self.drift[k] = self.drift[k] + drift[k];
            self.qv[k] = self.qv[k] + qv[k];
        }
        self.last = t;
        let touched = touched_by(ev, &self.w.geom);
        let before = self.w.local(&self.config, touched);
        ev.apply(&mut self.config, &self.w.geom);
        let after = self.w.local(&self.config, touched);
        for k in 0..6 {
            self.state[k] = self.state[k] + after[k] - before[k];
        }
    }

    /// Close the path at its horizon and return the series.
    pub fn finish(mut self, horizon: f64) -> Result<MartingaleSeries<T>> {
        if let Some(&t) = self.times.last() {
            if t > horizon {
                return Err(Error::BeyondHorizon { requested: t, horizon });
            }
        }
        self.record_until(horizon, true);
        Ok(self.series)
    }

    /// Current configuration (after all events fed so far).
    pub fn configuration(&self) -> &Configuration {
        &self.config
    }
}

fn touched_by(ev: &Event, geom: &LatticeGeom) -> Touched {
    match *ev {
        Event::FieldSwap { edge } => {
            let (a, b) = geom.field_edges()[edge as usize];
            Touched::Eta2(a as usize, b as usize)
        }
        Event::RoadSwap { edge } => {
            let (a, b) = geom.road_edges()[edge as usize];
            Touched::Xi2(a as usize, b as usize)
        }
        Event::RobinFlip { site } => Touched::Eta1(site as usize),
        Event::ReactionFlip { site } => Touched::Xi1(site as usize),
        Event::ReservoirFlip { site } => Touched::Eta1(geom.upper_sites().start + site as usize),
    }
}

/// `M^field`, `M^road` and `int B` along a recorded trajectory.
pub fn martingale_eval<T: Scalar>(
    trajectory: &TrajectoryRecord,
    model: &ModelParams,
    geom: &LatticeGeom,
    pair: &TestFunctionPair<T>,
    times: &[f64],
) -> Result<MartingaleSeries<T>> {
    let w = MartingaleWeights::new(geom, model, pair)?;
    let mut tracker = MartingaleTracker::new(&w, &trajectory.initial, times)?;
    for (t, ev) in &trajectory.events {
        tracker.on_event(*t, ev);
    }
    tracker.finish(trajectory.final_time)
}

/// Integrated quadratic variation `(int B^field, int B^road)` at each time.
pub fn quadratic_variation_eval<T: Scalar>(
    trajectory: &TrajectoryRecord,
    model: &ModelParams,
    geom: &LatticeGeom,
    pair: &TestFunctionPair<T>,
    times: &[f64],
) -> Result<(Vec<T>, Vec<T>)> {
    let s = martingale_eval(trajectory, model, geom, pair, times)?;
    Ok((s.qv_field, s.qv_road))
}

/// Linear weights `w` with `N^{-(p-1)} sum_{boundary} phi(s) (eta^{eps N}(s) - eta(s)) = sum_k w_k eta_k`.
#[derive(Clone, Debug)]
pub struct ReplacementWeights {
    geom: LatticeGeom,
    time: TimeFactor<f64>,
    weights: Vec<f64>,
}

impl ReplacementWeights {
    pub fn new(geom: &LatticeGeom, g: &FieldMode<f64>, time: TimeFactor<f64>, eps: f64, boundary: Boundary) -> Result<Self> {
        let layer = match boundary {
            Boundary::Lower => geom.lower_sites(),
            Boundary::Upper => geom.upper_sites(),
        };
        let scale = (geom.n() as f64).powi(-(geom.p() as i32 - 1));
        let mut weights = vec![0.0; geom.bulk_len()];
        for s in layer {
            let (x, y) = field_point::<f64>(geom, s);
            let phi = g.value(&x, y) * scale;
            let sites = box_sites(geom, s, eps)?;
            let share = phi / sites.len() as f64;
            for k in sites {
                weights[k] += share;
            }
            weights[s] -= phi;
        }
        Ok(ReplacementWeights { geom: geom.clone(), time, weights })
    }

    pub fn value(&self, c: &Configuration) -> f64 {
        self.weights.iter().zip(&c.eta).map(|(&w, &e)| w * e as f64).sum()
    }
}

/// Streams a path and accumulates `int_0^t g(s) R(eta_s) ds`.
pub struct ReplacementTracker<'w> {
    w: &'w ReplacementWeights,
    value: f64,
    integral: f64,
    last: f64,
}

impl<'w> ReplacementTracker<'w> {
    pub fn new(w: &'w ReplacementWeights, init: &Configuration) -> Result<Self> {
        init.validate(&w.geom)?;
        Ok(ReplacementTracker { w, value: w.value(init), integral: 0.0, last: 0.0 })
    }

    /// Feed an event at time `t`; `after` is the configuration once the
    /// event has been applied.
    pub fn on_event(&mut self, t: f64, ev: &Event, after: &Configuration) {
        self.integral += self.value * self.w.time.integral(self.last, t);
        self.last = t;
        match touched_by(ev, &self.w.geom) {
            Touched::Eta1(s) => {
                let sign = if after.eta[s] == 1 { 1.0 } else { -1.0 };
                self.value += sign * self.w.weights[s];
            }
            Touched::Eta2(a, b) => {
                let sign = if after.eta[a] == 1 { 1.0 } else { -1.0 };
                self.value += sign * (self.w.weights[a] - self.w.weights[b]);
            }
            Touched::Xi1(_) | Touched::Xi2(..) => {}
        }
    }

    pub fn finish(self, t: f64) -> f64 {
        self.integral + self.value * self.w.time.integral(self.last, t)
    }
}

/// Monte Carlo estimate of `E| int_0^t N^{-(p-1)} sum_{boundary} G (eta^{eps N} - eta) ds |`.
pub fn replacement_diagnostic(
    trajectories: &[TrajectoryRecord],
    geom: &LatticeGeom,
    pair: &TestFunctionPair<f64>,
    eps: f64,
    boundary: Boundary,
    t: f64,
) -> Result<MeanStderr> {
    if trajectories.len() < 2 {
        return Err(Error::InvalidParameter("replacement diagnostic needs at least two trajectories".into()));
    }
    let w = ReplacementWeights::new(geom, &pair.g_space, pair.g_time.clone(), eps, boundary)?;
    let mut values = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        if t > traj.final_time {
            return Err(Error::BeyondHorizon { requested: t, horizon: traj.final_time });
        }
        let mut config = traj.initial.clone();
        let mut tracker = ReplacementTracker::new(&w, &config)?;
        for (te, ev) in traj.events.iter().take_while(|(te, _)| *te <= t) {
            ev.apply(&mut config, geom);
            tracker.on_event(*te, ev, &config);
        }
        values.push(tracker.finish(t).abs());
    }
    Ok(MeanStderr::from_samples(&values))
}

/// Site-to-cell map for coarse-graining configurations.
#[derive(Clone, Debug)]
pub struct CoarseGrid {
    p: usize,
    bins: usize,
    field_cell: Vec<u32>,
    road_cell: Vec<u32>,
    field_count: Vec<usize>,
    road_count: Vec<usize>,
    field_pos: Vec<(Vec<f64>, f64)>,
    road_pos: Vec<Vec<f64>>,
}

/// Occupation fraction per macroscopic cell. Field cells are laid out with
/// the y-cell slowest, then the x-cells row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoarseDensity {
    pub bins: usize,
    pub field: Vec<f64>,
    pub road: Vec<f64>,
}

impl CoarseGrid {
    pub fn new(geom: &LatticeGeom, bins: usize) -> Result<Self> {
        let n = geom.n();
        if bins == 0 || bins > n {
            return Err(Error::InvalidParameter(format!("bins must lie in 1..={n}, got {bins}")));
        }
        let dims = geom.p() - 1;
        let x_cells = bins.pow(dims as u32);
        let cell_x = |xlin: usize| {
            geom.x_coords(xlin).iter().fold(0usize, |acc, &c| acc * bins + c * bins / n)
        };
        let road_cell: Vec<u32> = (0..geom.road_len()).map(|i| cell_x(i) as u32).collect();
        let field_cell: Vec<u32> = (0..geom.bulk_len())
            .map(|s| {
                let (xlin, j) = geom.split(s);
                ((j * bins / n) * x_cells + cell_x(xlin)) as u32
            })
            .collect();
        let mut field_count = vec![0; x_cells * bins];
        for &c in &field_cell {
            field_count[c as usize] += 1;
        }
        let mut road_count = vec![0; x_cells];
        for &c in &road_cell {
            road_count[c as usize] += 1;
        }
        if field_count.contains(&0) || road_count.contains(&0) {
            return Err(Error::InvalidParameter(format!("{bins} bins leave empty cells on a lattice with N = {n}")));
        }
        Ok(CoarseGrid {
            p: geom.p(),
            bins,
            field_cell,
            road_cell,
            field_count,
            road_count,
            field_pos: (0..geom.bulk_len()).map(|s| field_point::<f64>(geom, s)).collect(),
            road_pos: (0..geom.road_len()).map(|i| road_point::<f64>(geom, i)).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn field_cells(&self) -> usize {
        self.field_count.len()
    }

    pub fn road_cells(&self) -> usize {
        self.road_count.len()
    }

    pub fn field_counts(&self) -> &[usize] {
        &self.field_count
    }

    pub fn road_counts(&self) -> &[usize] {
        &self.road_count
    }

    pub fn density(&self, c: &Configuration) -> CoarseDensity {
        let mut field = vec![0.0; self.field_count.len()];
        for (&cell, &e) in self.field_cell.iter().zip(&c.eta) {
            field[cell as usize] += e as f64;
        }
        let mut road = vec![0.0; self.road_count.len()];
        for (&cell, &e) in self.road_cell.iter().zip(&c.xi) {
            road[cell as usize] += e as f64;
        }
        for (v, &k) in field.iter_mut().zip(&self.field_count) {
            *v /= k as f64;
        }
        for (v, &k) in road.iter_mut().zip(&self.road_count) {
            *v /= k as f64;
        }
        CoarseDensity { bins: self.bins, field, road }
    }

    /// Per-cell average of macroscopic profiles sampled at the lattice
    /// positions of the sites in each cell.
    pub fn project(&self, v: impl Fn(&[f64], f64) -> f64, u: impl Fn(&[f64]) -> f64) -> CoarseDensity {
        let mut field = vec![0.0; self.field_count.len()];
        for (s, &cell) in self.field_cell.iter().enumerate() {
            let (x, y) = &self.field_pos[s];
            field[cell as usize] += v(x, *y);
        }
        let mut road = vec![0.0; self.road_count.len()];
        for (i, &cell) in self.road_cell.iter().enumerate() {
            road[cell as usize] += u(&self.road_pos[i]);
        }
        for (f, &k) in field.iter_mut().zip(&self.field_count) {
            *f /= k as f64;
        }
        for (f, &k) in road.iter_mut().zip(&self.road_count) {
            *f /= k as f64;
        }
        CoarseDensity { bins: self.bins, field, road }
    }

    pub fn dimension(&self) -> usize {
        self.p
    }
}

/// Average occupancy per macroscopic cell; cell boundaries at multiples of `1/bins`.
pub fn coarse_density(config: &Configuration, geom: &LatticeGeom, bins: usize) -> Result<CoarseDensity> {
    config.validate(geom)?;
    Ok(CoarseGrid::new(geom, bins)?.density(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_initial, trajectory_rng, Simulator};
    use crate::generator_exact::{GeneratorParts, StateSpace};
    use crate::testfn::XWave;

    fn geom(p: usize, n: usize) -> LatticeGeom {
        LatticeGeom::new(p, n).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let g = geom(2, 6);
        let one = TestFunctionPair::<f64>::constant_field(1.0, 2);
        let full = Configuration::full(&g);
        assert!((pair_field(&full, &one, 0.0, &g) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(pair_field(&Configuration::empty(&g), &one, 0.3, &g), 0.0);
        let pair = TestFunctionPair::<f64>::fourier(vec![1], 1, 0.5, 1.0, 0.0);
        let mut c = Configuration::empty(&g);
        let s = g.index(&crate::Site::new(vec![2], 3)).unwrap();
        c.eta[s] = 1;
        let expect = pair.g(0.2, &[2.0 / 6.0], 0.5) / 36.0;
        assert!((pair_field(&c, &pair, 0.2, &g) - expect).abs() < 1e-15);
        c.xi[4] = 1;
        assert!((pair_road(&c, &pair, 0.0, &g) - (2.0 * std::f64::consts::PI * 4.0 / 6.0).cos() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn box_examples() {
        let g = geom(2, 10);
        assert!((box_normalization(&g, 0.25).unwrap() - 1.0 / 15.0).abs() < 1e-15);
        let s = g.index(&crate::Site::new(vec![0], 1)).unwrap();
        assert_eq!(box_sites(&g, s, 0.25).unwrap().len(), 15);
        let top = g.index(&crate::Site::new(vec![9], 9)).unwrap();
        assert_eq!(box_sites(&g, top, 0.25).unwrap().len(), 15);
        assert_eq!(box_average(&Configuration::full(&g), &g, s, 0.3).unwrap(), 1.0);
        let mut c = Configuration::empty(&g);
        c.eta[s] = 1;
        assert_eq!(box_sites(&g, s, 0.05).unwrap(), vec![s]);
        assert_eq!(box_average(&c, &g, s, 0.05).unwrap(), 1.0);
        let mid = g.index(&crate::Site::new(vec![0], 4)).unwrap();
        assert!(matches!(box_average(&c, &g, mid, 0.1), Err(Error::OutsideDomain(_))));
        assert!(box_average(&c, &g, s, 0.6).is_err());
        assert!(box_average(&c, &g, s, 0.0).is_err());
        // eps = 1/2 wraps the whole torus without double counting
        assert_eq!(box_sites(&g, s, 0.5).unwrap().len(), 10 * 6);
    }

    #[test]
    fn discrete_operator_examples() {
        let g = geom(2, 8);
        let c = |_: &[f64], _: f64| 2.5;
        for s in 0..g.bulk_len() {
            assert_eq!(discrete_laplacian_x(c, &g, s).unwrap(), 0.0);
            let j = g.layer_of(s);
            if j == 1 || j == 7 {
                assert_eq!(discrete_dy(c, &g, s).unwrap(), 0.0);
                assert!(discrete_dyy(c, &g, s).is_err());
            } else {
                assert_eq!(discrete_dyy(c, &g, s).unwrap(), 0.0);
                assert!((discrete_dyy(|x: &[f64], y: f64| x[0] + 3.0 * y - 1.0, &g, s).unwrap()).abs() < 1e-12);
                assert!(discrete_dy(c, &g, s).is_err());
            }
        }
        let n = 8.0;
        let h = |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).cos();
        for i in 0..8 {
            let expect = 2.0 * n * n * ((2.0 * std::f64::consts::PI / n).cos() - 1.0)
                * (2.0 * std::f64::consts::PI * i as f64 / n).cos();
            assert!((discrete_laplacian_road(h, &g, i).unwrap() - expect).abs() < 1e-12);
        }
        let s1 = g.index(&crate::Site::new(vec![3], 1)).unwrap();
        let lin = |_: &[f64], y: f64| 2.0 * y;
        assert!((discrete_dy(lin, &g, s1).unwrap() - 2.0).abs() < 1e-12);
        let s7 = g.index(&crate::Site::new(vec![3], 7)).unwrap();
        assert!((discrete_dy(lin, &g, s7).unwrap() - 2.0).abs() < 1e-12);
    }

    /// Compensator and carré du champ from the weights agree with
    /// `L F` and `L F^2 - 2 F L F` computed by brute force from the generator.
    #[test]
    fn weights_match_generator() {
        let g = geom(2, 3);
        let model = ModelParams::new(0.7, 1.3, 0.9, 0.35).unwrap();
        let space = StateSpace::new(&g).unwrap();
        let gen = GeneratorParts::<f64>::new(&space, &model).unwrap();
        let pair = TestFunctionPair::new(
            TimeFactor::one(),
            FieldMode::cosine(1.2, vec![1], 1),
            TimeFactor::one(),
            XWave { amp: 0.8, k: vec![1], phase: 0.3 },
        );
        let w = MartingaleWeights::new(&g, &model, &pair).unwrap();
        let vals: Vec<[f64; 6]> = (0..space.len()).map(|s| w.evaluate(&space.decode(s))).collect();
        let mut worst = 0.0f64;
        for s in 0..space.len() {
            let (mut lf, mut lr, mut bf, mut br) = (0.0, 0.0, 0.0, 0.0);
            for &(t, rate) in gen.full().row(s) {
                let df = vals[t as usize][0] - vals[s][0];
                let dr = vals[t as usize][2] - vals[s][2];
                lf += rate * df;
                lr += rate * dr;
                bf += rate * df * df;
                br += rate * dr * dr;
            }
            let v = vals[s];
            for (a, b) in [(lf, v[1]), (lr, v[3]), (bf, v[4]), (br, v[5])] {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn incremental_state_matches_full_evaluation() {
        let g = geom(2, 7);
        let model = ModelParams::default();
        let sim = Simulator::new(model, g.clone()).unwrap();
        let pair = TestFunctionPair::<f64>::fourier(vec![1], 1, 1.0, 0.5, 2.0);
        let w = MartingaleWeights::new(&g, &model, &pair).unwrap();
        let mut rng = trajectory_rng(3, 0);
        let init = sample_initial(|_, _| 0.4, |_| 0.6, &g, &mut rng).unwrap();
        let (rec, _) = sim.simulate(&init, 0.05, &[], 1_000_000, &mut rng).unwrap();
        let mut tracker = MartingaleTracker::new(&w, &init, &[]).unwrap();
        for (t, ev) in &rec.events {
            tracker.on_event(*t, ev);
        }
        let full = w.evaluate(tracker.configuration());
        for k in 0..6 {
            assert!((full[k] - tracker.state[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_g_static_path() {
        for (p, n) in [(2, 5), (3, 4)] {
            let g = geom(p, n);
            let b = 0.3;
            let model = ModelParams::new(1.0, 1.0, 1.0, b).unwrap();
            let c = 1.7;
            let pair = TestFunctionPair::constant_field(c, p);
            let rec = TrajectoryRecord { initial: Configuration::full(&g), events: vec![], final_time: 1.0 };
            let times = [0.0, 0.25, 1.0];
            let s = martingale_eval(&rec, &model, &g, &pair, &times).unwrap();
            assert_eq!(s.field[0], 0.0);
            assert_eq!(s.road[0], 0.0);
            for (k, &t) in times.iter().enumerate() {
                let expect = c * t * (1.0 - b) * (n as f64).powi(-(p as i32)) * (n as f64).powi(p as i32 - 1);
                assert!((s.field[k] - expect).abs() < 1e-12);
                assert_eq!(s.road[k], 0.0);
            }
            let one = TestFunctionPair::constant_field(1.0, p);
            let empty = TrajectoryRecord { initial: Configuration::empty(&g), events: vec![], final_time: 1.0 };
            let (qf, qr) = quadratic_variation_eval(&empty, &model, &g, &one, &[0.5]).unwrap();
            let expect = 0.5 * b * (n as f64).powi(-(p as i32 + 1));
            assert!((qf[0] - expect).abs() < 1e-15);
            assert_eq!(qr[0], 0.0);
            let zero = TestFunctionPair::<f64>::zero(p);
            let (qf, qr) = quadratic_variation_eval(&empty, &model, &g, &zero, &[1.0]).unwrap();
            assert_eq!((qf[0], qr[0]), (0.0, 0.0));
        }
    }

    #[test]
    fn beyond_horizon_rejected() {
        let g = geom(2, 4);
        let rec = TrajectoryRecord { initial: Configuration::empty(&g), events: vec![], final_time: 0.1 };
        let pair = TestFunctionPair::<f64>::zero(2);
        let err = martingale_eval(&rec, &ModelParams::default(), &g, &pair, &[0.2]).unwrap_err();
        assert!(matches!(err, Error::BeyondHorizon { .. }));
    }

    #[test]
    fn replacement_trivial_cases() {
        let g = geom(2, 8);
        let pair = TestFunctionPair::constant_field(1.0, 2);
        let frozen = TrajectoryRecord { initial: Configuration::full(&g), events: vec![], final_time: 1.0 };
        let est = replacement_diagnostic(&[frozen.clone(), frozen], &g, &pair, 0.25, Boundary::Upper, 1.0).unwrap();
        assert!(est.mean.abs() < 1e-15);
        let model = ModelParams::default();
        let sim = Simulator::new(model, g.clone()).unwrap();
        let trajs: Vec<_> = (0..3)
            .map(|k| {
                let mut rng = trajectory_rng(9, k);
                let init = sample_initial(|_, _| 0.5, |_| 0.5, &g, &mut rng).unwrap();
                sim.simulate(&init, 0.02, &[], 1_000_000, &mut rng).unwrap().0
            })
            .collect();
        let est = replacement_diagnostic(&trajs, &g, &pair, 0.1, Boundary::Lower, 0.02).unwrap();
        assert_eq!(est.mean, 0.0);
        let est = replacement_diagnostic(&trajs, &g, &pair, 0.25, Boundary::Lower, 0.02).unwrap();
        assert!(est.mean > 0.0);
        assert!(replacement_diagnostic(&trajs[..1], &g, &pair, 0.25, Boundary::Lower, 0.02).is_err());
    }

    #[test]
    fn coarse_density_examples() {
        let g = geom(2, 64);
        let full = coarse_density(&Configuration::full(&g), &g, 8).unwrap();
        assert!(full.field.iter().chain(&full.road).all(|&v| v == 1.0));
        let mut rng = trajectory_rng(11, 0);
        let c = sample_initial(|_, _| 0.5, |_| 0.5, &g, &mut rng).unwrap();
        let grid = CoarseGrid::new(&g, 8).unwrap();
        let d = grid.density(&c);
        for (v, &k) in d.field.iter().zip(grid.field_counts()) {
            assert!((v - 0.5).abs() <= 3.0 * (0.25 / k as f64).sqrt());
        }
        let one = coarse_density(&c, &g, 1).unwrap();
        let (nf, nr) = c.total_particles();
        assert!((one.field[0] - nf as f64 / g.bulk_len() as f64).abs() < 1e-15);
        assert!((one.road[0] - nr as f64 / g.road_len() as f64).abs() < 1e-15);
        assert!(coarse_density(&c, &g, 65).is_err());
        assert_eq!(grid.field_counts().iter().sum::<usize>(), g.bulk_len());
    }
}
