//! Exact continuous-time simulation of the coupled exclusion process.
//!
//! The generator has five parts: field exchange (rate `N^2 d` per bulk edge),
//! road exchange (`N^2 D` per road edge), Robin flips of `eta` on the lower
//! layer (`N alpha (eta - xi)^2`), reaction flips of `xi`
//! (`alpha (eta - xi)^2`) and the upper reservoir (`b` birth, `1 - b` death).
//! Every category has a constant per-item bound, so the process is sampled
//! by uniformization: a Poisson clock at the total bound proposes an item,
//! which is accepted with probability `rate / bound`. All acceptance ratios
//! are in `{0, 1}` except the reservoir, whose ratio is
//! `{b, 1-b} / max(b, 1-b)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeGeom;

/// Default cap on recorded events per trajectory.
pub const DEFAULT_EVENT_CAP: usize = 100_000_000;

/// Physical rates of the microscopic model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Field diffusivity `d`.
    pub d: f64,
    /// Road diffusivity `D`.
    pub road_d: f64,
    /// Exchange rate `alpha`.
    pub alpha: f64,
    /// Reservoir birth probability `b`.
    pub b: f64,
}

impl ModelParams {
    pub fn new(d: f64, road_d: f64, alpha: f64, b: f64) -> Result<Self> {
        let m = ModelParams { d, road_d, alpha, b };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d", self.d), ("D", self.road_d), ("alpha", self.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b = {} must lie in [0,1]", self.b)));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { d: 1.0, road_d: 1.0, alpha: 1.0, b: 0.5 }
    }
}

#[derive(Clone, Debug)]
pub struct SimParams {
    pub model: ModelParams,
    pub geometry: LatticeGeom,
    /// Macroscopic time horizon `T`.
    pub t_end: f64,
    pub seed: u64,
    pub event_cap: usize,
}

impl SimParams {
    pub fn new(model: ModelParams, geometry: LatticeGeom, t_end: f64, seed: u64) -> Result<Self> {
        model.validate()?;
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {t_end} must be >= 0")));
        }
        Ok(SimParams { model, geometry, t_end, seed, event_cap: DEFAULT_EVENT_CAP })
    }

    pub fn with_event_cap(mut self, cap: usize) -> Self {
        self.event_cap = cap;
        self
    }
}

/// Occupation numbers: `eta` over bulk sites, `xi` over road sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub eta: Vec<u8>,
    pub xi: Vec<u8>,
}

impl Configuration {
    pub fn empty(geom: &LatticeGeom) -> Self {
        Configuration { eta: vec![0; geom.bulk_len()], xi: vec![0; geom.road_len()] }
    }

    pub fn full(geom: &LatticeGeom) -> Self {
        Configuration { eta: vec![1; geom.bulk_len()], xi: vec![1; geom.road_len()] }
    }

    pub fn validate(&self, geom: &LatticeGeom) -> Result<()> {
        if self.eta.len() != geom.bulk_len() || self.xi.len() != geom.road_len() {
            return Err(Error::GeometryMismatch(format!(
                "lengths ({}, {}) vs geometry ({}, {})",
                self.eta.len(),
                self.xi.len(),
                geom.bulk_len(),
                geom.road_len()
            )));
        }
        if self.eta.iter().chain(&self.xi).any(|&v| v > 1) {
            return Err(Error::GeometryMismatch("occupation numbers must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Exact popcounts `(n_field, n_road)`.
    pub fn total_particles(&self) -> (usize, usize) {
        let count = |v: &[u8]| v.iter().map(|&b| b as usize).sum();
        (count(&self.eta), count(&self.xi))
    }
}

/// Effective (state-changing) transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    FieldSwap { edge: u32 },
    RoadSwap { edge: u32 },
    /// Flip of `eta` at the lower site above road site `site`.
    RobinFlip { site: u32 },
    /// Flip of `xi` at road site `site`.
    ReactionFlip { site: u32 },
    /// Flip of `eta` at upper site number `site` (offset within the layer).
    ReservoirFlip { site: u32 },
}

impl Event {
    pub fn code(&self) -> u8 {
        match self {
            Event::FieldSwap { .. } => 0,
            Event::RoadSwap { .. } => 1,
            Event::RobinFlip { .. } => 2,
            Event::ReactionFlip { .. } => 3,
            Event::ReservoirFlip { .. } => 4,
        }
    }

    pub fn location(&self) -> u32 {
        match *self {
            Event::FieldSwap { edge } | Event::RoadSwap { edge } => edge,
            Event::RobinFlip { site } | Event::ReactionFlip { site } | Event::ReservoirFlip { site } => {
                site
            }
        }
    }

    pub fn from_code(code: u8, location: u32) -> Option<Event> {
        Some(match code {
            0 => Event::FieldSwap { edge: location },
            1 => Event::RoadSwap { edge: location },
            2 => Event::RobinFlip { site: location },
            3 => Event::ReactionFlip { site: location },
            4 => Event::ReservoirFlip { site: location },
            _ => return None,
        })
    }

    /// Apply to `config`. Returns the bulk sites and road sites whose value
    /// changed, as `(eta_sites, xi_sites)` (at most two entries total).
    pub fn apply(&self, config: &mut Configuration, geom: &LatticeGeom) -> Touched {
        match *self {
            Event::FieldSwap { edge } => {
                let (a, b) = geom.field_edges()[edge as usize];
                config.eta.swap(a as usize, b as usize);
                Touched::Eta2(a as usize, b as usize)
            }
            Event::RoadSwap { edge } => {
                let (a, b) = geom.road_edges()[edge as usize];
                config.xi.swap(a as usize, b as usize);
                Touched::Xi2(a as usize, b as usize)
            }
            Event::RobinFlip { site } => {
                config.eta[site as usize] ^= 1;
                Touched::Eta1(site as usize)
            }
            Event::ReactionFlip { site } => {
                config.xi[site as usize] ^= 1;
                Touched::Xi1(site as usize)
            }
            Event::ReservoirFlip { site } => {
                let s = geom.upper_sites().start + site as usize;
                config.eta[s] ^= 1;
                Touched::Eta1(s)
            }
        }
    }

    /// True if applying the event to `config` is a legal transition
    /// (swaps exchange distinct values, exchange flips need a mismatch).
    pub fn is_enabled(&self, config: &Configuration, geom: &LatticeGeom) -> bool {
        match *self {
            Event::FieldSwap { edge } => geom
                .field_edges()
                .get(edge as usize)
                .is_some_and(|&(a, b)| config.eta[a as usize] != config.eta[b as usize]),
            Event::RoadSwap { edge } => geom
                .road_edges()
                .get(edge as usize)
                .is_some_and(|&(a, b)| config.xi[a as usize] != config.xi[b as usize]),
            Event::RobinFlip { site } | Event::ReactionFlip { site } => {
                (site as usize) < geom.road_len()
                    && config.eta[site as usize] != config.xi[site as usize]
            }
            Event::ReservoirFlip { site } => (site as usize) < geom.layer_len(),
        }
    }
}

/// Sites modified by an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Touched {
    Eta1(usize),
    Eta2(usize, usize),
    Xi1(usize),
    Xi2(usize, usize),
}

/// Per-category Poisson bounds used for uniformization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateBounds {
    pub field_edge: f64,
    pub road_edge: f64,
    pub robin: f64,
    pub reaction: f64,
    pub reservoir: f64,
    /// Category totals in the order field, road, Robin, reaction, reservoir.
    pub category_totals: [f64; 5],
    pub total: f64,
}

pub fn uniformized_rates(model: &ModelParams, geom: &LatticeGeom) -> RateBounds {
    let n = geom.n() as f64;
    let field_edge = n * n * model.d;
    let road_edge = n * n * model.road_d;
    let robin = n * model.alpha;
    let reaction = model.alpha;
    let reservoir = model.b.max(1.0 - model.b);
    let category_totals = [
        field_edge * geom.field_edges().len() as f64,
        road_edge * geom.road_edges().len() as f64,
        robin * geom.road_len() as f64,
        reaction * geom.road_len() as f64,
        reservoir * geom.layer_len() as f64,
    ];
    RateBounds {
        field_edge,
        road_edge,
        robin,
        reaction,
        reservoir,
        category_totals,
        total: category_totals.iter().sum(),
    }
}

/// Simulation time accumulated with Kahan compensation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Clock {
    sum: f64,
    comp: f64,
}

impl Clock {
    pub fn new(t: f64) -> Self {
        Clock { sum: t, comp: 0.0 }
    }

    pub fn now(&self) -> f64 {
        self.sum
    }

    /// Time after adding `dt`, without committing it.
    pub fn peek(&self, dt: f64) -> f64 {
        let y = dt - self.comp;
        self.sum + y
    }

    pub fn advance(&mut self, dt: f64) {
        let y = dt - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Per-trajectory random stream: ChaCha8 keyed by the master seed, with the
/// trajectory index selecting the stream.
pub fn trajectory_rng(master_seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory);
    rng
}

/// Uniformization sampler for a fixed model and geometry.
#[derive(Clone, Debug)]
pub struct Simulator {
    geom: LatticeGeom,
    model: ModelParams,
    bounds: RateBounds,
    cumulative: [f64; 5],
}

/// Outcome of one uniformized proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub time: f64,
    /// `None` for a rejected or state-preserving proposal.
    pub event: Option<Event>,
}

/// Proposal category, in the order of [`RateBounds::category_totals`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Field,
    Road,
    Robin,
    Reaction,
    Reservoir,
}

impl Simulator {
    pub fn new(model: ModelParams, geom: LatticeGeom) -> Result<Self> {
        model.validate()?;
        let bounds = uniformized_rates(&model, &geom);
        let mut cumulative = [0.0; 5];
        let mut acc = 0.0;
        for (c, t) in cumulative.iter_mut().zip(bounds.category_totals) {
            acc += t;
            *c = acc;
        }
        Ok(Simulator { geom, model, bounds, cumulative })
    }

    pub fn from_params(params: &SimParams) -> Result<Self> {
        Simulator::new(params.model, params.geometry.clone())
    }

    pub fn geometry(&self) -> &LatticeGeom {
        &self.geom
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn bounds(&self) -> &RateBounds {
        &self.bounds
    }

    /// Resolve a proposal of item `index` in `category`, with `u` uniform on
    /// [0,1) used for the thinning test. Mutates `config` when accepted.
    pub fn resolve(
        &self,
        config: &mut Configuration,
        category: Category,
        index: usize,
        u: f64,
    ) -> Option<Event> {
        let event = match category {
            Category::Field => {
                let (a, b) = self.geom.field_edges()[index];
                if config.eta[a as usize] == config.eta[b as usize] {
                    return None;
                }
                Event::FieldSwap { edge: index as u32 }
            }
            Category::Road => {
                let (a, b) = self.geom.road_edges()[index];
                if config.xi[a as usize] == config.xi[b as usize] {
                    return None;
                }
                Event::RoadSwap { edge: index as u32 }
            }
            Category::Robin => {
                if config.eta[index] == config.xi[index] {
                    return None;
                }
                Event::RobinFlip { site: index as u32 }
            }
            Category::Reaction => {
                if config.eta[index] == config.xi[index] {
                    return None;
                }
                Event::ReactionFlip { site: index as u32 }
            }
            Category::Reservoir => {
                let s = self.geom.upper_sites().start + index;
                let rate = if config.eta[s] == 0 { self.model.b } else { 1.0 - self.model.b };
                if u * self.bounds.reservoir >= rate {
                    return None;
                }
                Event::ReservoirFlip { site: index as u32 }
            }
        };
        event.apply(config, &self.geom);
        Some(event)
    }

    /// One uniformized step: advances `clock` by an exponential holding time
    /// at the total bound, then proposes and thins one transition.
    pub fn step<R: Rng + ?Sized>(
        &self,
        config: &mut Configuration,
        clock: &mut Clock,
        rng: &mut R,
    ) -> Step {
        let dt = self.holding_time(rng);
        clock.advance(dt);
        let event = self.propose(config, rng);
        Step { time: clock.now(), event }
    }

    #[inline]
    fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        e / self.bounds.total
    }

    #[inline]
    fn propose<R: Rng + ?Sized>(&self, config: &mut Configuration, rng: &mut R) -> Option<Event> {
        let x = rng.random::<f64>() * self.bounds.total;
        let (category, lo, per_item, count) = if x < self.cumulative[0] {
            (Category::Field, 0.0, self.bounds.field_edge, self.geom.field_edges().len())
        } else if x < self.cumulative[1] {
            (Category::Road, self.cumulative[0], self.bounds.road_edge, self.geom.road_edges().len())
        } else if x < self.cumulative[2] {
            (Category::Robin, self.cumulative[1], self.bounds.robin, self.geom.road_len())
        } else if x < self.cumulative[3] {
            (Category::Reaction, self.cumulative[2], self.bounds.reaction, self.geom.road_len())
        } else {
            (Category::Reservoir, self.cumulative[3], self.bounds.reservoir, self.geom.layer_len())
        };
        let index = (((x - lo) / per_item) as usize).min(count - 1);
        let u = if category == Category::Reservoir { rng.random::<f64>() } else { 0.0 };
        self.resolve(config, category, index, u)
    }

    /// Run from `init` up to `t_end`, calling `on_event(time, event, config)`
    /// after each effective event and storing snapshots at the (sorted)
    /// observation times. Returns `(snapshots, final configuration)`.
    pub fn run<R, F>(
        &self,
        init: &Configuration,
        t_end: f64,
        observation_times: &[f64],
        rng: &mut R,
        mut on_event: F,
    ) -> Result<(Vec<Configuration>, Configuration)>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, &Event, &Configuration) -> Result<()>,
    {
        init.validate(&self.geom)?;
        check_observation_times(observation_times, t_end)?;
        let mut config = init.clone();
        let mut clock = Clock::new(0.0);
        let mut snapshots = Vec::with_capacity(observation_times.len());
        let mut next_obs = 0;
        loop {
            let dt = self.holding_time(rng);
            let t_next = clock.peek(dt);
            while next_obs < observation_times.len() && observation_times[next_obs] < t_next {
                snapshots.push(config.clone());
                next_obs += 1;
            }
            if t_next > t_end {
                break;
            }
            clock.advance(dt);
            if let Some(ev) = self.propose(&mut config, rng) {
                on_event(clock.now(), &ev, &config)?;
            }
        }
        while snapshots.len() < observation_times.len() {
            snapshots.push(config.clone());
        }
        Ok((snapshots, config))
    }

    /// Full trajectory with event log and snapshots.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        init: &Configuration,
        t_end: f64,
        observation_times: &[f64],
        event_cap: usize,
        rng: &mut R,
    ) -> Result<(TrajectoryRecord, Vec<Configuration>)> {
        let mut events = Vec::new();
        let (snapshots, _) = self.run(init, t_end, observation_times, rng, |t, ev, _| {
            if events.len() >= event_cap {
                return Err(Error::TrajectoryTooLong { cap: event_cap });
            }
            events.push((t, *ev));
            Ok(())
        })?;
        let record = TrajectoryRecord { initial: init.clone(), events, final_time: t_end };
        Ok((record, snapshots))
    }

    /// Snapshots only; no event log is kept.
    pub fn simulate_snapshots<R: Rng + ?Sized>(
        &self,
        init: &Configuration,
        t_end: f64,
        observation_times: &[f64],
        rng: &mut R,
    ) -> Result<Vec<Configuration>> {
        self.run(init, t_end, observation_times, rng, |_, _, _| Ok(())).map(|(s, _)| s)
    }
}

/// Convenience wrapper: simulate one trajectory with the RNG seeded from
/// `params.seed`.
pub fn simulate(
    params: &SimParams,
    init: &Configuration,
    observation_times: &[f64],
) -> Result<(TrajectoryRecord, Vec<Configuration>)> {
    let sim = Simulator::from_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    sim.simulate(init, params.t_end, observation_times, params.event_cap, &mut rng)
}

fn check_observation_times(times: &[f64], t_end: f64) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("observation times must be sorted".into()));
    }
    if times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return Err(Error::InvalidParameter(format!(
            "observation times must lie in [0, {t_end}]"
        )));
    }
    Ok(())
}

/// Piecewise-constant path: the initial state plus every effective event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub initial: Configuration,
    pub events: Vec<(f64, Event)>,
    pub final_time: f64,
}

impl TrajectoryRecord {
    /// Replay every event, checking that each one is a legal transition.
    /// Returns the final configuration.
    pub fn replay(&self, geom: &LatticeGeom) -> Result<Configuration> {
        self.initial.validate(geom)?;
        let mut config = self.initial.clone();
        let mut last = 0.0;
        for (k, (t, ev)) in self.events.iter().enumerate() {
            if *t <= last && k > 0 || *t > self.final_time {
                return Err(Error::InvalidParameter(format!("event {k} at time {t} out of order")));
            }
            if !ev.is_enabled(&config, geom) {
                return Err(Error::InvalidParameter(format!("event {k} ({ev:?}) is not enabled")));
            }
            ev.apply(&mut config, geom);
            last = *t;
        }
        Ok(config)
    }

    /// Configuration at time `t` (right-continuous).
    pub fn configuration_at(&self, geom: &LatticeGeom, t: f64) -> Result<Configuration> {
        if t > self.final_time {
            return Err(Error::BeyondHorizon { requested: t, horizon: self.final_time });
        }
        let mut config = self.initial.clone();
        for (te, ev) in &self.events {
            if *te > t {
                break;
            }
            ev.apply(&mut config, geom);
        }
        Ok(config)
    }
}

/// Independent Bernoulli occupations with `P[eta(s)=1] = v0(s/N)` and
/// `P[xi(i)=1] = u0(i/N)`.
pub fn sample_initial<R, V, U>(v0: V, u0: U, geom: &LatticeGeom, rng: &mut R) -> Result<Configuration>
where
    R: Rng + ?Sized,
    V: Fn(&[f64], f64) -> f64,
    U: Fn(&[f64]) -> f64,
{
    let (pf, pr) = initial_probabilities(v0, u0, geom)?;
    Ok(Configuration {
        eta: pf.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect(),
        xi: pr.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect(),
    })
}

/// Site occupation probabilities of the product measure used by
/// [`sample_initial`], validated to lie in [0,1].
pub fn initial_probabilities<V, U>(v0: V, u0: U, geom: &LatticeGeom) -> Result<(Vec<f64>, Vec<f64>)>
where
    V: Fn(&[f64], f64) -> f64,
    U: Fn(&[f64]) -> f64,
{
    let mut field = Vec::with_capacity(geom.bulk_len());
    for s in 0..geom.bulk_len() {
        let m = geom.site_to_macro::<f64>(s)?;
        let p = v0(&m.x, m.y);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProfileOutOfRange { value: p, location: format!("field site {s}") });
        }
        field.push(p);
    }
    let mut road = Vec::with_capacity(geom.road_len());
    for i in 0..geom.road_len() {
        let x = geom.road_to_macro::<f64>(i)?;
        let p = u0(&x);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProfileOutOfRange { value: p, location: format!("road site {i}") });
        }
        road.push(p);
    }
    Ok((field, road))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize) -> LatticeGeom {
        LatticeGeom::new(2, n).unwrap()
    }

    #[test]
    fn rate_table_example() {
        let g = geom(4);
        let b = uniformized_rates(&ModelParams::new(1.0, 1.0, 1.0, 0.5).unwrap(), &g);
        assert_eq!(b.total, 406.0);
        assert_eq!(b.field_edge, 16.0);
        assert_eq!(b.robin, 4.0);
        let b0 = uniformized_rates(&ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap(), &g);
        assert_eq!(b0.reservoir, 1.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(1.0, 1.0, 0.0, 0.5).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(SimParams::new(ModelParams::default(), geom(3), -1.0, 0).is_err());
    }

    #[test]
    fn empty_config_only_births() {
        let g = geom(4);
        let sim = Simulator::new(ModelParams::default(), g.clone()).unwrap();
        let mut rng = trajectory_rng(7, 0);
        for _ in 0..20 {
            let mut c = Configuration::empty(&g);
            let mut clock = Clock::default();
            let ev = loop {
                if let Some(ev) = sim.step(&mut c, &mut clock, &mut rng).event {
                    break ev;
                }
            };
            assert!(matches!(ev, Event::ReservoirFlip { .. }));
            assert_eq!(c.total_particles(), (1, 0));
            let s = g.upper_sites().start + ev.location() as usize;
            assert_eq!(c.eta[s], 1);
        }
    }

    #[test]
    fn full_config_only_kills() {
        let g = geom(4);
        let sim = Simulator::new(ModelParams::new(1.0, 1.0, 1.0, 0.3).unwrap(), g.clone()).unwrap();
        let mut rng = trajectory_rng(8, 0);
        for _ in 0..20 {
            let mut c = Configuration::full(&g);
            let mut clock = Clock::default();
            let ev = loop {
                if let Some(ev) = sim.step(&mut c, &mut clock, &mut rng).event {
                    break ev;
                }
            };
            assert!(matches!(ev, Event::ReservoirFlip { .. }));
            assert_eq!(c.total_particles(), (11, 4));
        }
    }

    #[test]
    fn forced_swaps_on_full_config_are_null() {
        let g = geom(5);
        let sim = Simulator::new(ModelParams::default(), g.clone()).unwrap();
        let mut c = Configuration::full(&g);
        for e in 0..g.field_edges().len() {
            assert_eq!(sim.resolve(&mut c, Category::Field, e, 0.0), None);
        }
        for e in 0..g.road_edges().len() {
            assert_eq!(sim.resolve(&mut c, Category::Road, e, 0.0), None);
        }
        for i in 0..g.road_len() {
            assert_eq!(sim.resolve(&mut c, Category::Robin, i, 0.0), None);
            assert_eq!(sim.resolve(&mut c, Category::Reaction, i, 0.0), None);
        }
        assert_eq!(c, Configuration::full(&g));
    }

    #[test]
    fn popcounts() {
        let g = geom(4);
        assert_eq!(Configuration::empty(&g).total_particles(), (0, 0));
        assert_eq!(Configuration::full(&g).total_particles(), (12, 4));
    }

    #[test]
    fn zero_horizon() {
        let g = geom(4);
        let params = SimParams::new(ModelParams::default(), g.clone(), 0.0, 1).unwrap();
        let init = Configuration::full(&g);
        let (rec, snaps) = simulate(&params, &init, &[0.0]).unwrap();
        assert!(rec.events.is_empty());
        assert_eq!(snaps, vec![init]);
    }

    #[test]
    fn deterministic_and_replayable() {
        let g = geom(6);
        let params = SimParams::new(ModelParams::default(), g.clone(), 0.05, 99).unwrap();
        let mut rng = trajectory_rng(1, 1);
        let init = sample_initial(|_, _| 0.5, |_| 0.5, &g, &mut rng).unwrap();
        let (a, sa) = simulate(&params, &init, &[0.01, 0.02, 0.05]).unwrap();
        let (b, sb) = simulate(&params, &init, &[0.01, 0.02, 0.05]).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(!a.events.is_empty());
        assert!(a.events.windows(2).all(|w| w[0].0 < w[1].0));
        let fin = a.replay(&g).unwrap();
        assert_eq!(fin, sa[2]);
        assert_eq!(a.configuration_at(&g, 0.02).unwrap(), sa[1]);
        assert!(a.configuration_at(&g, 1.0).is_err());
    }

    #[test]
    fn event_cap_enforced() {
        let g = geom(6);
        let params = SimParams::new(ModelParams::default(), g.clone(), 1.0, 3)
            .unwrap()
            .with_event_cap(10);
        let init = Configuration::full(&g);
        let err = simulate(&params, &init, &[]).unwrap_err();
        assert!(err.to_string().contains("trajectory too long"));
    }

    #[test]
    fn birth_only_reservoir_saturates() {
        let g = geom(5);
        let params = SimParams::new(ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap(), g.clone(), 30.0, 5)
            .unwrap();
        let (_, snaps) = simulate(&params, &Configuration::empty(&g), &[30.0]).unwrap();
        let upper: usize = g.upper_sites().map(|s| snaps[0].eta[s] as usize).sum();
        assert_eq!(upper, g.layer_len());
    }

    #[test]
    fn initial_sampling() {
        let g = geom(64);
        let mut rng = trajectory_rng(11, 0);
        assert_eq!(
            sample_initial(|_, _| 1.0, |_| 1.0, &g, &mut rng).unwrap(),
            Configuration::full(&g)
        );
        assert_eq!(
            sample_initial(|_, _| 0.0, |_| 0.0, &g, &mut rng).unwrap(),
            Configuration::empty(&g)
        );
        let c = sample_initial(|_, _| 0.5, |_| 0.5, &g, &mut rng).unwrap();
        let frac = c.total_particles().0 as f64 / g.bulk_len() as f64;
        assert!((frac - 0.5).abs() <= 3.0 * (0.25 / g.bulk_len() as f64).sqrt());
        let err = sample_initial(|_, _| 1.2, |_| 0.5, &g, &mut rng).unwrap_err();
        assert!(matches!(err, Error::ProfileOutOfRange { .. }));
    }

    #[test]
    fn unsorted_observations_rejected() {
        let g = geom(4);
        let params = SimParams::new(ModelParams::default(), g.clone(), 1.0, 3).unwrap();
        assert!(simulate(&params, &Configuration::empty(&g), &[0.5, 0.1]).is_err());
        assert!(simulate(&params, &Configuration::empty(&g), &[2.0]).is_err());
    }

    #[test]
    fn kahan_clock() {
        let mut c = Clock::default();
        for _ in 0..10_000_000 {
            c.advance(1e-7);
        }
        assert!((c.now() - 1.0).abs() < 1e-12);
    }
}
