//! Discrete cylinder `T_N^{p-1} x {1..N-1}` and its road `T_N^{p-1}`.
//!
//! Bulk sites are indexed row-major with the y-layer as the slowest axis:
//! `index = (j - 1) * N^{p-1} + xlin`, where `xlin` linearises the torus
//! coordinates `(i_1, ..., i_{p-1})` with the last coordinate fastest. Road
//! site `i` shares `xlin` with the lower-layer bulk site `(i, 1)`. This
//! ordering is part of the on-disk snapshot format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lattice coordinates of a bulk site: torus part `x` and layer `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: Vec<usize>,
    pub j: usize,
}

impl Site {
    pub fn new(x: impl Into<Vec<usize>>, j: usize) -> Self {
        Site { x: x.into(), j }
    }
}

/// Macroscopic position `site / N` of a lattice point.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroPoint<T> {
    pub x: Vec<T>,
    pub y: T,
}

#[derive(Clone, Debug)]
pub struct LatticeGeom {
    p: usize,
    n: usize,
    layer: usize,
    field_edges: Vec<(u32, u32)>,
    road_edges: Vec<(u32, u32)>,
    // CSR adjacency: bulk site -> incident field edge ids
    incident_offsets: Vec<u32>,
    incident_edges: Vec<u32>,
}

impl LatticeGeom {
    pub fn new(p: usize, n: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::DegenerateCylinder(format!(
                "dimension p = {p} must be at least 2"
            )));
        }
        if n < 3 {
            return Err(Error::DegenerateCylinder(format!(
                "N = {n}: the j=1 and j=N-1 layers coincide, N must be at least 3"
            )));
        }
        let layer = n
            .checked_pow((p - 1) as u32)
            .filter(|l| l.checked_mul(n).is_some_and(|t| t < u32::MAX as usize))
            .ok_or_else(|| Error::InvalidParameter(format!("lattice N={n}, p={p} too large")))?;

        let mut geom = LatticeGeom {
            p,
            n,
            layer,
            field_edges: Vec::new(),
            road_edges: Vec::new(),
            incident_offsets: Vec::new(),
            incident_edges: Vec::new(),
        };

        let mut field = Vec::with_capacity(geom.bulk_len() * p);
        for s in 0..geom.bulk_len() {
            let (xlin, j) = geom.split(s);
            for q in 0..p - 1 {
                let k = geom.join(geom.shift_x(xlin, q, true), j);
                field.push(ordered(s, k));
            }
            if j < n - 1 {
                field.push(ordered(s, s + layer));
            }
        }
        field.sort_unstable();
        field.dedup();

        let mut road = Vec::with_capacity(layer * (p - 1));
        for i in 0..layer {
            for q in 0..p - 1 {
                road.push(ordered(i, geom.shift_x(i, q, true)));
            }
        }
        road.sort_unstable();
        road.dedup();

        let mut degree = vec![0u32; geom.bulk_len() + 1];
        for &(a, b) in &field {
            degree[a as usize + 1] += 1;
            degree[b as usize + 1] += 1;
        }
        for s in 0..geom.bulk_len() {
            degree[s + 1] += degree[s];
        }
        let mut fill = degree.clone();
        let mut incident = vec![0u32; field.len() * 2];
        for (e, &(a, b)) in field.iter().enumerate() {
            for v in [a as usize, b as usize] {
                incident[fill[v] as usize] = e as u32;
                fill[v] += 1;
            }
        }

        geom.field_edges = field;
        geom.road_edges = road;
        geom.incident_offsets = degree;
        geom.incident_edges = incident;
        Ok(geom)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Scale parameter `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of sites in one layer, `N^{p-1}`; also the road size.
    pub fn layer_len(&self) -> usize {
        self.layer
    }

    pub fn bulk_len(&self) -> usize {
        self.layer * (self.n - 1)
    }

    pub fn road_len(&self) -> usize {
        self.layer
    }

    /// Bulk indices of the lower layer `j = 1`.
    pub fn lower_sites(&self) -> std::ops::Range<usize> {
        0..self.layer
    }

    /// Bulk indices of the upper layer `j = N - 1`.
    pub fn upper_sites(&self) -> std::ops::Range<usize> {
        let start = (self.n - 2) * self.layer;
        start..start + self.layer
    }

    pub fn field_edges(&self) -> &[(u32, u32)] {
        &self.field_edges
    }

    pub fn road_edges(&self) -> &[(u32, u32)] {
        &self.road_edges
    }

    /// Field edges touching bulk site `s`.
    pub fn incident_edges(&self, s: usize) -> &[u32] {
        let lo = self.incident_offsets[s] as usize;
        let hi = self.incident_offsets[s + 1] as usize;
        &self.incident_edges[lo..hi]
    }

    pub fn check_bulk(&self, s: usize) -> Result<()> {
        if s < self.bulk_len() {
            Ok(())
        } else {
            Err(Error::InvalidSite { index: s, len: self.bulk_len() })
        }
    }

    pub fn check_road(&self, i: usize) -> Result<()> {
        if i < self.road_len() {
            Ok(())
        } else {
            Err(Error::InvalidSite { index: i, len: self.road_len() })
        }
    }

    /// `(xlin, j)` of a bulk index; no bounds check.
    #[inline]
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s % self.layer, s / self.layer + 1)
    }

    #[inline]
    pub fn join(&self, xlin: usize, j: usize) -> usize {
        (j - 1) * self.layer + xlin
    }

    pub fn layer_of(&self, s: usize) -> usize {
        s / self.layer + 1
    }

    /// Torus coordinates of a linear x-index.
    pub fn x_coords(&self, xlin: usize) -> Vec<usize> {
        let mut x = vec![0; self.p - 1];
        let mut rem = xlin;
        for q in (0..self.p - 1).rev() {
            x[q] = rem % self.n;
            rem /= self.n;
        }
        x
    }

    pub fn x_index(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &c| acc * self.n + c)
    }

    pub fn site(&self, s: usize) -> Result<Site> {
        self.check_bulk(s)?;
        let (xlin, j) = self.split(s);
        Ok(Site { x: self.x_coords(xlin), j })
    }

    pub fn index(&self, site: &Site) -> Result<usize> {
        if site.x.len() != self.p - 1
            || site.x.iter().any(|&c| c >= self.n)
            || site.j == 0
            || site.j >= self.n
        {
            return Err(Error::InvalidSite { index: usize::MAX, len: self.bulk_len() });
        }
        Ok(self.join(self.x_index(&site.x), site.j))
    }

    /// Move `xlin` by one step along torus direction `q`, wrapping.
    #[inline]
    pub fn shift_x(&self, xlin: usize, q: usize, forward: bool) -> usize {
        let stride = self.n.pow((self.p - 2 - q) as u32);
        let c = (xlin / stride) % self.n;
        let c2 = if forward { (c + 1) % self.n } else { (c + self.n - 1) % self.n };
        xlin - c * stride + c2 * stride
    }

    /// Bulk sites one canonical unit step away from `s`.
    pub fn neighbors(&self, s: usize) -> Result<Vec<usize>> {
        self.check_bulk(s)?;
        let (xlin, j) = self.split(s);
        let mut out = Vec::with_capacity(2 * self.p);
        for q in 0..self.p - 1 {
            out.push(self.join(self.shift_x(xlin, q, false), j));
            out.push(self.join(self.shift_x(xlin, q, true), j));
        }
        if j > 1 {
            out.push(s - self.layer);
        }
        if j < self.n - 1 {
            out.push(s + self.layer);
        }
        Ok(out)
    }

    pub fn site_to_macro<T: Scalar>(&self, s: usize) -> Result<MacroPoint<T>> {
        self.check_bulk(s)?;
        let (xlin, j) = self.split(s);
        let n = T::of_usize(self.n);
        Ok(MacroPoint {
            x: self.x_coords(xlin).into_iter().map(|c| T::of_usize(c) / n).collect(),
            y: T::of_usize(j) / n,
        })
    }

    pub fn road_to_macro<T: Scalar>(&self, i: usize) -> Result<Vec<T>> {
        self.check_road(i)?;
        let n = T::of_usize(self.n);
        Ok(self.x_coords(i).into_iter().map(|c| T::of_usize(c) / n).collect())
    }
}

fn ordered(a: usize, b: usize) -> (u32, u32) {
    (a.min(b) as u32, a.max(b) as u32)
}
