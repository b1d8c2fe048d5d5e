//! Finite quasi-metric measure spaces, their balls and structural constants.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::util;

/// A finite quasi-metric measure space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpaceSpec", into = "SpaceSpec")]
pub struct Space {
    ids: Vec<String>,
    dist: Vec<f64>,
    mass: Vec<f64>,
    kappa: f64,
    grid: Option<usize>,
    total: f64,
    geom: OnceLock<Arc<Geometry>>,
    balls: OnceLock<Arc<Vec<Ball>>>,
}

/// A ball `B(center, radius) = {y : d(center, y) < radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub measure: f64,
}

impl Ball {
    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }
}

/// Per-center distance orderings, shared by the maximal kernels.
#[derive(Debug)]
pub(crate) struct Geometry {
    pub n: usize,
    /// Row `c`: points sorted by distance from `c`, ties by index.
    pub order: Vec<u32>,
    /// Row `c`: tie-group index (from `c`) of each point.
    pub rank: Vec<u32>,
    /// Per center: exclusive end positions of each tie group in `order`.
    pub group_ends: Vec<Vec<u32>>,
}

impl Geometry {
    fn build(space: &Space) -> Geometry {
        let n = space.len();
        let rows: Vec<(Vec<u32>, Vec<u32>, Vec<u32>)> = par::map_range(n, |c| {
            let row = &space.dist[c * n..(c + 1) * n];
            let mut ord: Vec<u32> = (0..n as u32).collect();
            ord.sort_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b)));
            let mut rank = vec![0u32; n];
            let mut ends = Vec::new();
            let mut g = 0u32;
            for i in 0..n {
                if i > 0 && row[ord[i] as usize] != row[ord[i - 1] as usize] {
                    ends.push(i as u32);
                    g += 1;
                }
                rank[ord[i] as usize] = g;
            }
            ends.push(n as u32);
            (ord, rank, ends)
        });
        let mut order = Vec::with_capacity(n * n);
        let mut rank = Vec::with_capacity(n * n);
        let mut group_ends = Vec::with_capacity(n);
        for (o, r, e) in rows {
            order.extend(o);
            rank.extend(r);
            group_ends.push(e);
        }
        Geometry { n, order, rank, group_ends }
    }

    pub fn row(&self, c: usize) -> &[u32] {
        &self.order[c * self.n..(c + 1) * self.n]
    }

    pub fn rank_of(&self, c: usize, y: usize) -> usize {
        self.rank[c * self.n + y] as usize
    }
}

/// JSON description of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Grid(GridSpec),
    Explicit(ExplicitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub interval_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSpec {
    pub points: Vec<PointId>,
    pub dist: DistMatrix,
    pub mass: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Point ids may be given as strings or integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointId {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointId::Int(i) => write!(f, "{i}"),
            PointId::Str(s) => f.write_str(s),
        }
    }
}

/// Row-major flat matrix or nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistMatrix {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl TryFrom<SpaceSpec> for Space {
    type Error = Error;

    fn try_from(spec: SpaceSpec) -> Result<Space> {
        match spec {
            SpaceSpec::Grid(g) => interval_grid(g.interval_grid),
            SpaceSpec::Explicit(e) => {
                let n = e.points.len();
                let dist = match e.dist {
                    DistMatrix::Flat(v) => v,
                    DistMatrix::Rows(rows) => {
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(Error::InvalidSpace("distance rows must have one entry per point".into()));
                        }
                        rows.into_iter().flatten().collect()
                    }
                };
                let ids = e.points.iter().map(|p| p.to_string()).collect();
                match e.kappa {
                    Some(k) => Space::with_kappa(ids, dist, e.mass, k),
                    None => Space::new(ids, dist, e.mass),
                }
            }
        }
    }
}

impl From<Space> for SpaceSpec {
    fn from(s: Space) -> SpaceSpec {
        s.spec()
    }
}

impl Space {
    /// Builds a space and stores the minimal quasi-triangle constant.
    pub fn new(ids: Vec<String>, dist: Vec<f64>, mass: Vec<f64>) -> Result<Space> {
        check_inputs(&ids, &dist, &mass)?;
        let kappa = minimal_kappa(&dist, ids.len());
        Ok(Space::raw(ids, dist, mass, kappa, None))
    }

    /// Builds a space with a caller-supplied κ, which must dominate the minimal one.
    pub fn with_kappa(ids: Vec<String>, dist: Vec<f64>, mass: Vec<f64>, kappa: f64) -> Result<Space> {
        check_inputs(&ids, &dist, &mass)?;
        let k0 = minimal_kappa(&dist, ids.len());
        if !(kappa.is_finite() && kappa >= k0) {
            return Err(Error::InvalidSpace(format!(
                "kappa {kappa} is below the minimal quasi-triangle constant {k0}"
            )));
        }
        Ok(Space::raw(ids, dist, mass, kappa, None))
    }

    /// Unweighted points of a metric given by coordinates on the line.
    pub fn from_line(coords: &[f64], mass: Vec<f64>) -> Result<Space> {
        let n = coords.len();
        let dist = (0..n * n).map(|k| (coords[k / n] - coords[k % n]).abs()).collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        Space::new(ids, dist, mass)
    }

    fn raw(ids: Vec<String>, dist: Vec<f64>, mass: Vec<f64>, kappa: f64, grid: Option<usize>) -> Space {
        let total = util::sum(mass.iter().copied());
        Space { ids, dist, mass, kappa, grid, total, geom: OnceLock::new(), balls: OnceLock::new() }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.len() + y]
    }

    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Number of cells when the space is `interval_grid(n)`.
    pub fn grid(&self) -> Option<usize> {
        self.grid
    }

    /// Grid midpoints `(k-1/2)/n`.
    pub fn grid_coords(&self) -> Result<Vec<f64>> {
        let n = self.grid.ok_or(Error::NotAGrid)?;
        Ok((0..n).map(|k| (k as f64 + 0.5) / n as f64).collect())
    }

    pub fn spec(&self) -> SpaceSpec {
        if let Some(n) = self.grid {
            return SpaceSpec::Grid(GridSpec { interval_grid: n });
        }
        SpaceSpec::Explicit(ExplicitSpec {
            points: self.ids.iter().map(|s| PointId::Str(s.clone())).collect(),
            dist: DistMatrix::Flat(self.dist.clone()),
            mass: self.mass.clone(),
            kappa: Some(self.kappa),
        })
    }

    /// Short human label for reports.
    pub fn label(&self) -> String {
        match self.grid {
            Some(n) => format!("interval_grid({n})"),
            None => format!("explicit({} points)", self.len()),
        }
    }

    pub(crate) fn geometry(&self) -> Arc<Geometry> {
        self.geom.get_or_init(|| Arc::new(Geometry::build(self))).clone()
    }

    /// Smallest κ with `d(x,y) ≤ κ(d(x,z)+d(z,y))` over all triples.
    pub fn validate_quasi_metric(&self) -> f64 {
        minimal_kappa(&self.dist, self.len())
    }

    /// Every set-distinct ball, each with its smallest canonical radius.
    pub fn balls(&self) -> Arc<Vec<Ball>> {
        self.balls.get_or_init(|| Arc::new(self.enumerate_balls())).clone()
    }

    fn enumerate_balls(&self) -> Vec<Ball> {
        let n = self.len();
        let geo = self.geometry();
        let mut radii: Vec<f64> = self.dist.iter().copied().filter(|&d| d > 0.0).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let diam = radii.last().copied().unwrap_or(0.0);
        let big = if diam > 0.0 { 2.0 * diam } else { 1.0 };
        let canonical = |d: f64| -> f64 {
            let k = radii.partition_point(|&r| r <= d);
            radii.get(k).copied().unwrap_or(big)
        };
        let words = n.div_ceil(64);
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out: Vec<Ball> = Vec::new();
        for c in 0..n {
            let row = geo.row(c);
            let mut bits = vec![0u64; words];
            let mut start = 0usize;
            for &e in &geo.group_ends[c] {
                let e = e as usize;
                for &y in &row[start..e] {
                    bits[y as usize / 64] |= 1 << (y % 64);
                }
                let r = canonical(self.d(c, row[e - 1] as usize));
                match index.get(&bits) {
                    Some(&k) => {
                        if r < out[k].radius {
                            out[k].radius = r;
                            out[k].center = c;
                        }
                    }
                    None => {
                        let mut members: Vec<usize> = row[..e].iter().map(|&y| y as usize).collect();
                        members.sort_unstable();
                        let measure = util::sum(members.iter().map(|&y| self.mass[y]));
                        index.insert(bits.clone(), out.len());
                        out.push(Ball { center: c, radius: r, members, measure });
                    }
                }
                start = e;
            }
        }
        out
    }

    /// `μ(B(x, r))`.
    pub fn ball_measure(&self, x: usize, r: f64) -> f64 {
        let n = self.len();
        util::sum((0..n).filter(|&y| self.d(x, y) < r).map(|y| self.mass[y]))
    }

    /// Doubling constant with the center and radius attaining it.
    pub fn doubling_constant(&self) -> Doubling {
        let n = self.len();
        let geo = self.geometry();
        let per: Vec<Doubling> = par::map_range(n, |c| {
            let row = geo.row(c);
            let ds: Vec<f64> = row.iter().map(|&y| self.d(c, y as usize)).collect();
            let mut pm = Vec::with_capacity(n + 1);
            let mut acc = util::Accum::default();
            pm.push(0.0);
            for &y in row {
                acc.add(self.mass[y as usize]);
                pm.push(acc.value());
            }
            let mu = |r: f64| pm[ds.partition_point(|&d| d < r)];
            let mut crit: Vec<f64> = ds.iter().filter(|&&d| d > 0.0).flat_map(|&d| [d, d / 2.0]).collect();
            crit.sort_by(f64::total_cmp);
            crit.dedup();
            let mut probes = Vec::with_capacity(crit.len() + 1);
            match (crit.first(), crit.last()) {
                (Some(&lo), Some(&hi)) => {
                    probes.push(lo / 2.0);
                    probes.extend(crit.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                    probes.push(2.0 * hi);
                }
                _ => probes.push(1.0),
            }
            let mut best = Doubling { value: 1.0, center: c, radius: probes[0] };
            for r in probes {
                let v = mu(2.0 * r) / mu(r);
                if v > best.value {
                    best = Doubling { value: v, center: c, radius: r };
                }
            }
            best
        });
        let mut best = per[0].clone();
        for d in per.into_iter().skip(1) {
            if d.value > best.value {
                best = d;
            }
        }
        best
    }

    /// Structural constants from κ and the doubling constant of this space.
    pub fn structural_constants(&self, mode: CbarMode) -> Result<StructuralConstants> {
        if mode == CbarMode::Interval && self.grid.is_none() {
            return Err(Error::NotAGrid);
        }
        StructuralConstants::from_parts(self.kappa, self.doubling_constant().value, mode)
    }
}

fn check_inputs(ids: &[String], dist: &[f64], mass: &[f64]) -> Result<()> {
    let n = ids.len();
    if n == 0 {
        return Err(Error::InvalidSpace("a space needs at least one point".into()));
    }
    if mass.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: mass.len() });
    }
    if dist.len() != n * n {
        return Err(Error::LengthMismatch { expected: n * n, got: dist.len() });
    }
    for (i, &m) in mass.iter().enumerate() {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidSpace(format!("mass of point {i} must be positive and finite, got {m}")));
        }
    }
    for x in 0..n {
        if dist[x * n + x] != 0.0 {
            return Err(Error::InvalidSpace(format!("d({x},{x}) must be zero")));
        }
        for y in 0..n {
            let d = dist[x * n + y];
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidSpace(format!("d({x},{y}) = {d} is not a nonnegative real")));
            }
            if d != dist[y * n + x] {
                return Err(Error::AsymmetricDistance(x, y));
            }
            if x != y && d == 0.0 {
                return Err(Error::ZeroOffDiagonal(x.min(y), x.max(y)));
            }
        }
    }
    Ok(())
}

fn minimal_kappa(dist: &[f64], n: usize) -> f64 {
    let per = par::map_range(n, |x| {
        let mut k = 1.0f64;
        for y in 0..n {
            if y == x {
                continue;
            }
            let dxy = dist[x * n + y];
            for z in 0..n {
                if z == x || z == y {
                    continue;
                }
                let r = dxy / (dist[x * n + z] + dist[z * n + y]);
                if r > k {
                    k = r;
                }
            }
        }
        k
    });
    per.into_iter().fold(1.0, f64::max)
}

/// `n` midpoints `(k-1/2)/n` of `(0,1)` with mass `1/n` each.
pub fn interval_grid(n: usize) -> Result<Space> {
    if n == 0 {
        return Err(Error::InvalidSpace("interval_grid needs n >= 1".into()));
    }
    let nf = n as f64;
    let dist = (0..n * n)
        .map(|k| ((k / n) as f64 - (k % n) as f64).abs() / nf)
        .collect();
    let ids = (0..n).map(|i| i.to_string()).collect();
    let mass = vec![1.0 / nf; n];
    let mut s = Space::raw(ids, dist, mass, 1.0, Some(n));
    s.total = 1.0;
    Ok(s)
}

/// Where the doubling ratio peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doubling {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// Formula constants, or the interval shortcut `c̄ = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbarMode {
    #[default]
    Formula,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    pub d_mu: f64,
    pub kappa: f64,
    pub theta_bar: f64,
    pub tau: f64,
    pub c_bar: f64,
    pub mode: CbarMode,
    /// Set when τ or c̄ overflowed to `+inf`.
    pub overflow: bool,
}

impl StructuralConstants {
    pub fn from_parts(kappa: f64, d_mu: f64, mode: CbarMode) -> Result<StructuralConstants> {
        if !(kappa.is_finite() && kappa >= 1.0) {
            return Err(Error::InvalidStructural(format!("kappa must be >= 1, got {kappa}")));
        }
        if !(d_mu.is_finite() && d_mu >= 1.0) {
            return Err(Error::InvalidStructural(format!("doubling constant must be >= 1, got {d_mu}")));
        }
        let theta_bar = 4.0 * kappa * kappa + kappa;
        let tau = 6.0 * (32.0 * kappa.powi(4) * (4.0 * kappa + 1.0)).powf(d_mu);
        let formula = 32.0 * kappa.powf(d_mu) * (2.0 * theta_bar).powf(d_mu) * (1.0 + tau);
        let c_bar = match mode {
            CbarMode::Formula => formula,
            CbarMode::Interval => 2.0,
        };
        let overflow = !tau.is_finite() || !c_bar.is_finite();
        Ok(StructuralConstants { d_mu, kappa, theta_bar, tau, c_bar, mode, overflow })
    }
}
