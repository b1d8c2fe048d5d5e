//! Weighted distribution functions and decreasing rearrangements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Space;
use crate::util::{self, Accum};

/// Real values, one per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(space: &Space, values: Vec<f64>) -> Result<Sample> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("value at point {i} is not finite")));
        }
        Ok(Sample(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Strictly positive values, one per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weight(Vec<f64>);

impl Weight {
    pub fn new(space: &Space, values: Vec<f64>) -> Result<Weight> {
        if values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: values.len() });
        }
        Weight::from_vec(values)
    }

    /// Unchecked length; values must still be positive and finite.
    pub fn from_vec(values: Vec<f64>) -> Result<Weight> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidWeight(format!(
                "value at point {i} must be positive and finite, got {}",
                values[i]
            )));
        }
        Ok(Weight(values))
    }

    pub fn ones(space: &Space) -> Weight {
        Weight(vec![1.0; space.len()])
    }

    /// `x^a` at the grid midpoints.
    pub fn power(space: &Space, a: f64) -> Result<Weight> {
        let xs = space.grid_coords()?;
        Weight::from_vec(xs.into_iter().map(|x| x.powf(a)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Pointwise power `w^e`.
    pub fn powf(&self, e: f64) -> Result<Weight> {
        Weight::from_vec(self.0.iter().map(|v| v.powf(e)).collect())
    }

    /// `w(x) μ({x})`, the point masses of `w dμ`.
    pub fn nu(&self, space: &Space) -> Vec<f64> {
        self.0.iter().zip(space.mass()).map(|(w, m)| w * m).collect()
    }
}

/// `wE = Σ_{x∈E} w(x) μ({x})`.
pub fn weighted_measure(space: &Space, set: &[usize], w: &Weight) -> f64 {
    util::sum(set.iter().map(|&x| w.values()[x] * space.mass()[x]))
}

/// `w{x : |f(x)| > τ}`.
pub fn distribution(space: &Space, f: &[f64], w: &Weight, tau: f64) -> f64 {
    util::sum(
        f.iter()
            .zip(w.values().iter().zip(space.mass()))
            .filter(|(v, _)| v.abs() > tau)
            .map(|(_, (w, m))| w * m),
    )
}

/// Right-continuous nonincreasing step function on `(0, ∞)`, zero beyond its
/// last breakpoint. Level `levels[i]` holds on `[ends[i-1], ends[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    ends: Vec<f64>,
    levels: Vec<f64>,
    total: f64,
}

impl StepFunction {
    /// Validated constructor: ends increasing, levels strictly decreasing and positive.
    pub fn new(ends: Vec<f64>, levels: Vec<f64>, total: f64) -> Result<StepFunction> {
        if ends.len() != levels.len() {
            return Err(Error::LengthMismatch { expected: levels.len(), got: ends.len() });
        }
        let bad = |m: &str| Err(Error::InvalidSample(m.to_string()));
        if ends.iter().any(|e| !(e.is_finite() && *e > 0.0)) || ends.windows(2).any(|w| w[0] >= w[1]) {
            return bad("breakpoints must be positive, finite and increasing");
        }
        if levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) || levels.windows(2).any(|w| w[0] <= w[1]) {
            return bad("levels must be positive, finite and strictly decreasing");
        }
        if !(total.is_finite() && total >= ends.last().copied().unwrap_or(0.0)) {
            return bad("domain end must cover the last breakpoint");
        }
        Ok(StepFunction { ends, levels, total })
    }

    pub fn zero(total: f64) -> StepFunction {
        StepFunction { ends: vec![], levels: vec![], total }
    }

    pub fn ends(&self) -> &[f64] {
        &self.ends
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Domain end `T = w(X)`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_zero(&self) -> bool {
        self.levels.is_empty()
    }

    /// `(start, end, level)` for each nonzero piece.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.levels.len()).map(move |i| {
            let a = if i == 0 { 0.0 } else { self.ends[i - 1] };
            (a, self.ends[i], self.levels[i])
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = self.ends.partition_point(|&e| e <= t);
        self.levels.get(k).copied().unwrap_or(0.0)
    }

    /// `|{t : f(t) > τ}|`.
    pub fn distribution(&self, tau: f64) -> f64 {
        let k = self.levels.partition_point(|&l| l > tau);
        if k == 0 {
            0.0
        } else {
            self.ends[k - 1]
        }
    }

    /// Cumulative integrals `F_i = ∫_0^{ends[i]} f`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = Accum::default();
        self.segments()
            .map(|(a, b, v)| {
                acc.add(v * (b - a));
                acc.value()
            })
            .collect()
    }

    /// Raw integral `∫_0^t f`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut acc = Accum::default();
        for (a, b, v) in self.segments() {
            if t <= a {
                break;
            }
            acc.add(v * (b.min(t) - a));
        }
        acc.value()
    }

    /// `f**(t) = (1/t) ∫_0^t f`.
    pub fn average(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.levels.first().copied().unwrap_or(0.0);
        }
        self.integral(t) / t
    }

    /// `∫_0^∞ f g`, exact over the common refinement.
    pub fn product_integral(&self, other: &StepFunction) -> f64 {
        let mut acc = Accum::default();
        let (mut i, mut j) = (0usize, 0usize);
        let mut t = 0.0f64;
        while i < self.ends.len() && j < other.ends.len() {
            let e = self.ends[i].min(other.ends[j]);
            acc.add(self.levels[i] * other.levels[j] * (e - t));
            t = e;
            if self.ends[i] == e {
                i += 1;
            }
            if other.ends[j] == e {
                j += 1;
            }
        }
        acc.value()
    }

    /// Multiply all levels by `c > 0`.
    pub fn scaled(&self, c: f64) -> StepFunction {
        if c == 0.0 {
            return StepFunction::zero(self.total);
        }
        StepFunction { ends: self.ends.clone(), levels: self.levels.iter().map(|l| l * c.abs()).collect(), total: self.total }
    }
}

/// Decreasing rearrangement of `|values|` with respect to point masses `masses`.
pub fn rearrange_masses(values: &[f64], masses: &[f64]) -> StepFunction {
    let total = util::sum(masses.iter().copied());
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut ends = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    let mut acc = Accum::default();
    for &i in &idx {
        let v = values[i].abs();
        acc.add(masses[i]);
        if levels.last() == Some(&v) {
            *ends.last_mut().unwrap() = acc.value();
        } else {
            levels.push(v);
            ends.push(acc.value());
        }
    }
    StepFunction { ends, levels, total }
}

/// `f*_w`, the decreasing rearrangement of `|f|` under `w dμ`.
pub fn rearrangement(space: &Space, f: &[f64], w: &Weight) -> Result<StepFunction> {
    check_len(space, f)?;
    check_len(space, w.values())?;
    Ok(rearrange_masses(f, &w.nu(space)))
}

/// `f**_w(t)`, the running average of the rearrangement.
pub fn double_star(space: &Space, f: &[f64], w: &Weight, t: f64) -> Result<f64> {
    Ok(rearrangement(space, f, w)?.average(t))
}

/// `∫_0^t f*_w`, the unaveraged form.
pub fn double_star_raw(space: &Space, f: &[f64], w: &Weight, t: f64) -> Result<f64> {
    Ok(rearrangement(space, f, w)?.integral(t))
}

pub(crate) fn check_len(space: &Space, f: &[f64]) -> Result<()> {
    if f.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: f.len() });
    }
    Ok(())
}
