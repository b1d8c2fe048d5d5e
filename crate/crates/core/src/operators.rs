//! Maximal, fractional and singular operators on finite spaces, BMO,
//! commutators, and lower/upper estimates of operator norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorentz::FunctionNorm;
use crate::par;
use crate::rearrange::check_len;
use crate::space::Space;
use crate::util::{self, Accum};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// `out(y) = max_{B ∋ y} g(∫_B |f| dμ, μ(B))`, evaluated in `O(n²)` from the
/// per-center distance orderings.
fn ball_sup(space: &Space, f: &[f64], g: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
    let n = space.len();
    let geo = space.geometry();
    let mass = space.mass();
    let suffix: Vec<Vec<f64>> = par::map_range(n, |c| {
        let row = geo.row(c);
        let ends = &geo.group_ends[c];
        let mut vals = Vec::with_capacity(ends.len());
        let (mut s, mut m) = (Accum::default(), Accum::default());
        let mut start = 0;
        for &e in ends {
            for &y in &row[start..e as usize] {
                s.add(f[y as usize].abs() * mass[y as usize]);
                m.add(mass[y as usize]);
            }
            vals.push(g(s.value(), m.value()));
            start = e as usize;
        }
        for k in (0..vals.len().saturating_sub(1)).rev() {
            vals[k] = vals[k].max(vals[k + 1]);
        }
        vals
    });
    par::map_range(n, |y| (0..n).map(|c| suffix[c][geo.rank_of(c, y)]).fold(0.0, f64::max))
}

/// Hardy–Littlewood maximal function over all balls containing each point.
pub fn maximal(space: &Space, f: &[f64]) -> Result<Vec<f64>> {
    check_len(space, f)?;
    Ok(ball_sup(space, f, |s, m| s / m))
}

/// `M^m f`, with `M⁰f = |f|`.
pub fn iterated_maximal(space: &Space, f: &[f64], m: u32) -> Result<Vec<f64>> {
    check_len(space, f)?;
    let mut g: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    for _ in 0..m {
        g = ball_sup(space, &g, |s, m| s / m);
    }
    Ok(g)
}

/// `M_α f(x) = max_{B ∋ x} μ(B)^{α-1} ∫_B |f| dμ`.
pub fn fractional_maximal(space: &Space, f: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_len(space, f)?;
    Ok(ball_sup(space, f, |s, m| m.powf(alpha - 1.0) * s))
}

/// Diagonal entry of the fractional kernel at an atom.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalKernel {
    /// `μ({x})^{α-1}`, matching the off-diagonal scaling.
    #[default]
    Consistent,
    /// `μ({x})`, as printed.
    Printed,
}

/// Row `x` of `K_α(x,·)μ(·)`.
fn frac_row(space: &Space, x: usize, alpha: f64, diag: DiagonalKernel) -> Vec<f64> {
    let n = space.len();
    let geo = space.geometry();
    let mass = space.mass();
    let row = geo.row(x);
    // Mass of B(x, d(x,y)) per tie group: everything strictly before the group.
    let mut before = Vec::with_capacity(geo.group_ends[x].len());
    let mut acc = Accum::default();
    let mut start = 0;
    for &e in &geo.group_ends[x] {
        before.push(acc.value());
        for &y in &row[start..e as usize] {
            acc.add(mass[y as usize]);
        }
        start = e as usize;
    }
    (0..n)
        .map(|y| {
            if y == x {
                match diag {
                    DiagonalKernel::Consistent => mass[x].powf(alpha - 1.0) * mass[x],
                    DiagonalKernel::Printed => mass[x] * mass[x],
                }
            } else {
                before[geo.rank_of(x, y)].powf(alpha - 1.0) * mass[y]
            }
        })
        .collect()
}

/// `I_α f(x) = Σ_y K_α(x,y) f(y) μ({y})` with `K_α(x,y) = μ(B(x,d(x,y)))^{α-1}` off the diagonal.
pub fn fractional_integral(space: &Space, f: &[f64], alpha: f64, diag: DiagonalKernel) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_len(space, f)?;
    Ok(par::map_range(space.len(), |x| {
        util::sum(frac_row(space, x, alpha, diag).iter().zip(f).map(|(k, v)| k * v))
    }))
}

fn grid_of(space: &Space) -> Result<(usize, Vec<f64>)> {
    let n = space.grid().ok_or(Error::NotAGrid)?;
    Ok((n, space.grid_coords()?))
}

/// Principal-value Hilbert transform on `(0,1)` by the midpoint rule, omitting the singular cell.
pub fn hilbert(space: &Space, f: &[f64]) -> Result<Vec<f64>> {
    let (n, x) = grid_of(space)?;
    check_len(space, f)?;
    let h = 1.0 / n as f64;
    Ok(par::map_range(n, |i| {
        h * util::sum((0..n).filter(|&j| j != i).map(|j| f[j] / (x[i] - x[j])))
    }))
}

/// `max_B μ(B)^{-1} ∫_B |b - b_B| dμ` with the maximizing ball index.
pub fn bmo_norm(space: &Space, b: &[f64]) -> Result<(f64, usize)> {
    check_len(space, b)?;
    let balls = space.balls();
    let mass = space.mass();
    let vals = par::map_slice(&balls, |ball| {
        let avg = util::sum(ball.members.iter().map(|&y| b[y] * mass[y])) / ball.measure;
        util::sum(ball.members.iter().map(|&y| (b[y] - avg).abs() * mass[y])) / ball.measure
    });
    let (i, v) = par::argmax(&vals).expect("every space has a ball");
    Ok((v, i))
}

/// `K_b^m f(x) = Σ_{t≠x} [b(x)-b(t)]^m f(t) / (x-t) · h` with the Hilbert kernel.
pub fn commutator_cz(space: &Space, f: &[f64], b: &[f64], m: u32) -> Result<Vec<f64>> {
    let (n, x) = grid_of(space)?;
    check_len(space, f)?;
    check_len(space, b)?;
    let h = 1.0 / n as f64;
    Ok(par::map_range(n, |i| {
        h * util::sum((0..n).filter(|&j| j != i).map(|j| (b[i] - b[j]).powi(m as i32) * f[j] / (x[i] - x[j])))
    }))
}

/// Fractional commutator: `[b(x)-b(y)]^m` inside `I_α` when `signed`, else `|b(x)-b(y)|^m`.
pub fn commutator_frac(
    space: &Space,
    f: &[f64],
    b: &[f64],
    m: u32,
    alpha: f64,
    signed: bool,
    diag: DiagonalKernel,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_len(space, f)?;
    check_len(space, b)?;
    Ok(par::map_range(space.len(), |x| {
        let k = frac_row(space, x, alpha, diag);
        util::sum((0..f.len()).map(|y| {
            let d = b[x] - b[y];
            let c = if signed { d.powi(m as i32) } else { d.abs().powi(m as i32) };
            c * k[y] * f[y]
        }))
    }))
}

/// Operators addressable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    /// `M^m`, `m ≥ 1` for the usual maximal function.
    Maximal {
        #[serde(default = "one")]
        m: u32,
    },
    FracMaximal {
        alpha: f64,
    },
    FracIntegral {
        alpha: f64,
        #[serde(default)]
        diagonal: DiagonalKernel,
    },
    Hilbert,
    CommutatorCz {
        b: Vec<f64>,
        m: u32,
    },
    CommutatorFrac {
        b: Vec<f64>,
        m: u32,
        alpha: f64,
        #[serde(default)]
        signed: bool,
        #[serde(default)]
        diagonal: DiagonalKernel,
    },
    /// `f ↦ T(g·f)`.
    PreMultiply {
        multiplier: Vec<f64>,
        inner: Box<OperatorSpec>,
    },
    /// `f ↦ M_α(M^m f)`.
    FracMaximalOfMaximal {
        alpha: f64,
        m: u32,
    },
}

fn one() -> u32 {
    1
}

impl OperatorSpec {
    /// Parses the short names `maximal`, `maximal^m`, `frac_maximal`, `frac_integral`,
    /// `hilbert`, `commutator_cz`, `commutator_frac`, `identity`.
    pub fn from_name(name: &str, alpha: Option<f64>, m: Option<u32>, b: Option<Vec<f64>>) -> Result<OperatorSpec> {
        let need_alpha = || alpha.ok_or_else(|| Error::InvalidExponent(format!("{name} needs alpha")));
        let need_b = || b.clone().ok_or_else(|| Error::InvalidSample(format!("{name} needs a symbol b")));
        if let Some(k) = name.strip_prefix("maximal^") {
            let m = k.parse().map_err(|_| Error::InvalidScenario(format!("bad iterate count in {name}")))?;
            return Ok(OperatorSpec::Maximal { m });
        }
        Ok(match name {
            "identity" => OperatorSpec::Identity,
            "maximal" => OperatorSpec::Maximal { m: m.unwrap_or(1) },
            "frac_maximal" => OperatorSpec::FracMaximal { alpha: need_alpha()? },
            "frac_integral" => OperatorSpec::FracIntegral { alpha: need_alpha()?, diagonal: DiagonalKernel::default() },
            "hilbert" => OperatorSpec::Hilbert,
            "commutator_cz" => OperatorSpec::CommutatorCz { b: need_b()?, m: m.unwrap_or(1) },
            "commutator_frac" => OperatorSpec::CommutatorFrac {
                b: need_b()?,
                m: m.unwrap_or(1),
                alpha: need_alpha()?,
                signed: false,
                diagonal: DiagonalKernel::default(),
            },
            other => return Err(Error::InvalidScenario(format!("unknown operator {other}"))),
        })
    }

    pub fn apply(&self, space: &Space, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            OperatorSpec::Identity => {
                check_len(space, f)?;
                Ok(f.to_vec())
            }
            OperatorSpec::Maximal { m } => iterated_maximal(space, f, *m),
            OperatorSpec::FracMaximal { alpha } => fractional_maximal(space, f, *alpha),
            OperatorSpec::FracIntegral { alpha, diagonal } => fractional_integral(space, f, *alpha, *diagonal),
            OperatorSpec::Hilbert => hilbert(space, f),
            OperatorSpec::CommutatorCz { b, m } => commutator_cz(space, f, b, *m),
            OperatorSpec::CommutatorFrac { b, m, alpha, signed, diagonal } => {
                commutator_frac(space, f, b, *m, *alpha, *signed, *diagonal)
            }
            OperatorSpec::PreMultiply { multiplier, inner } => {
                check_len(space, f)?;
                check_len(space, multiplier)?;
                let g: Vec<f64> = f.iter().zip(multiplier).map(|(a, b)| a * b).collect();
                inner.apply(space, &g)
            }
            OperatorSpec::FracMaximalOfMaximal { alpha, m } => {
                check_alpha(*alpha)?;
                fractional_maximal(space, &iterated_maximal(space, f, *m)?, *alpha)
            }
        }
    }

    /// `max_x Σ_y |k(x,y)| μ(y)`, so that `|Tf| ≤ R ‖f‖_∞` pointwise.
    pub fn row_sum_bound(&self, space: &Space) -> Result<f64> {
        let n = space.len();
        Ok(match self {
            OperatorSpec::Identity | OperatorSpec::Maximal { .. } => 1.0,
            OperatorSpec::FracMaximal { alpha } | OperatorSpec::FracMaximalOfMaximal { alpha, .. } => {
                check_alpha(*alpha)?;
                space.total_mass().powf(*alpha)
            }
            OperatorSpec::FracIntegral { alpha, diagonal } => {
                check_alpha(*alpha)?;
                par::max(&par::map_range(n, |x| util::sum(frac_row(space, x, *alpha, *diagonal))))
            }
            OperatorSpec::Hilbert => {
                let (n, x) = grid_of(space)?;
                let h = 1.0 / n as f64;
                par::max(&par::map_range(n, |i| h * util::sum((0..n).filter(|&j| j != i).map(|j| 1.0 / (x[i] - x[j]).abs()))))
            }
            OperatorSpec::CommutatorCz { b, m } => {
                let (n, x) = grid_of(space)?;
                check_len(space, b)?;
                let h = 1.0 / n as f64;
                par::max(&par::map_range(n, |i| {
                    h * util::sum((0..n).filter(|&j| j != i).map(|j| (b[i] - b[j]).abs().powi(*m as i32) / (x[i] - x[j]).abs()))
                }))
            }
            OperatorSpec::CommutatorFrac { b, m, alpha, diagonal, .. } => {
                check_alpha(*alpha)?;
                check_len(space, b)?;
                par::max(&par::map_range(n, |x| {
                    let k = frac_row(space, x, *alpha, *diagonal);
                    util::sum((0..n).map(|y| (b[x] - b[y]).abs().powi(*m as i32) * k[y]))
                }))
            }
            OperatorSpec::PreMultiply { multiplier, inner } => {
                check_len(space, multiplier)?;
                inner.row_sum_bound(space)? * multiplier.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            }
        })
    }
}

/// Certified lower estimate and crude upper bound of `‖T‖_{source → target}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    pub lower: f64,
    pub upper: f64,
    pub witness: Vec<f64>,
    pub evaluations: usize,
}

/// `‖Tf‖_target / ‖f‖_source`, zero when `f` has zero norm.
pub fn norm_ratio(space: &Space, op: &OperatorSpec, source: &FunctionNorm, target: &FunctionNorm, f: &[f64]) -> Result<f64> {
    let den = source.eval(f);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(target.eval(&op.apply(space, f)?) / den)
}

/// Search for a large ratio over ball indicators, `χ_B σ` profiles, seeded random
/// inputs and a coordinate-ascent refinement; pair it with the row-sum upper bound.
pub fn operator_norm(
    space: &Space,
    op: &OperatorSpec,
    source: &FunctionNorm,
    target: &FunctionNorm,
    profile: Option<&[f64]>,
    budget: usize,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if budget == 0 {
        return Err(Error::BudgetZero);
    }
    let n = space.len();
    op.apply(space, &vec![0.0; n])?;
    let balls = space.balls();
    let stride = balls.len().div_ceil(budget).max(1);
    let mut cands: Vec<Vec<f64>> = Vec::new();
    for ball in balls.iter().step_by(stride) {
        let mut e = vec![0.0; n];
        for &y in &ball.members {
            e[y] = 1.0;
        }
        if let Some(sig) = profile {
            check_len(space, sig)?;
            cands.push(ball.members.iter().fold(vec![0.0; n], |mut g, &y| {
                g[y] = sig[y];
                g
            }));
        }
        cands.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln = LogNormal::new(0.0, 1.5).expect("valid lognormal");
    for k in 0..budget / 2 {
        cands.push(
            (0..n)
                .map(|_| if k % 2 == 0 { ln.sample(&mut rng) } else if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        );
    }
    let ratios = par::map_slice(&cands, |f| norm_ratio(space, op, source, target, f).unwrap_or(0.0));
    let mut evaluations = cands.len();
    let (best_i, mut best) = par::argmax(&ratios).unwrap_or((0, 0.0));
    let mut witness = cands.swap_remove(best_i);
    // Coordinate ascent: scale one coordinate at a time, keep strict improvements.
    let mut left = budget / 2;
    'outer: while left > 0 {
        let mut improved = false;
        for i in 0..n {
            for factor in [2.0, 0.5, 0.0] {
                if left == 0 {
                    break 'outer;
                }
                left -= 1;
                let mut g = witness.clone();
                g[i] = if g[i] == 0.0 && factor == 2.0 { 1.0 } else { g[i] * factor };
                let r = norm_ratio(space, op, source, target, &g)?;
                evaluations += 1;
                if r > best {
                    best = r;
                    witness = g;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let upper = if matches!(op, OperatorSpec::Identity) && source.spec() == target.spec() && source.multiplier() == target.multiplier() {
        1.0
    } else {
        let min_unit = (0..n)
            .map(|x| {
                let mut e = vec![0.0; n];
                e[x] = 1.0;
                source.eval(&e)
            })
            .fold(f64::INFINITY, f64::min);
        op.row_sum_bound(space)? * target.eval(&vec![1.0; n]) / min_unit
    };
    Ok(OperatorNormEstimate { lower: best, upper, witness, evaluations })
}
