//! Classical, Banach-form and grand Lorentz norms, the Köthe pairing,
//! convexification and Hölder checks.

use std::sync::{Arc, OnceLock};

use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rearrange::{check_len, distribution, rearrange_masses, rearrangement, StepFunction, Weight};
use crate::space::Space;
use crate::util::{self, conj, recip, Accum};

const GRID_POINTS: usize = 64;
const GRID_FLOOR: f64 = 1e-6;

fn check_lorentz(p: f64, s: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidExponent(format!("p must lie in [1, inf), got {p}")));
    }
    if !(s >= 1.0) {
        return Err(Error::InvalidExponent(format!("s must lie in [1, inf], got {s}")));
    }
    Ok(())
}

fn check_grand(p: f64, s: f64, theta: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidExponent(format!("p must lie in (1, inf), got {p}")));
    }
    check_lorentz(p, s)?;
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidExponent(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

/// `‖f‖_{L^{p,s}}` of a rearrangement, via `Σ v_i^s (c_i^{s/p} - c_{i-1}^{s/p})`.
pub fn lorentz_step(fs: &StepFunction, p: f64, s: f64) -> f64 {
    let Some(&top) = fs.levels().first() else {
        return 0.0;
    };
    if s.is_infinite() {
        let r = fs.segments().map(|(_, b, v)| (v / top) * b.powf(1.0 / p)).fold(0.0, f64::max);
        return top * r;
    }
    let e = s / p;
    let mut acc = Accum::default();
    for (a, b, v) in fs.segments() {
        acc.add((v / top).powf(s) * (b.powf(e) - a.powf(e)));
    }
    top * acc.value().powf(1.0 / s)
}

/// Rearrangement form of the weighted Lorentz norm.
pub fn lorentz_norm_rearr(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64) -> Result<f64> {
    check_lorentz(p, s)?;
    Ok(lorentz_step(&rearrangement(space, f, w)?, p, s))
}

/// Distribution-function form `(s ∫ λ(τ)^{s/p} τ^{s-1} dτ)^{1/s}`, with
/// `λ(τ) = w{|f| > τ}` evaluated directly on the sample.
pub fn lorentz_norm_dist(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64) -> Result<f64> {
    check_lorentz(p, s)?;
    check_len(space, f)?;
    let mut vals: Vec<f64> = f.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.dedup();
    let Some(&top) = vals.first() else {
        return Ok(0.0);
    };
    // λ on [v_{i+1}, v_i) is the measure of {|f| > v_{i+1}}.
    let lam: Vec<f64> = (0..vals.len())
        .map(|i| distribution(space, f, w, vals.get(i + 1).copied().unwrap_or(0.0)))
        .collect();
    if s.is_infinite() {
        let r = (0..vals.len()).map(|i| (vals[i] / top) * lam[i].powf(1.0 / p)).fold(0.0, f64::max);
        return Ok(top * r);
    }
    let mut acc = Accum::default();
    for i in 0..vals.len() {
        let hi = (vals[i] / top).powf(s);
        let lo = vals.get(i + 1).map(|v| (v / top).powf(s)).unwrap_or(0.0);
        acc.add(lam[i].powf(s / p) * (hi - lo));
    }
    Ok(top * acc.value().powf(1.0 / s))
}

fn gauss() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(16).expect("degree 16 is valid"))
}

/// Norm built on `f**` instead of `f*`; a genuine norm for `p > 1`.
pub fn banach_step(fs: &StepFunction, p: f64, s: f64) -> f64 {
    let Some(&top) = fs.levels().first() else {
        return 0.0;
    };
    let ends = fs.ends();
    let levels: Vec<f64> = fs.levels().iter().map(|v| v / top).collect();
    let mut cum = Vec::with_capacity(levels.len());
    let mut acc = Accum::default();
    let mut prev = 0.0;
    for (i, &e) in ends.iter().enumerate() {
        acc.add(levels[i] * (e - prev));
        cum.push(acc.value());
        prev = e;
    }
    if s.is_infinite() {
        // t^{1/p} f**(t) is monotone on the first piece and convex-shaped after,
        // so the sup sits at a breakpoint.
        let r = ends.iter().zip(&cum).map(|(&e, &c)| e.powf(1.0 / p - 1.0) * c).fold(0.0, f64::max);
        return top * r;
    }
    let e = s / p;
    let mut total = Accum::default();
    total.add(ends[0].powf(e));
    let beta = e - 1.0 - s;
    let gl = gauss();
    for i in 1..ends.len() {
        let (a, b, v) = (ends[i - 1], ends[i], levels[i]);
        let base = cum[i - 1] - v * a;
        let pieces = ((b / a).log2().ceil() as usize).max(1);
        let ratio = (b / a).powf(1.0 / pieces as f64);
        let mut lo = a;
        for k in 0..pieces {
            let hi = if k + 1 == pieces { b } else { lo * ratio };
            total.add(e * gl.integrate(lo, hi, |t| t.powf(beta) * (base + v * t).powf(s)));
            lo = hi;
        }
    }
    let last = ends.len() - 1;
    total.add(cum[last].powf(s) * ends[last].powf(e - s) / (p - 1.0));
    top * total.value().powf(1.0 / s)
}

/// Banach-form Lorentz norm with `f**` in place of `f*`.
pub fn banach_norm(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64) -> Result<f64> {
    check_lorentz(p, s)?;
    if p <= 1.0 {
        return Err(Error::InvalidExponent(format!("the f** norm needs p > 1, got {p}")));
    }
    Ok(banach_step(&rearrangement(space, f, w)?, p, s))
}

/// Default ε-grid: 64 geometric points from `upper(1-1e-6)` down to `1e-6`.
pub fn default_eps_grid(upper: f64) -> Result<Vec<f64>> {
    let hi = upper * (1.0 - 1e-6);
    if !(hi > GRID_FLOOR) {
        return Err(Error::InvalidGrid(format!("range (0, {upper}) is too narrow for the default grid")));
    }
    Ok(util::geometric_desc(hi, GRID_FLOOR, GRID_POINTS))
}

/// Default grid, or a user grid checked to be strictly decreasing inside `(0, upper)`.
pub fn eps_grid(upper: f64, custom: Option<&[f64]>) -> Result<Vec<f64>> {
    match custom {
        None => default_eps_grid(upper),
        Some(g) => {
            if g.is_empty() {
                return Err(Error::InvalidGrid("grid is empty".into()));
            }
            if g.iter().any(|&e| !(e > 0.0 && e < upper)) {
                return Err(Error::InvalidGrid(format!("grid points must lie in (0, {upper})")));
            }
            if g.windows(2).any(|w| w[0] <= w[1]) {
                return Err(Error::InvalidGrid("grid must be strictly decreasing".into()));
            }
            Ok(g.to_vec())
        }
    }
}

/// A supremum over a grid together with the parameter attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSup {
    pub value: f64,
    pub witness_eps: f64,
}

fn grid_sup(grid: &[f64], f: impl Fn(f64) -> f64 + Sync + Send) -> GridSup {
    let vals = par::map_slice(grid, |&e| f(e));
    match par::argmax(&vals) {
        Some((i, v)) => GridSup { value: v, witness_eps: grid[i] },
        None => GridSup { value: 0.0, witness_eps: f64::NAN },
    }
}

/// `(Σ |f|^q ν)^{1/q}`.
pub fn lebesgue(f: &[f64], nu: &[f64], q: f64) -> f64 {
    let top = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    top * util::sum(f.iter().zip(nu).map(|(v, n)| (v.abs() / top).powf(q) * n)).powf(1.0 / q)
}

/// `sup_ε ε^{θ/(p-ε)} ‖f‖_{L^{p-ε}_w}`.
pub fn iwaniec_sbordone_norm(
    space: &Space,
    f: &[f64],
    w: &Weight,
    p: f64,
    theta: f64,
    grid: Option<&[f64]>,
) -> Result<GridSup> {
    check_grand(p, p, theta)?;
    check_len(space, f)?;
    let grid = eps_grid(p - 1.0, grid)?;
    let nu = w.nu(space);
    Ok(grid_sup(&grid, |e| e.powf(theta / (p - e)) * lebesgue(f, &nu, p - e)))
}

/// Grand Lorentz norm over a precomputed rearrangement.
pub fn grand_step(fs: &StepFunction, p: f64, s: f64, theta: f64, grid: &[f64]) -> GridSup {
    grid_sup(grid, |e| e.powf(theta / (p - e)) * lorentz_step(fs, p - e, s))
}

/// `sup_ε ε^{θ/(p-ε)} ‖f‖_{L^{p-ε,s}_w}` with the maximizing ε.
pub fn grand_lorentz_norm(
    space: &Space,
    f: &[f64],
    w: &Weight,
    p: f64,
    s: f64,
    theta: f64,
    grid: Option<&[f64]>,
) -> Result<GridSup> {
    check_grand(p, s, theta)?;
    let grid = eps_grid(p - 1.0, grid)?;
    Ok(grand_step(&rearrangement(space, f, w)?, p, s, theta, &grid))
}

/// Supremum over an `(ε₁, ε₂)` grid, with both witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSup2 {
    pub value: f64,
    pub witness_eps1: f64,
    pub witness_eps2: f64,
}

/// Grandification of both exponents: `sup ε₁^{θ/(p-ε₁)} ‖f‖_{L^{p-ε₁, s-ε₂}_w}`.
/// The second grid may contain 0.
#[allow(clippy::too_many_arguments)]
pub fn double_grand_norm(
    space: &Space,
    f: &[f64],
    w: &Weight,
    p: f64,
    s: f64,
    theta: f64,
    grid1: Option<&[f64]>,
    grid2: Option<&[f64]>,
) -> Result<GridSup2> {
    check_grand(p, s, theta)?;
    if !(s.is_finite() && s > 1.0) {
        return Err(Error::InvalidExponent(format!("second grandification needs 1 < s < inf, got {s}")));
    }
    let g1 = eps_grid(p - 1.0, grid1)?;
    let g2 = match grid2 {
        None => default_eps_grid(s - 1.0)?,
        Some(g) => {
            if g.is_empty() || g.iter().any(|&e| !(e >= 0.0 && e < s - 1.0)) {
                return Err(Error::InvalidGrid(format!("second grid must lie in [0, {})", s - 1.0)));
            }
            g.to_vec()
        }
    };
    let fs = rearrangement(space, f, w)?;
    let pairs: Vec<(f64, f64)> = g1.iter().flat_map(|&a| g2.iter().map(move |&b| (a, b))).collect();
    let vals = par::map_slice(&pairs, |&(e1, e2)| e1.powf(theta / (p - e1)) * lorentz_step(&fs, p - e1, s - e2));
    let (i, v) = par::argmax(&vals).expect("nonempty grid");
    Ok(GridSup2 { value: v, witness_eps1: pairs[i].0, witness_eps2: pairs[i].1 })
}

/// Increasing function vanishing at `0⁺`, used by the φ-variant.
pub type PhiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `sup_ε φ(ε)^{p-ε} ‖f‖_{L^{p-ε,s}_w}`.
#[allow(clippy::too_many_arguments)]
pub fn phi_grand_norm(
    space: &Space,
    f: &[f64],
    w: &Weight,
    p: f64,
    s: f64,
    phi: &PhiFn,
    grid: Option<&[f64]>,
) -> Result<GridSup> {
    check_grand(p, s, 1.0)?;
    let grid = eps_grid(p - 1.0, grid)?;
    let mut probe: Vec<f64> = grid.iter().rev().copied().collect();
    probe.insert(0, 1e-12);
    let vals: Vec<f64> = probe.iter().map(|&e| phi(e)).collect();
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidPhi("phi must be positive and finite on the grid".into()));
    }
    if vals.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidPhi("phi must be strictly increasing".into()));
    }
    let fs = rearrangement(space, f, w)?;
    Ok(grid_sup(&grid, |e| phi(e).powf(p - e) * lorentz_step(&fs, p - e, s)))
}

/// Nonnegative step function on `(0, end)`; a weight for the Λ-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalWeight {
    ends: Vec<f64>,
    values: Vec<f64>,
}

impl IntervalWeight {
    pub fn new(ends: Vec<f64>, values: Vec<f64>) -> Result<IntervalWeight> {
        if ends.len() != values.len() || ends.is_empty() {
            return Err(Error::InvalidWeight("need one value per piece".into()));
        }
        if ends.windows(2).any(|w| w[0] >= w[1]) || ends[0] <= 0.0 || *ends.last().unwrap() < 1.0 {
            return Err(Error::InvalidWeight("pieces must be increasing and cover (0,1)".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidWeight("values must be finite and nonnegative".into()));
        }
        Ok(IntervalWeight { ends, values })
    }

    /// Cell values on `interval_grid(n)`.
    pub fn from_cells(values: Vec<f64>) -> Result<IntervalWeight> {
        let n = values.len();
        IntervalWeight::new((1..=n).map(|k| k as f64 / n as f64).collect(), values)
    }

    pub fn constant(c: f64) -> Result<IntervalWeight> {
        IntervalWeight::new(vec![1.0], vec![c])
    }
}

/// `sup_{0<ε<ε₀} (ε^θ ∫_0^1 (f*)^{p-ε} w)^{1/(p-ε)}` with `ε₀ = p-1` for `p>1`, else `p`.
pub fn lambda_grand_norm(
    fs: &StepFunction,
    w: &IntervalWeight,
    p: f64,
    theta: f64,
    grid: Option<&[f64]>,
) -> Result<GridSup> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidExponent(format!("p must be positive, got {p}")));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidExponent(format!("theta must be positive, got {theta}")));
    }
    let eps0 = lambda_eps0(p);
    let grid = eps_grid(eps0, grid)?;
    // Common refinement of f* and w on (0,1).
    let mut cuts: Vec<f64> = fs.ends().iter().chain(w.ends.iter()).copied().filter(|&t| t < 1.0).collect();
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut pieces = Vec::new();
    let mut a = 0.0;
    for &b in &cuts {
        let mid = 0.5 * (a + b);
        let fv = fs.value(mid);
        let k = w.ends.partition_point(|&e| e <= mid);
        let wv = w.values[k.min(w.values.len() - 1)];
        if fv > 0.0 && wv > 0.0 {
            pieces.push((b - a, fv, wv));
        }
        a = b;
    }
    Ok(grid_sup(&grid, |e| {
        let q = p - e;
        let int = util::sum(pieces.iter().map(|&(len, fv, wv)| len * fv.powf(q) * wv));
        (e.powf(theta) * int).powf(1.0 / q)
    }))
}

/// Split point `ε₀` of the Λ-norm.
pub fn lambda_eps0(p: f64) -> f64 {
    if p > 1.0 {
        p - 1.0
    } else {
        p
    }
}

/// `∫_X f h dμ`.
pub fn dual_pairing(space: &Space, f: &[f64], h: &[f64]) -> Result<f64> {
    check_len(space, f)?;
    check_len(space, h)?;
    Ok(util::sum(f.iter().zip(h).zip(space.mass()).map(|((a, b), m)| a * b * m)))
}

/// Witness-family lower estimate of the Köthe dual norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KotheDual {
    /// `max |∫ f h dμ| / ‖w^{-1}h‖_{L^{p',s'}_w}` over the witnesses.
    pub value: f64,
    /// The maximizing `h`.
    pub witness: Vec<f64>,
    /// `‖f‖_{L^{p,s}_w}`.
    pub norm: f64,
    /// `value / norm`, the empirical sandwich constant.
    pub ratio: f64,
}

pub fn kothe_dual_norm(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64, seed: u64, random: usize) -> Result<KotheDual> {
    check_lorentz(p, s)?;
    if p <= 1.0 {
        return Err(Error::InvalidExponent(format!("the dual pairing needs p > 1, got {p}")));
    }
    check_len(space, f)?;
    let (pc, sc) = (conj(p), conj(s));
    let nu = w.nu(space);
    let norm = lorentz_step(&rearrange_masses(f, &nu), p, s);
    let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
    // Candidates are given as g = h / w.
    let mut cands: Vec<Vec<f64>> = Vec::new();
    cands.push(f.iter().map(|&v| sign(v) * v.abs().powf(p - 1.0)).collect());
    let mut levels: Vec<f64> = f.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    for &lv in &levels {
        cands.push(f.iter().map(|&v| if v.abs() >= lv { sign(v) } else { 0.0 }).collect());
    }
    if s.is_finite() {
        let cmass: Vec<f64> = f
            .iter()
            .map(|&v| util::sum(f.iter().zip(&nu).filter(|(u, _)| u.abs() >= v.abs()).map(|(_, n)| *n)))
            .collect();
        cands.push(
            f.iter()
                .zip(&cmass)
                .map(|(&v, &c)| if v == 0.0 { 0.0 } else { sign(v) * v.abs().powf(s - 1.0) * c.powf(s / p - 1.0) })
                .collect(),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    for k in 0..random {
        let g: Vec<f64> = f
            .iter()
            .map(|&v| {
                let m = ln.sample(&mut rng);
                if k % 2 == 0 {
                    sign(v) * m
                } else if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect();
        cands.push(g);
    }
    let vals = par::map_slice(&cands, |g| {
        let den = lorentz_step(&rearrange_masses(g, &nu), pc, sc);
        if den == 0.0 {
            return 0.0;
        }
        let num = util::sum(f.iter().zip(g).zip(&nu).map(|((a, b), n)| a * b * n));
        num.abs() / den
    });
    let (i, value) = par::argmax(&vals).unwrap_or((0, 0.0));
    let witness = cands[i].iter().zip(w.values()).map(|(g, wv)| g * wv).collect();
    let ratio = if norm > 0.0 { value / norm } else { 1.0 };
    Ok(KotheDual { value, witness, norm, ratio })
}

/// `‖f‖_{E^{q0}} = ‖|f|^{q0}‖_{L^{p,s}_w}^{1/q0}`.
pub fn convexify_norm(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64, q0: f64) -> Result<f64> {
    check_lorentz(p, s)?;
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(Error::ExponentOutOfRange(format!("q0 must be positive, got {q0}")));
    }
    let g: Vec<f64> = f.iter().map(|v| v.abs().powf(q0)).collect();
    Ok(lorentz_norm_rearr(space, &g, w, p, s)?.powf(1.0 / q0))
}

/// Both sides of `‖|f|^{1/q0}‖^{q0}_{L^{p,s}} = ‖f‖_{L^{p/q0,s/q0}}`.
pub fn convexification_identity(space: &Space, f: &[f64], w: &Weight, p: f64, s: f64, q0: f64) -> Result<(f64, f64)> {
    check_lorentz(p, s)?;
    if !(q0.is_finite() && q0 >= 1.0 && p / q0 > 1.0 && s / q0 > 1.0) {
        return Err(Error::ExponentOutOfRange(format!(
            "need q0 >= 1 with p/q0 > 1 and s/q0 > 1, got q0 = {q0}"
        )));
    }
    let root: Vec<f64> = f.iter().map(|v| v.abs().powf(1.0 / q0)).collect();
    let lhs = lorentz_norm_rearr(space, &root, w, p, s)?.powf(q0);
    let rhs = lorentz_norm_rearr(space, f, w, p / q0, s / q0)?;
    Ok((lhs, rhs))
}

/// `(‖f₁f₂‖_{p,s}, ‖f₁‖_{p₁,s₁}‖f₂‖_{p₂,s₂}, ratio)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn holder_lorentz(
    space: &Space,
    f1: &[f64],
    f2: &[f64],
    w: &Weight,
    (p, s): (f64, f64),
    (p1, s1): (f64, f64),
    (p2, s2): (f64, f64),
) -> Result<HolderCheck> {
    if (recip(p) - recip(p1) - recip(p2)).abs() > 1e-12 || (recip(s) - recip(s1) - recip(s2)).abs() > 1e-12 {
        return Err(Error::SplitMismatch(format!(
            "1/{p} != 1/{p1} + 1/{p2} or 1/{s} != 1/{s1} + 1/{s2}"
        )));
    }
    check_len(space, f1)?;
    check_len(space, f2)?;
    let prod: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a * b).collect();
    let lhs = lorentz_norm_rearr(space, &prod, w, p, s)?;
    let rhs = lorentz_norm_rearr(space, f1, w, p1, s1)? * lorentz_norm_rearr(space, f2, w, p2, s2)?;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(HolderCheck { lhs, rhs, ratio })
}

/// Norms addressable from configuration files and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSpec {
    Lorentz {
        p: f64,
        #[serde(with = "util::ext_f64")]
        s: f64,
    },
    Banach {
        p: f64,
        #[serde(with = "util::ext_f64")]
        s: f64,
    },
    Grand {
        p: f64,
        #[serde(with = "util::ext_f64")]
        s: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps_grid: Option<Vec<f64>>,
    },
    IwaniecSbordone {
        p: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps_grid: Option<Vec<f64>>,
    },
}

impl NormSpec {
    pub fn p(&self) -> f64 {
        match *self {
            NormSpec::Lorentz { p, .. }
            | NormSpec::Banach { p, .. }
            | NormSpec::Grand { p, .. }
            | NormSpec::IwaniecSbordone { p, .. } => p,
        }
    }

    /// Largest exponent the norm can see: `p` for classical norms, `p` as a sup for grand ones.
    pub fn is_lebesgue(&self) -> bool {
        matches!(*self, NormSpec::Lorentz { p, s } if p == s)
    }
}

/// A norm bound to a space and weight, ready to evaluate many functions:
/// `f ↦ ‖m·f‖` with an optional pointwise multiplier `m`.
#[derive(Debug, Clone)]
pub struct FunctionNorm {
    spec: NormSpec,
    nu: Vec<f64>,
    multiplier: Option<Vec<f64>>,
    grid: Vec<f64>,
}

impl FunctionNorm {
    pub fn new(space: &Space, spec: NormSpec, w: &Weight) -> Result<FunctionNorm> {
        check_len(space, w.values())?;
        let grid = match &spec {
            NormSpec::Lorentz { p, s } => {
                check_lorentz(*p, *s)?;
                vec![]
            }
            NormSpec::Banach { p, s } => {
                check_lorentz(*p, *s)?;
                if *p <= 1.0 {
                    return Err(Error::InvalidExponent(format!("the f** norm needs p > 1, got {p}")));
                }
                vec![]
            }
            NormSpec::Grand { p, s, theta, eps_grid: g } => {
                check_grand(*p, *s, *theta)?;
                eps_grid(p - 1.0, g.as_deref())?
            }
            NormSpec::IwaniecSbordone { p, theta, eps_grid: g } => {
                check_grand(*p, *p, *theta)?;
                eps_grid(p - 1.0, g.as_deref())?
            }
        };
        Ok(FunctionNorm { spec, nu: w.nu(space), multiplier: None, grid })
    }

    /// Evaluate `‖m f‖` instead of `‖f‖`.
    pub fn with_multiplier(mut self, m: Vec<f64>) -> Result<FunctionNorm> {
        if m.len() != self.nu.len() {
            return Err(Error::LengthMismatch { expected: self.nu.len(), got: m.len() });
        }
        self.multiplier = Some(m);
        Ok(self)
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn multiplier(&self) -> Option<&[f64]> {
        self.multiplier.as_deref()
    }

    pub fn eval(&self, f: &[f64]) -> f64 {
        let g: Vec<f64>;
        let f = match &self.multiplier {
            Some(m) => {
                g = f.iter().zip(m).map(|(a, b)| a * b).collect();
                &g
            }
            None => f,
        };
        match self.spec {
            NormSpec::Lorentz { p, s } if p == s => lebesgue(f, &self.nu, p),
            NormSpec::Lorentz { p, s } => lorentz_step(&rearrange_masses(f, &self.nu), p, s),
            NormSpec::Banach { p, s } => banach_step(&rearrange_masses(f, &self.nu), p, s),
            NormSpec::Grand { p, s, theta, .. } => {
                let fs = rearrange_masses(f, &self.nu);
                self.grid
                    .iter()
                    .map(|&e| e.powf(theta / (p - e)) * lorentz_step(&fs, p - e, s))
                    .fold(0.0, f64::max)
            }
            NormSpec::IwaniecSbordone { p, theta, .. } => self
                .grid
                .iter()
                .map(|&e| e.powf(theta / (p - e)) * lebesgue(f, &self.nu, p - e))
                .fold(0.0, f64::max),
        }
    }
}
