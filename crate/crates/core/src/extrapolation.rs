//! Rubio de Francia iteration and the explicit extrapolation constants,
//! evaluated in log space so that huge structural constants stay finite.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorentz::{FunctionNorm, NormSpec};
use crate::operators::{maximal, operator_norm, OperatorSpec};
use crate::rearrange::{check_len, Weight};
use crate::space::{CbarMode, Space};
use crate::util::{self, conj};
use crate::weights::{ap_characteristic, eps0_from};

/// A nonnegative nondecreasing function `N`.
#[derive(Clone)]
pub enum RateFunction {
    /// `coef · x^exponent`.
    Power { coef: f64, exponent: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFunction::Power { coef, exponent } => write!(f, "Power({coef} x^{exponent})"),
            RateFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl RateFunction {
    pub fn identity() -> RateFunction {
        RateFunction::Power { coef: 1.0, exponent: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RateFunction::Power { coef, exponent } => coef * x.powf(*exponent),
            RateFunction::Custom(f) => f(x),
        }
    }

    /// `log N(e^{log_x})`.
    pub fn eval_log(&self, log_x: f64) -> f64 {
        match self {
            RateFunction::Power { coef, exponent } => coef.ln() + exponent * log_x,
            RateFunction::Custom(f) => f(log_x.exp()).ln(),
        }
    }

    /// Checks `N ≥ 0` and `N(x₁) ≤ N(x₂)` along the probe points.
    pub fn check_monotone(&self, probe: &[f64]) -> Result<()> {
        if let RateFunction::Power { coef, exponent } = self {
            if !(*coef > 0.0 && *exponent >= 0.0) {
                return Err(Error::InvalidScenario("power rate needs coef > 0 and exponent >= 0".into()));
            }
        }
        let mut xs = probe.to_vec();
        xs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();
        if vals.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidScenario("rate function must be nonnegative".into()));
        }
        if vals.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidScenario("rate function must be nondecreasing".into()));
        }
        Ok(())
    }
}

/// Which side of the fixed exponent a formula was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Equal,
    Below,
    Above,
}

fn branch(x: f64, x0: f64) -> Branch {
    if x < x0 {
        Branch::Below
    } else if x > x0 {
        Branch::Above
    } else {
        Branch::Equal
    }
}

/// An evaluated constant: `{formula, branch, inputs, value, slack}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantValue {
    pub formula: String,
    pub branch: Branch,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    pub log_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

impl ConstantValue {
    fn new(formula: &str, branch: Branch, inputs: &[(&str, f64)], log_value: f64) -> ConstantValue {
        ConstantValue {
            formula: formula.into(),
            branch,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value: log_value.exp(),
            log_value,
            slack: None,
        }
    }

    /// At the degenerate exponent the constant is `N(x)`; evaluate it without the log round trip.
    fn degenerate(mut self, n: &RateFunction, x: f64) -> ConstantValue {
        if self.branch == Branch::Equal {
            self.value = n.eval(x);
        }
        self
    }
}

fn check_char(c: f64) -> Result<()> {
    if c.is_finite() && c >= 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("characteristic must be finite and >= 1, got {c}")))
    }
}

fn check_open(p: f64, name: &str) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("{name} must lie in (1, inf), got {p}")))
    }
}

/// `γ = 1/q₀ + 1/p₀'`.
pub fn gamma(p0: f64, q0: f64) -> Result<f64> {
    if !(p0.is_finite() && p0 >= 1.0) {
        return Err(Error::InvalidExponent(format!("p0 must lie in [1, inf), got {p0}")));
    }
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(Error::InvalidExponent(format!("q0 must be positive, got {q0}")));
    }
    Ok(1.0 / q0 + util::recip(conj(p0)))
}

/// Diagonal constant from the `A_p` characteristic and `c̄`:
/// `N((2c̄p')^{p₀-p}[w]^{(p'-1)(p₀-p)})` below `p₀`,
/// `N((2c̄p')^{(p₀-p)/(p-1)}[w]^{(2p₀+pp₀+1)/(p-1)²})` above, `N([w])` at `p = p₀`.
pub fn k_diag(ap: f64, p: f64, p0: f64, n: &RateFunction, c_bar: f64) -> Result<ConstantValue> {
    check_open(p, "p")?;
    if !(p0.is_finite() && p0 >= 1.0) {
        return Err(Error::InvalidExponent(format!("p0 must lie in [1, inf), got {p0}")));
    }
    check_char(ap)?;
    let pc = conj(p);
    let base = (2.0 * c_bar * pc).ln();
    let br = branch(p, p0);
    let log_arg = match br {
        Branch::Equal => ap.ln(),
        Branch::Below => (p0 - p) * base + (pc - 1.0) * (p0 - p) * ap.ln(),
        Branch::Above => (p0 - p) / (p - 1.0) * base + (2.0 * p0 + p * p0 + 1.0) / (p - 1.0).powi(2) * ap.ln(),
    };
    Ok(ConstantValue::new(
        "k_diag",
        br,
        &[("ap", ap), ("p", p), ("p0", p0), ("c_bar", c_bar)],
        n.eval_log(log_arg),
    )
    .degenerate(n, ap))
}

/// Diagonal constant in terms of maximal-operator norms:
/// `N([w](2‖M‖_{L^p_w})^{p₀-p})` below `p₀`, `N([w]^{(p₀-1)/(p-1)}(2‖M‖_{L^{p'}_σ})^{(p-p₀)/(p-1)})` above.
pub fn k_diag_from_norms(ap: f64, m_norm: f64, p: f64, p0: f64, n: &RateFunction) -> Result<ConstantValue> {
    check_open(p, "p")?;
    check_char(ap)?;
    if !(m_norm >= 1.0) {
        return Err(Error::DomainError(format!("maximal norm must be >= 1, got {m_norm}")));
    }
    let br = branch(p, p0);
    let log_arg = match br {
        Branch::Equal => ap.ln(),
        Branch::Below => ap.ln() + (p0 - p) * (2.0 * m_norm).ln(),
        Branch::Above => (p0 - 1.0) / (p - 1.0) * ap.ln() + (p - p0) / (p - 1.0) * (2.0 * m_norm).ln(),
    };
    Ok(ConstantValue::new(
        "k_diag_from_norms",
        br,
        &[("ap", ap), ("m_norm", m_norm), ("p", p), ("p0", p0)],
        n.eval_log(log_arg),
    )
    .degenerate(n, ap))
}

fn check_scaling(p: f64, q: f64, p0: f64, q0: f64) -> Result<()> {
    let lhs = 1.0 / p - 1.0 / q;
    let rhs = 1.0 / p0 - 1.0 / q0;
    if (lhs - rhs).abs() > 1e-12 {
        return Err(Error::ScalingMismatch(format!("1/p - 1/q = {lhs} but 1/p0 - 1/q0 = {rhs}")));
    }
    Ok(())
}

/// Off-diagonal constant in both printed forms; they differ only in the exponent of the
/// characteristic on the `q < q₀` branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonal {
    pub gamma: f64,
    /// Characteristic exponent `1 + γ(q-q₀)p'/q`.
    pub paired_form: ConstantValue,
    /// Characteristic exponent `1 + γp'(q₀-q)/q`.
    pub estimate_form: ConstantValue,
}

/// `ch` is `[w]_{A_{1+q/p'}}` (equivalently `[ρ]_{𝒜_{p,q}}` with `w = ρ^q`).
pub fn k_offdiag(ch: f64, p: f64, q: f64, p0: f64, q0: f64, n: &RateFunction, c_bar: f64) -> Result<OffDiagonal> {
    check_open(p, "p")?;
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidExponent(format!("q must be positive, got {q}")));
    }
    check_char(ch)?;
    let g = gamma(p0, q0)?;
    check_scaling(p, q, p0, q0)?;
    let pc = conj(p);
    let base = (2.0 * c_bar * (1.0 + q / pc)).ln();
    let br = branch(q, q0);
    let inputs = [("ch", ch), ("p", p), ("q", q), ("p0", p0), ("q0", q0), ("c_bar", c_bar), ("gamma", g)];
    let (a, b) = match br {
        Branch::Equal => (ch.ln(), ch.ln()),
        Branch::Below => {
            let lead = g * (q - q0) * base;
            (
                lead + (1.0 + g * (q - q0) * pc / q) * ch.ln(),
                lead + (1.0 + g * pc * (q0 - q) / q) * ch.ln(),
            )
        }
        Branch::Above => {
            if g * q - 1.0 <= 0.0 {
                return Err(Error::DomainError(format!("gamma*q - 1 = {} must be positive", g * q - 1.0)));
            }
            let v = g * (q - q0) / (g * q - 1.0) * base + ch.ln();
            (v, v)
        }
    };
    Ok(OffDiagonal {
        gamma: g,
        paired_form: ConstantValue::new("k_offdiag_paired", br, &inputs, n.eval_log(a)).degenerate(n, ch),
        estimate_form: ConstantValue::new("k_offdiag_estimate", br, &inputs, n.eval_log(b)).degenerate(n, ch),
    })
}

/// Off-diagonal constant from the maximal-operator norm on the relevant weighted space.
pub fn k_offdiag_from_norms(
    ch: f64,
    m_norm: f64,
    p: f64,
    q: f64,
    p0: f64,
    q0: f64,
    n: &RateFunction,
) -> Result<ConstantValue> {
    check_open(p, "p")?;
    check_char(ch)?;
    let g = gamma(p0, q0)?;
    check_scaling(p, q, p0, q0)?;
    let br = branch(q, q0);
    let lm = (2.0 * m_norm).ln();
    let log_arg = match br {
        Branch::Equal => ch.ln(),
        Branch::Below => ch.ln() + g * (q - q0) * lm,
        Branch::Above => {
            let d = g * q - 1.0;
            if d <= 0.0 {
                return Err(Error::DomainError(format!("gamma*q - 1 = {d} must be positive")));
            }
            (g * q0 - 1.0) / d * ch.ln() + g * (q - q0) / d * lm
        }
    };
    Ok(ConstantValue::new(
        "k_offdiag_from_norms",
        br,
        &[("ch", ch), ("m_norm", m_norm), ("p", p), ("q", q), ("p0", p0), ("q0", q0)],
        n.eval_log(log_arg),
    )
    .degenerate(n, ch))
}

/// How to read the Banach-function-space diagonal constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum KleForm {
    /// The diagonal constant at exponent `q₀` with `‖M‖` in place of the characteristic.
    Proof,
    /// Literal exponents, with the free `p` supplied.
    Printed { p: f64 },
}

/// Diagonal extrapolation constant for a Banach function space `E` in terms of
/// `‖M‖_{(E^{1/q₀})'}`. The final bound is `4C·K`.
pub fn kle(m_norm: f64, q0: f64, p0: f64, n: &RateFunction, c_bar: f64, form: KleForm) -> Result<ConstantValue> {
    check_open(q0, "q0")?;
    let mut out = match form {
        KleForm::Proof => k_diag(m_norm, q0, p0, n, c_bar)?,
        KleForm::Printed { p } => {
            check_char(m_norm)?;
            let qc = conj(q0);
            let base = (2.0 * c_bar * qc).ln();
            let br = branch(q0, p0);
            let log_arg = match br {
                Branch::Equal => m_norm.ln(),
                Branch::Below => (p0 - p) * base + (qc - 1.0) * (p0 - qc) * m_norm.ln(),
                Branch::Above => {
                    (p0 - q0) / (q0 * p - 1.0) * base + (2.0 * p0 + q0 * p0 + 1.0) / (q0 - 1.0).powi(2) * m_norm.ln()
                }
            };
            let mut c = ConstantValue::new("kle_printed", br, &[("p", p)], n.eval_log(log_arg)).degenerate(n, m_norm);
            c.inputs.insert("c_bar".into(), c_bar);
            c
        }
    };
    out.formula = match form {
        KleForm::Proof => "kle_proof".into(),
        KleForm::Printed { .. } => "kle_printed".into(),
    };
    out.inputs.remove("ap");
    out.inputs.remove("p");
    if let KleForm::Printed { p } = form {
        out.inputs.insert("p".into(), p);
    }
    out.inputs.insert("m_norm".into(), m_norm);
    out.inputs.insert("q0".into(), q0);
    out.inputs.insert("p0".into(), p0);
    Ok(out)
}

/// An upper bound for a maximal-operator norm with its ingredients. The structural
/// constant in front is unspecified and carried as `slack = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalBound {
    pub value: f64,
    pub eps0: f64,
    pub ap: f64,
    pub ap_minus: f64,
    pub ap_plus: f64,
    pub slack: f64,
}

fn interpolation_parts(space: &Space, w: &Weight, p: f64, s: f64) -> Result<(f64, f64, f64, f64)> {
    check_open(p, "p")?;
    if !(s.is_finite() && s > 1.0) {
        return Err(Error::InvalidExponent(format!("s must lie in (1, inf), got {s}")));
    }
    let ap = ap_characteristic(space, w, p)?.value;
    let tau = space.structural_constants(CbarMode::Formula)?.tau;
    let e0 = eps0_from(p, tau, ap)?;
    let minus = ap_characteristic(space, w, p - e0)?.value;
    let plus = ap_characteristic(space, w, p + e0)?.value;
    Ok((e0, ap, minus, plus))
}

/// `2^{1/p} ε₀^{-1}[p[w]_{A_{p-ε₀}} + (p-ε₀)[w]_{A_{p+ε₀}}]`, a bound for `‖M‖` on `L^{p,s}_w`.
pub fn marcinkiewicz_maximal_bound(space: &Space, w: &Weight, p: f64, s: f64) -> Result<MaximalBound> {
    let (e0, ap, minus, plus) = interpolation_parts(space, w, p, s)?;
    let value = 2f64.powf(1.0 / p) / e0 * (p * minus + (p - e0) * plus);
    Ok(MaximalBound { value, eps0: e0, ap, ap_minus: minus, ap_plus: plus, slack: 1.0 })
}

/// `2^{1/p'} ε₀^{-1}[p'[w]_{A_{p-ε₀}} + (p-ε₀)'[w]_{A_{p+ε₀}}]`, a bound for
/// `f ↦ w^{-1}Mf` measured in `‖w^{-1}·‖_{L^{p',s'}_w}`.
pub fn dual_maximal_bound(space: &Space, w: &Weight, p: f64, s: f64) -> Result<MaximalBound> {
    let (e0, ap, minus, plus) = interpolation_parts(space, w, p, s)?;
    let value = 2f64.powf(1.0 / conj(p)) / e0 * (conj(p) * minus + conj(p - e0) * plus);
    Ok(MaximalBound { value, eps0: e0, ap, ap_minus: minus, ap_plus: plus, slack: 1.0 })
}

/// `‖M‖` on `L^{p',s'}` with the `w^{-1}` tilde.
pub fn tilde_norm(space: &Space, w: &Weight, p: f64, s: f64) -> Result<FunctionNorm> {
    let inv: Vec<f64> = w.values().iter().map(|v| 1.0 / v).collect();
    FunctionNorm::new(space, NormSpec::Lorentz { p, s }, w)?.with_multiplier(inv)
}

/// Diagonal Lorentz-space constant with its stability sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K1Lorentz {
    pub constant: ConstantValue,
    /// Estimated `‖M‖` on the tilde space: search lower bound and certified upper bound.
    pub m_lower: f64,
    pub m_upper: f64,
    pub eps0: f64,
    /// `(ε, K₁ at p-ε)` along the stability grid.
    pub stability: Vec<(f64, f64)>,
    pub stability_sup: f64,
}

/// Parameters of [`k1_lorentz`].
#[derive(Debug, Clone)]
pub struct K1Params {
    pub p: f64,
    pub s: f64,
    pub q0: f64,
    pub p0: f64,
    pub budget: usize,
    pub seed: u64,
    /// Perturbations `ε` for the stability sweep.
    pub stability_grid: Vec<f64>,
}

fn k1_at(space: &Space, w: &Weight, p: f64, s: f64, q0: f64, e0: f64, budget: usize, seed: u64) -> Result<(f64, f64)> {
    if !(q0 > 1.0 && q0 < p && p - e0 < p / q0 && s / q0 > 1.0) {
        return Err(Error::Q0OutOfRange(format!(
            "need 1 < q0 < p, p - eps0 < p/q0 and s/q0 > 1 (p = {p}, s = {s}, q0 = {q0}, eps0 = {e0})"
        )));
    }
    let norm = tilde_norm(space, w, conj(p / q0), conj(s / q0))?;
    let est = operator_norm(space, &OperatorSpec::Maximal { m: 1 }, &norm, &norm, None, budget, seed)?;
    Ok((est.lower.max(1.0), est.upper))
}

/// `K₁` evaluated with the estimated tilde-space maximal norm, plus the sup of the same
/// constant over `p - ε` along the stability grid.
pub fn k1_lorentz(space: &Space, w: &Weight, prm: &K1Params, n: &RateFunction) -> Result<K1Lorentz> {
    check_open(prm.p, "p")?;
    let ap = ap_characteristic(space, w, prm.p)?.value;
    let sc = space.structural_constants(CbarMode::Formula)?;
    let e0 = eps0_from(prm.p, sc.tau, ap)?;
    let (lo, hi) = k1_at(space, w, prm.p, prm.s, prm.q0, e0, prm.budget, prm.seed)?;
    let mut constant = kle(lo, prm.q0, prm.p0, n, sc.c_bar, KleForm::Proof)?;
    constant.formula = "k1_lorentz".into();
    constant.inputs.insert("p".into(), prm.p);
    constant.inputs.insert("s".into(), prm.s);
    let mut stability = Vec::new();
    for &e in &prm.stability_grid {
        let pe = prm.p - e;
        let ape = ap_characteristic(space, w, pe)?.value;
        let e0e = eps0_from(pe, sc.tau, ape)?;
        let (l, _) = k1_at(space, w, pe, prm.s, prm.q0, e0e, prm.budget, prm.seed)?;
        stability.push((e, kle(l, prm.q0, prm.p0, n, sc.c_bar, KleForm::Proof)?.value));
    }
    let stability_sup = stability.iter().map(|x| x.1).fold(constant.value, f64::max);
    Ok(K1Lorentz { constant, m_lower: lo, m_upper: hi, eps0: e0, stability, stability_sup })
}

fn phi_core(x: f64, p: f64, q: f64, a: f64) -> Result<f64> {
    let d = 1.0 - a * (x - q);
    if !(d > 0.0) {
        return Err(Error::DomainError(format!("1 - A(x - q) = {d} must be positive")));
    }
    // Bracket over a common denominator; the constant term vanishes when A = 1/p - 1/q.
    let bracket = (x * (1.0 - p * a) + (p - q + p * a * q)) / d;
    if bracket < 0.0 {
        return Err(Error::DomainError(format!("negative base {bracket} at x = {x}")));
    }
    Ok(bracket.powf(1.0 - (x - q) * a))
}

/// `(Φ(x), Ψ(x))` with `Φ(x) = [(x-q)/(1-A(x-q)) + p]^{1-(x-q)A}` and `Ψ(x) = Φ(x^θ)`.
pub fn phi_psi(x: f64, p: f64, q: f64, theta: f64, a: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0 && theta > 0.0) {
        return Err(Error::DomainError(format!("need x >= 0 and theta > 0, got x = {x}, theta = {theta}")));
    }
    Ok((phi_core(x, p, q, a)?, phi_core(x.powf(theta), p, q, a)?))
}

/// The same pair with `A` replaced by `α`.
pub fn phi_psi_63(t: f64, p: f64, q: f64, theta: f64, alpha: f64) -> Result<(f64, f64)> {
    phi_psi(t, p, q, theta, alpha)
}

/// `Ψ(x)/x^{qθ/p}` along a grid, with min and max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSweep {
    pub points: Vec<(f64, f64)>,
    pub min: f64,
    pub max: f64,
}

pub fn psi_ratio_sweep(grid: &[f64], p: f64, q: f64, theta: f64, a: f64) -> Result<AsymptoticSweep> {
    let mut points = Vec::with_capacity(grid.len());
    for &x in grid {
        let (_, psi) = phi_psi(x, p, q, theta, a)?;
        points.push((x, psi / x.powf(q * theta / p)));
    }
    let min = points.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(AsymptoticSweep { points, min, max })
}

/// `η = p - 1/(A + 1/(q-ε))`, the solution of `1/(p-η) - 1/(q-ε) = A`.
pub fn grand_pairing(eps: f64, p: f64, q: f64, a: f64) -> Result<f64> {
    if !(eps >= 0.0 && eps < q) {
        return Err(Error::DomainError(format!("epsilon must lie in [0, {q}), got {eps}")));
    }
    let d = a + 1.0 / (q - eps);
    if !(d > 0.0) {
        return Err(Error::DomainError(format!("A + 1/(q - eps) = {d} must be positive")));
    }
    let eta = p - 1.0 / d;
    if !(eta >= 0.0 && eta < p) {
        return Err(Error::DomainError(format!("eta = {eta} falls outside [0, {p})")));
    }
    Ok(eta)
}

/// `ε = q - 1/(1/(p-η) - A)`.
pub fn grand_pairing_inverse(eta: f64, p: f64, q: f64, a: f64) -> Result<f64> {
    if !(eta >= 0.0 && eta < p) {
        return Err(Error::DomainError(format!("eta must lie in [0, {p}), got {eta}")));
    }
    let d = 1.0 / (p - eta) - a;
    if !(d > 0.0) {
        return Err(Error::DomainError(format!("1/(p - eta) - A = {d} must be positive")));
    }
    let eps = q - 1.0 / d;
    if !(eps >= 0.0 && eps < q) {
        return Err(Error::DomainError(format!("epsilon = {eps} falls outside [0, {q})")));
    }
    Ok(eps)
}

/// `|1/(p-η) - 1/(q-ε) - A|`.
pub fn pairing_residual(eps: f64, eta: f64, p: f64, q: f64, a: f64) -> f64 {
    (1.0 / (p - eta) - 1.0 / (q - eps) - a).abs()
}

/// Truncated `Σ_{k<K} M^k h / (2N)^k` with its certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubioIterate {
    pub rh: Vec<f64>,
    /// `M^K h / (2N)^{K-1}`: pointwise `M(𝓡h) ≤ 2N·𝓡h + tail`.
    pub tail: Vec<f64>,
    /// `max tail`.
    pub tail_bound: f64,
    /// Norm of the omitted terms is at most `‖h‖ 2^{1-K}`.
    pub norm_tail_bound: f64,
    /// `‖M^k h‖` for `k = 0..K`.
    pub term_norms: Vec<f64>,
    pub n_up: f64,
    pub k_terms: usize,
}

/// Rubio de Francia iteration with a certified operator-norm upper bound `n_up`
/// for `M` in the norm `dual`.
pub fn rubio_iterate(space: &Space, h: &[f64], dual: &FunctionNorm, n_up: f64, k_terms: usize) -> Result<RubioIterate> {
    check_len(space, h)?;
    if k_terms == 0 {
        return Err(Error::BudgetZero);
    }
    if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidSample("h must be finite and nonnegative".into()));
    }
    if !(n_up.is_finite() && n_up >= 1.0) {
        return Err(Error::NupTooSmall(format!("certificate {n_up} is below 1")));
    }
    let h_norm = dual.eval(h);
    let mut rh = h.to_vec();
    let mut term = h.to_vec();
    let mut term_norms = vec![h_norm];
    let mut scale = 1.0;
    for k in 1..=k_terms {
        term = maximal(space, &term)?;
        let tn = dual.eval(&term);
        if tn > n_up.powi(k as i32) * h_norm * (1.0 + 1e-12) {
            return Err(Error::NupTooSmall(format!(
                "term {k} has norm {tn} above {} = N^k ||h||",
                n_up.powi(k as i32) * h_norm
            )));
        }
        scale /= 2.0 * n_up;
        if k == k_terms {
            break;
        }
        term_norms.push(tn);
        for (r, t) in rh.iter_mut().zip(&term) {
            *r += t * scale;
        }
    }
    // `term` now holds M^K h and `scale` is (2N)^{-K}.
    let tail: Vec<f64> = term.iter().map(|t| t * scale * 2.0 * n_up).collect();
    let tail_bound = tail.iter().copied().fold(0.0, f64::max);
    Ok(RubioIterate {
        rh,
        tail,
        tail_bound,
        norm_tail_bound: h_norm * 2f64.powi(1 - k_terms as i32),
        term_norms,
        n_up,
        k_terms,
    })
}

/// A certified upper bound for `‖M‖` in a given norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NupCertificate {
    pub value: f64,
    /// `N(1)/min_x N(e_x)`, valid for every lattice norm.
    pub crude: f64,
    /// `c̄ p'[w]^{1/(p-1)}` with the formula-mode `c̄`, for plain weighted Lebesgue norms.
    pub buckley: Option<f64>,
}

pub fn n_up_certificate(space: &Space, w: &Weight, norm: &FunctionNorm) -> Result<NupCertificate> {
    let n = space.len();
    let min_unit = (0..n)
        .map(|x| {
            let mut e = vec![0.0; n];
            e[x] = 1.0;
            norm.eval(&e)
        })
        .fold(f64::INFINITY, f64::min);
    let crude = (norm.eval(&vec![1.0; n]) / min_unit).max(1.0);
    let buckley = match (norm.spec(), norm.multiplier()) {
        (NormSpec::Lorentz { p, s }, None) if p == s && *p > 1.0 => {
            let ap = ap_characteristic(space, w, *p)?.value;
            let c = space.structural_constants(CbarMode::Formula)?.c_bar;
            Some(c * conj(*p) * ap.powf(1.0 / (p - 1.0)))
        }
        _ => None,
    };
    let value = buckley.map_or(crude, |b| b.min(crude));
    Ok(NupCertificate { value, crude, buckley })
}

/// `true` when `f` is nondecreasing along the sorted probe points.
pub fn nondecreasing_on(probe: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<bool> {
    let mut xs = probe.to_vec();
    xs.sort_by(f64::total_cmp);
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    Ok(vals.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-14)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::interval_grid;

    fn id() -> RateFunction {
        RateFunction::identity()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(gamma(2.0, 4.0).unwrap(), 0.75);
        assert_eq!(gamma(1.0, 4.0).unwrap(), 0.25);
    }

    #[test]
    fn k_diag_examples() {
        let c = 2.0;
        let k = k_diag(1.0, 1.5, 2.0, &id(), c).unwrap();
        assert_eq!(k.branch, Branch::Below);
        assert!(util::rel_diff(k.value, (2.0 * c * 3.0f64).powf(0.5)) < 1e-14);
        let k = k_diag(3.7, 2.0, 2.0, &id(), c).unwrap();
        assert_eq!(k.branch, Branch::Equal);
        assert!(util::rel_diff(k.value, 3.7) < 1e-15);
        let probe = [1.0, 1.5, 2.0, 5.0, 40.0];
        for p in [1.5, 3.0] {
            assert!(nondecreasing_on(&probe, |a| Ok(k_diag(a, p, 2.0, &id(), c)?.value)).unwrap());
        }
    }

    #[test]
    fn k_diag_from_norms_degenerate() {
        let k = k_diag_from_norms(2.5, 7.0, 2.0, 2.0, &id()).unwrap();
        assert!((k.value - 2.5).abs() < 1e-14);
    }

    #[test]
    fn k_offdiag_examples() {
        let c = 2.0;
        // p = 2, q = 4, p0 = 1.5, q0 = 2.4: 1/2 - 1/4 = 2/3 - 5/12.
        let (p, q, p0, q0) = (2.0, 4.0, 1.5, 2.4);
        let k = k_offdiag(1.0, p, q, p0, q0, &id(), c).unwrap();
        let g = gamma(p0, q0).unwrap();
        let expect = (2.0 * c * (1.0 + q / 2.0)).powf(g * (q - q0) / (g * q - 1.0));
        assert_eq!(k.paired_form.branch, Branch::Above);
        assert!(util::rel_diff(k.estimate_form.value, expect) < 1e-13);
        let k = k_offdiag(3.0, 2.0, 4.0, 2.0, 4.0, &id(), c).unwrap();
        assert!((k.paired_form.value - 3.0).abs() < 1e-14 && (k.estimate_form.value - 3.0).abs() < 1e-14);
        assert!(matches!(k_offdiag(1.0, 2.0, 4.0, 2.0, 3.0, &id(), c), Err(Error::ScalingMismatch(_))));
        // Below: the two printings differ in the characteristic exponent.
        let k = k_offdiag(2.0, 1.5, 2.0, 2.0, 3.0, &id(), c).unwrap();
        assert_eq!(k.estimate_form.branch, Branch::Below);
        assert!(k.estimate_form.value != k.paired_form.value);
        let probe = [1.0, 2.0, 10.0];
        assert!(nondecreasing_on(&probe, |a| Ok(k_offdiag(a, 1.5, 2.0, 2.0, 3.0, &id(), c)?.estimate_form.value)).unwrap());
    }

    #[test]
    fn log_space_survives_overflow() {
        let k = k_diag(1e10, 1.01, 40.0, &id(), 307520.0).unwrap();
        assert!(k.log_value.is_finite());
        assert!(k.value.is_infinite());
    }

    #[test]
    fn kle_forms() {
        let a = kle(3.0, 1.5, 2.0, &id(), 2.0, KleForm::Proof).unwrap();
        let b = k_diag(3.0, 1.5, 2.0, &id(), 2.0).unwrap();
        assert_eq!(a.value, b.value);
        let c = kle(3.0, 1.5, 2.0, &id(), 2.0, KleForm::Printed { p: 1.5 }).unwrap();
        assert!(c.value.is_finite() && c.formula == "kle_printed");
    }

    #[test]
    fn maximal_bounds_unit_weight() {
        let g = interval_grid(8).unwrap();
        let w = Weight::ones(&g);
        let b = marcinkiewicz_maximal_bound(&g, &w, 2.0, 2.0).unwrap();
        let e0 = b.eps0;
        assert!(util::rel_diff(b.value, 2f64.sqrt() / e0 * (4.0 - e0)) < 1e-12);
        let d = dual_maximal_bound(&g, &w, 3.0, 2.0).unwrap();
        assert!(d.value > 0.0);
    }

    #[test]
    fn phi_psi_examples() {
        let (phi0, _) = phi_psi(0.0, 2.0, 4.0, 1.0, 0.25).unwrap();
        assert!(phi0.abs() < 1e-12);
        let (phiq, _) = phi_psi(4.0, 2.0, 4.0, 1.0, 0.25).unwrap();
        assert!((phiq - 2.0).abs() < 1e-14);
        assert!(matches!(phi_psi(10.0, 2.0, 4.0, 1.0, 0.25), Err(Error::DomainError(_))));
    }

    #[test]
    fn pairing_examples() {
        assert!(grand_pairing(0.0, 2.0, 4.0, 0.25).unwrap().abs() < 1e-15);
        let eta = grand_pairing(1.0, 2.0, 4.0, 0.25).unwrap();
        assert!((eta - 2.0 / 7.0).abs() < 1e-15);
        assert!(pairing_residual(1.0, eta, 2.0, 4.0, 0.25) < 1e-15);
        assert!((grand_pairing_inverse(eta, 2.0, 4.0, 0.25).unwrap() - 1.0).abs() < 1e-14);
        let xs = [0.1, 0.5, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|&e| grand_pairing(e, 2.0, 4.0, 0.25).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rubio_constant_h() {
        let g = interval_grid(8).unwrap();
        let w = Weight::ones(&g);
        let norm = FunctionNorm::new(&g, NormSpec::Banach { p: 2.0, s: 2.0 }, &w).unwrap();
        let n_up = 3.0;
        let r = rubio_iterate(&g, &[1.0; 8], &norm, n_up, 64).unwrap();
        let expect = 1.0 / (1.0 - 1.0 / (2.0 * n_up));
        for v in &r.rh {
            assert!(util::rel_diff(*v, expect) < 1e-14);
        }
        let z = rubio_iterate(&g, &[0.0; 8], &norm, n_up, 64).unwrap();
        assert!(z.rh.iter().all(|&v| v == 0.0));
        assert!(matches!(rubio_iterate(&g, &[1.0; 8], &norm, 0.5, 8), Err(Error::NupTooSmall(_))));
    }

    #[test]
    fn rubio_detects_bad_certificate() {
        let g = interval_grid(16).unwrap();
        let w = Weight::ones(&g);
        let norm = FunctionNorm::new(&g, NormSpec::Lorentz { p: 2.0, s: 2.0 }, &w).unwrap();
        let mut h = vec![0.0; 16];
        h[0] = 1.0;
        assert!(matches!(rubio_iterate(&g, &h, &norm, 1.0, 8), Err(Error::NupTooSmall(_))));
    }

    #[test]
    fn certificate_prefers_smaller() {
        let g = interval_grid(8).unwrap();
        let w = Weight::ones(&g);
        let norm = FunctionNorm::new(&g, NormSpec::Lorentz { p: 2.0, s: 2.0 }, &w).unwrap();
        let c = n_up_certificate(&g, &w, &norm).unwrap();
        assert!(c.buckley.is_some());
        assert!(c.value <= c.crude);
        assert!((c.crude - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rate_function_checks() {
        assert!(id().check_monotone(&[1.0, 2.0, 3.0]).is_ok());
        let bad = RateFunction::Custom(Arc::new(|x| -x));
        assert!(bad.check_monotone(&[1.0, 2.0]).is_err());
    }
}
