//! Muckenhoupt-type characteristics as exact maxima over the ball list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorentz::lorentz_step;
use crate::operators::maximal;
use crate::par;
use crate::rearrange::{check_len, rearrange_masses, Weight};
use crate::space::{Ball, CbarMode, Space};
use crate::util::{self, conj};

/// A characteristic value and the ball attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub value: f64,
    pub witness: Ball,
}

fn ball_max(space: &Space, per_ball: impl Fn(&Ball) -> f64 + Sync + Send) -> Characteristic {
    let balls = space.balls();
    let vals = par::map_slice(&balls, per_ball);
    let (i, value) = par::argmax(&vals).expect("every space has a ball");
    Characteristic { value, witness: balls[i].clone() }
}

fn avg(space: &Space, ball: &Ball, g: impl Fn(usize) -> f64) -> f64 {
    let m = space.mass();
    util::sum(ball.members.iter().map(|&y| g(y) * m[y])) / ball.measure
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("p must lie in (1, inf), got {p}")))
    }
}

/// `[w]_{A_p} = max_B (avg_B w)(avg_B w^{1-p'})^{p-1}`.
pub fn ap_characteristic(space: &Space, w: &Weight, p: f64) -> Result<Characteristic> {
    check_p(p)?;
    check_len(space, w.values())?;
    let wv = w.values();
    let e = 1.0 - conj(p);
    Ok(ball_max(space, |b| avg(space, b, |y| wv[y]) * avg(space, b, |y| wv[y].powf(e)).powf(p - 1.0)))
}

/// `[w]_{A_1} = max_x Mw(x)/w(x)`, with the ball realizing it.
pub fn a1_characteristic(space: &Space, w: &Weight) -> Result<Characteristic> {
    check_len(space, w.values())?;
    let wv = w.values();
    let mw = maximal(space, wv)?;
    let ratios: Vec<f64> = mw.iter().zip(wv).map(|(m, v)| m / v).collect();
    let (x, value) = par::argmax(&ratios).expect("nonempty");
    let balls = space.balls();
    let witness = balls
        .iter()
        .filter(|b| b.contains(x))
        .max_by(|a, b| avg(space, a, |y| wv[y]).total_cmp(&avg(space, b, |y| wv[y])))
        .expect("singleton ball")
        .clone();
    Ok(Characteristic { value, witness })
}

/// Ball form of the A₁ constant: `max_B avg_B w / min_B w`.
pub fn a1_ball_form(space: &Space, w: &Weight) -> Result<Characteristic> {
    check_len(space, w.values())?;
    let wv = w.values();
    Ok(ball_max(space, |b| {
        avg(space, b, |y| wv[y]) / b.members.iter().map(|&y| wv[y]).fold(f64::INFINITY, f64::min)
    }))
}

/// Exponential `A_∞` characteristic and the Fujii–Wilson one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AinfCharacteristics {
    pub exponential: Characteristic,
    pub fujii_wilson: Characteristic,
}

pub fn ainf_characteristics(space: &Space, w: &Weight) -> Result<AinfCharacteristics> {
    check_len(space, w.values())?;
    let wv = w.values();
    let m = space.mass();
    let exponential = ball_max(space, |b| avg(space, b, |y| wv[y]) * avg(space, b, |y| -wv[y].ln()).exp());
    let n = space.len();
    let fujii_wilson = ball_max(space, |b| {
        let mut g = vec![0.0; n];
        for &y in &b.members {
            g[y] = wv[y];
        }
        let mg = maximal(space, &g).expect("length checked");
        let wb = util::sum(b.members.iter().map(|&y| wv[y] * m[y]));
        util::sum(b.members.iter().map(|&y| mg[y] * m[y])) / wb
    });
    Ok(AinfCharacteristics { exponential, fujii_wilson })
}

/// `[ρ]_{𝒜_{p,q}} = max_B (avg_B ρ^q)(avg_B ρ^{-p'})^{q/p'}`.
pub fn apq_characteristic(space: &Space, rho: &Weight, p: f64, q: f64) -> Result<Characteristic> {
    check_p(p)?;
    check_p(q)?;
    check_len(space, rho.values())?;
    let r = rho.values();
    let pc = conj(p);
    Ok(ball_max(space, |b| avg(space, b, |y| r[y].powf(q)) * avg(space, b, |y| r[y].powf(-pc)).powf(q / pc)))
}

/// `max_B ‖χ_B‖_{L^{p,s}_w} ‖w^{-1}χ_B‖_{L^{p',s'}_w} / μ(B)`.
pub fn aps_constant(space: &Space, w: &Weight, p: f64, s: f64) -> Result<Characteristic> {
    check_p(p)?;
    if !(s >= 1.0) {
        return Err(Error::InvalidExponent(format!("s must lie in [1, inf], got {s}")));
    }
    check_len(space, w.values())?;
    let (pc, sc) = (conj(p), conj(s));
    let wv = w.values();
    let m = space.mass();
    Ok(ball_max(space, |b| {
        let vals: Vec<f64> = b.members.iter().map(|&y| 1.0 / wv[y]).collect();
        let nu: Vec<f64> = b.members.iter().map(|&y| wv[y] * m[y]).collect();
        let wb = util::sum(nu.iter().copied());
        wb.powf(1.0 / p) * lorentz_step(&rearrange_masses(&vals, &nu), pc, sc) / b.measure
    }))
}

/// Self-improvement radius `ε₀ = (p-1)/(1 + τ[w]_{A_p})`.
pub fn openness_eps0(space: &Space, w: &Weight, p: f64) -> Result<f64> {
    let ap = ap_characteristic(space, w, p)?.value;
    let tau = space.structural_constants(CbarMode::Formula)?.tau;
    eps0_from(p, tau, ap)
}

pub fn eps0_from(p: f64, tau: f64, ap: f64) -> Result<f64> {
    let e = (p - 1.0) / (1.0 + tau * ap);
    if e > 0.0 && e < p - 1.0 {
        Ok(e)
    } else {
        Err(Error::DomainError(format!("openness radius {e} is outside (0, {})", p - 1.0)))
    }
}

/// All characteristics of one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCharacteristics {
    pub p: f64,
    pub ap: Characteristic,
    pub a1: Characteristic,
    pub ainf_exp: Characteristic,
    pub ainf_fw: Characteristic,
    /// `[w^{1/q}]_{𝒜_{p,q}}` when `q` is supplied.
    pub apq: Option<Characteristic>,
}

pub fn characteristics(space: &Space, w: &Weight, p: f64, q: Option<f64>) -> Result<WeightCharacteristics> {
    let ainf = ainf_characteristics(space, w)?;
    let apq = match q {
        Some(q) => Some(apq_characteristic(space, &w.powf(1.0 / q)?, p, q)?),
        None => None,
    };
    Ok(WeightCharacteristics {
        p,
        ap: ap_characteristic(space, w, p)?,
        a1: a1_characteristic(space, w)?,
        ainf_exp: ainf.exponential,
        ainf_fw: ainf.fujii_wilson,
        apq,
    })
}

/// JSON record of one characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicReport {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub value: f64,
    pub witness_ball: Ball,
}
