//! Acceptance suite: one line per criterion, exit status 1 if any fails.

use std::time::{Duration, Instant};

use lorext::extrapolation::{grand_pairing, grand_pairing_inverse, n_up_certificate, pairing_residual, phi_psi, psi_ratio_sweep, rubio_iterate};
use lorext::lorentz::{lebesgue, lorentz_norm_dist, lorentz_norm_rearr, FunctionNorm, NormSpec};
use lorext::operators::{hilbert, maximal, operator_norm, OperatorSpec};
use lorext::space::CbarMode;
use lorext::util::{conj, geometric_desc, rel_diff};
use lorext::verify::{closing_products, verify, Exponents, Scenario, Symbol, Theorem, WeightFamily};
use lorext::weights::{a1_characteristic, ap_characteristic, apq_characteristic};
use lorext::{interval_grid, Space, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NORM_FORM_TOL: f64 = 1e-12;
const INDICATOR_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-12;
const HILBERT_ERR_MAX: f64 = 2e-2;
const HILBERT_HALVING: (f64, f64) = (1.6, 2.5);
const PHI_ZERO_TOL: f64 = 1e-12;
const PSI_BAND: (f64, f64) = (0.1, 10.0);
const PAIRING_TOL: f64 = 1e-12;
const CLOSING_TOL: f64 = 1e-12;
const STABILITY_TOL: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
    limit: Option<Duration>,
}

fn random_space(rng: &mut ChaCha8Rng, max_n: usize) -> Space {
    let n = rng.random_range(1..=max_n);
    let coords: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0f64).round() / 2.0 + rng.random_range(0.0..1e-3)).collect();
    let mass: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    Space::from_line(&coords, mass).expect("distinct coordinates")
}

fn random_weight(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.random_range(-2.0..2.0f64)).exp()).collect()
}

fn random_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(-3..=3) as f64,
            _ => rng.random_range(-5.0..5.0),
        })
        .collect()
}

fn norm_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let s = random_space(&mut rng, 32);
        let w = Weight::new(&s, random_weight(&mut rng, s.len())).unwrap();
        let f = random_sample(&mut rng, s.len());
        let p = [1.5, 2.0, 3.0][rng.random_range(0..3)];
        let q = [1.0, 2.0, 5.0, f64::INFINITY][rng.random_range(0..4)];
        let a = lorentz_norm_rearr(&s, &f, &w, p, q).unwrap();
        let b = lorentz_norm_dist(&s, &f, &w, p, q).unwrap();
        worst = worst.max(rel_diff(a, b));
    }
    Outcome {
        pass: worst <= NORM_FORM_TOL,
        detail: format!("max rel diff {worst:.2e} (tol {NORM_FORM_TOL:.0e}) over 500 draws"),
        limit: Some(Duration::from_secs(10)),
    }
}

fn indicator_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_ind = 0.0f64;
    let mut worst_leb = 0.0f64;
    for _ in 0..200 {
        let s = random_space(&mut rng, 24);
        let w = Weight::new(&s, random_weight(&mut rng, s.len())).unwrap();
        let nu = w.nu(&s);
        let chi: Vec<f64> = (0..s.len()).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let p = rng.random_range(1.0..5.0);
        let q = [1.0, 1.5, 2.0, 4.0, f64::INFINITY][rng.random_range(0..5)];
        let we: f64 = chi.iter().zip(&nu).map(|(c, m)| c * m).sum();
        let got = lorentz_norm_rearr(&s, &chi, &w, p, q).unwrap();
        worst_ind = worst_ind.max(rel_diff(got, we.powf(1.0 / p)));
        let f = random_sample(&mut rng, s.len());
        let l = lorentz_norm_rearr(&s, &f, &w, p, p).unwrap();
        worst_leb = worst_leb.max(rel_diff(l, lebesgue(&f, &nu, p)));
    }
    Outcome {
        pass: worst_ind <= INDICATOR_TOL && worst_leb <= INDICATOR_TOL,
        detail: format!("indicator max rel diff {worst_ind:.2e}, s=p reduction {worst_leb:.2e} (tol {INDICATOR_TOL:.0e}) over 200 sets"),
        limit: None,
    }
}

fn muckenhoupt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut dual, mut apq, mut mono, mut below_one) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let s = random_space(&mut rng, 16);
        let w = Weight::new(&s, random_weight(&mut rng, s.len())).unwrap();
        let p = rng.random_range(1.1..4.0);
        let ap = ap_characteristic(&s, &w, p).unwrap().value;
        let sigma = w.powf(1.0 - conj(p)).unwrap();
        let ad = ap_characteristic(&s, &sigma, conj(p)).unwrap().value.powf(p - 1.0);
        dual = dual.max(rel_diff(ap, ad));
        let q = rng.random_range(p..p + 4.0);
        let lhs = apq_characteristic(&s, &w, p, q).unwrap().value;
        let rhs = ap_characteristic(&s, &w.powf(q).unwrap(), 1.0 + q / conj(p)).unwrap().value;
        apq = apq.max(rel_diff(lhs, rhs));
        let p2 = p + rng.random_range(0.0..3.0);
        let ap2 = ap_characteristic(&s, &w, p2).unwrap().value;
        let a1 = a1_characteristic(&s, &w).unwrap().value;
        mono = mono.max((ap2 / ap - 1.0).max(0.0)).max((ap / a1 - 1.0).max(0.0));
        below_one = below_one.max(1.0 - ap);
    }
    let pass = dual <= IDENTITY_TOL && apq <= IDENTITY_TOL && mono <= IDENTITY_TOL && below_one <= IDENTITY_TOL;
    Outcome {
        pass,
        detail: format!(
            "duality {dual:.2e}, A_pq identity {apq:.2e}, monotonicity excess {mono:.2e}, 1 - [w]_Ap max {below_one:.2e} (tol {IDENTITY_TOL:.0e}) over 200 weights"
        ),
        limit: Some(Duration::from_secs(30)),
    }
}

fn rubio() -> Outcome {
    const K: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    let mut worst_norm = 0.0f64;
    for k in 0..100 {
        let s = random_space(&mut rng, 16);
        let n = s.len();
        let w = Weight::new(&s, random_weight(&mut rng, n)).unwrap();
        let p = [1.5, 2.0, 3.0][k % 3];
        let q = [1.5, 2.0, 4.0][(k / 3) % 3];
        let inv: Vec<f64> = w.values().iter().map(|v| 1.0 / v).collect();
        let dual = FunctionNorm::new(&s, NormSpec::Banach { p: conj(p), s: conj(q) }, &w).unwrap().with_multiplier(inv).unwrap();
        let nup = n_up_certificate(&s, &w, &dual).unwrap().value;
        let h: Vec<f64> = (0..n).map(|_| if rng.random_range(0..4) == 0 { 0.0 } else { rng.random_range(0.0..5.0) }).collect();
        let it = match rubio_iterate(&s, &h, &dual, nup, K) {
            Ok(it) => it,
            Err(e) => {
                bad.push(format!("draw {k}: {e}"));
                continue;
            }
        };
        if it.rh.iter().zip(&h).any(|(r, h)| r < h) {
            bad.push(format!("draw {k}: h > Rh"));
        }
        let (nr, nh) = (dual.eval(&it.rh), dual.eval(&h));
        if nh > 0.0 {
            worst_norm = worst_norm.max(nr / nh);
        }
        if nr > 2.0 * nh {
            bad.push(format!("draw {k}: norm ratio {}", nr / nh));
        }
        let mrh = maximal(&s, &it.rh).unwrap();
        let hmax = h.iter().copied().fold(0.0, f64::max);
        let certified = hmax * 2.0 * nup / (2.0 * nup).powi(K as i32);
        for x in 0..n {
            if mrh[x] > 2.0 * nup * it.rh[x] + it.tail[x] + 1e-12 * mrh[x] {
                bad.push(format!("draw {k}: M(Rh) bound fails at {x}"));
            }
        }
        if it.tail_bound > certified * (1.0 + 1e-12) || certified > hmax * 2f64.powi(1 - K as i32) {
            bad.push(format!("draw {k}: tail {} above {certified}", it.tail_bound));
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("100 draws, K = {K}; max ||Rh||/||h|| = {worst_norm:.4}; tail <= 2N max(h) (2N)^-K <= 2^(1-K) max(h)")
        } else {
            format!("{} failures, first: {}", bad.len(), bad[0])
        },
        limit: None,
    }
}

fn buckley() -> Outcome {
    let g = interval_grid(128).unwrap();
    let c_bar = g.structural_constants(CbarMode::Interval).unwrap().c_bar;
    let mut worst = 0.0f64;
    let mut count = 0;
    for p in [1.5, 2.0, 3.0] {
        for a in [-0.5, -0.25, 0.0, 0.25, 0.5 * (p - 1.0), 0.9 * (p - 1.0)] {
            let w = Weight::power(&g, a).unwrap();
            let norm = FunctionNorm::new(&g, NormSpec::Lorentz { p, s: p }, &w).unwrap();
            let sigma = w.powf(1.0 - conj(p)).unwrap();
            let est = operator_norm(&g, &OperatorSpec::Maximal { m: 1 }, &norm, &norm, Some(sigma.values()), 64, 5).unwrap();
            let ap = ap_characteristic(&g, &w, p).unwrap().value;
            let bound = c_bar * conj(p) * ap.powf(1.0 / (p - 1.0));
            worst = worst.max(est.lower / bound);
            count += 1;
        }
    }
    Outcome {
        pass: worst <= 1.0,
        detail: format!("max lower/(2p'[w]^(1/(p-1))) = {worst:.4} over {count} (p, a) pairs on interval_grid(128)"),
        limit: Some(Duration::from_secs(60)),
    }
}

/// `sup_{x ∈ [0.1, 0.9]} |Hf_n(x) - log(x/(1-x))|` for the cell-wise extension of `Hf_n`.
fn hilbert_error(n: usize) -> f64 {
    let g = interval_grid(n).unwrap();
    let h = hilbert(&g, &vec![1.0; n]).unwrap();
    let exact = |x: f64| (x / (1.0 - x)).ln();
    let mut err = 0.0f64;
    for (i, v) in h.iter().enumerate() {
        let lo = (i as f64 / n as f64).max(0.1);
        let hi = ((i + 1) as f64 / n as f64).min(0.9);
        if lo > hi {
            continue;
        }
        err = err.max((v - exact(lo)).abs()).max((v - exact(hi)).abs());
    }
    err
}

fn hilbert_oracle() -> Outcome {
    let (e1, e2) = (hilbert_error(512), hilbert_error(1024));
    let factor = e1 / e2;
    Outcome {
        pass: e1 <= HILBERT_ERR_MAX && (HILBERT_HALVING.0..=HILBERT_HALVING.1).contains(&factor),
        detail: format!(
            "err(512) = {e1:.3e} (max {HILBERT_ERR_MAX:.0e}), err(1024) = {e2:.3e}, factor {factor:.3} (band [{}, {}])",
            HILBERT_HALVING.0, HILBERT_HALVING.1
        ),
        limit: None,
    }
}

fn phi_psi_check() -> Outcome {
    let (p, q, a, theta) = (2.0, 4.0, 0.25, 1.0);
    let phi0 = phi_psi(0.0, p, q, theta, a).unwrap().0;
    let sweep = psi_ratio_sweep(&geometric_desc(1e-2, 1e-6, 32), p, q, theta, a).unwrap();
    let mut residual = 0.0f64;
    // Admissible range: η < p - 1 exactly when ε < q - 1/(1 - A).
    let eps_max = q - 1.0 / (1.0 - a);
    for eps in geometric_desc(eps_max * (1.0 - 1e-6), 1e-6, 64) {
        let eta = grand_pairing(eps, p, q, a).unwrap();
        let back = grand_pairing_inverse(eta, p, q, a).unwrap();
        residual = residual.max(pairing_residual(eps, eta, p, q, a)).max(pairing_residual(back, eta, p, q, a));
    }
    let band = sweep.min >= PSI_BAND.0 && sweep.max <= PSI_BAND.1;
    Outcome {
        pass: phi0.abs() <= PHI_ZERO_TOL && band && residual <= PAIRING_TOL,
        detail: format!(
            "Phi(0) = {phi0:.1e}; Psi(x)/x^(q theta/p) in [{:.5}, {:.5}] (band [{}, {}]); pairing round trip {residual:.1e}",
            sweep.min, sweep.max, PSI_BAND.0, PSI_BAND.1
        ),
        limit: None,
    }
}

fn closing_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut spaces = vec![interval_grid(32).unwrap()];
    spaces.extend((0..4).map(|_| random_space(&mut rng, 16)));
    let mut worst = 0.0f64;
    let mut balls = 0;
    for s in &spaces {
        for alpha in [0.125, 0.25] {
            let p = 2.0;
            let q = p / (1.0 - alpha * p);
            let v = closing_products(s, &Weight::ones(s), p, q, alpha).unwrap();
            balls += v.len();
            worst = v.iter().fold(worst, |m, x| m.max((x - 1.0).abs()));
        }
    }
    Outcome {
        pass: worst <= CLOSING_TOL,
        detail: format!("max |product - 1| = {worst:.2e} (tol {CLOSING_TOL:.0e}) over {balls} balls, alpha in {{1/8, 1/4}}, p = 2"),
        limit: None,
    }
}

fn scenario(id: &str, theorem: Theorem, n: usize, exps: &[f64], alpha: Option<f64>, refine: bool) -> Scenario {
    Scenario {
        id: id.into(),
        theorem,
        space: serde_json::from_value(serde_json::json!({ "interval_grid": n })).unwrap(),
        weight_family: WeightFamily::Power { exponents: exps.to_vec() },
        exponents: Exponents { p: 2.0, s: 2.0, theta: 1.0, alpha, m: 1, q: None, r: None },
        budget: 32,
        slack: None,
        seed: 0,
        refine,
        tolerance: STABILITY_TOL,
        symbol: Symbol::Log,
        eps_grid: None,
    }
}

fn grand_suite() -> Outcome {
    let suff = [0.0, 0.3, 0.6];
    let nec = [0.0, 0.3, 0.6, 0.9];
    let mut lines = Vec::new();
    let mut pass = true;
    for (id, th, alpha) in [
        ("extrapolation_grand", Theorem::ExtrapolationGrand, None),
        ("maximal_grand", Theorem::MaximalGrand, None),
        ("cz_commutator", Theorem::CzCommutator, None),
        ("frac_commutator", Theorem::FracCommutator, Some(0.25)),
    ] {
        let r = verify(&scenario(id, th, 64, &suff, alpha, true)).unwrap();
        let mut worst = 0.0f64;
        for e in &r.entries {
            let s = e.sufficiency.as_ref().unwrap();
            let ok = s.max_ratio.is_finite() && s.stable;
            pass &= ok;
            worst = worst.max(s.relative_change.unwrap());
        }
        lines.push(format!("{id} drift {worst:.3}"));
    }
    for (id, th, alpha) in [
        ("maximal_necessity", Theorem::MaximalGrand, None),
        ("hilbert_necessity", Theorem::HilbertGrand, None),
        ("fractional_necessity", Theorem::FractionalEquivalence, Some(0.25)),
    ] {
        let r = verify(&scenario(id, th, 64, &nec, alpha, false)).unwrap();
        let c = r.comovement.as_ref().unwrap();
        let ok = c.strictly_increasing && c.spearman == Some(1.0);
        pass &= ok;
        lines.push(format!("{id} spearman {:.2}", c.spearman.unwrap_or(f64::NAN)));
    }
    Outcome { pass, detail: format!("{} (stability tol {STABILITY_TOL})", lines.join(", ")), limit: Some(Duration::from_secs(300)) }
}

fn determinism() -> Outcome {
    let sc: Scenario = serde_json::from_value(serde_json::json!({
        "id": "determinism",
        "theorem": "maximal_grand",
        "space": {"points": ["a", "b", "c", "d", "e"],
                  "dist": [[0, 1, 2, 3, 4], [1, 0, 1, 2, 3], [2, 1, 0, 1, 2], [3, 2, 1, 0, 1], [4, 3, 2, 1, 0]],
                  "mass": [1, 2, 1, 0.5, 1]},
        "weight_family": {"kind": "explicit", "weights": [[1, 1, 1, 1, 1], [1, 2, 3, 4, 5], [5, 1, 5, 1, 5]]},
        "exponents": {"p": 2, "s": 3},
        "budget": 16,
        "seed": 42
    }))
    .unwrap();
    let a = verify(&sc).unwrap();
    let b = verify(&sc).unwrap();
    let same = a.to_json() == b.to_json() && a.to_csv() == b.to_csv();
    Outcome { pass: same, detail: format!("two runs, seed 42: {} JSON bytes, identical = {same}", a.to_json().len()), limit: None }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("norm-form equivalence", norm_forms),
        ("indicator law", indicator_law),
        ("Muckenhoupt identities", muckenhoupt),
        ("Rubio de Francia iteration", rubio),
        ("Buckley consistency", buckley),
        ("Hilbert oracle", hilbert_oracle),
        ("Phi/Psi analysis", phi_psi_check),
        ("closing-product degeneracy", closing_degeneracy),
        ("grand-norm boundedness suite", grand_suite),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let el = t.elapsed();
        let in_time = out.limit.is_none_or(|l| el <= l);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let limit = out.limit.map(|l| format!(" (limit {} s)", l.as_secs())).unwrap_or_default();
        println!("{} {:>2} {name}: {}; {:.2} s{limit}", if pass { "PASS" } else { "FAIL" }, k + 1, out.detail, el.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
