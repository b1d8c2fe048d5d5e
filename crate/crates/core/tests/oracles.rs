//! Brute-force oracles and hand-computed values.

use lorext::lorentz::{grand_lorentz_norm, iwaniec_sbordone_norm, lorentz_norm_rearr};
use lorext::operators::{fractional_integral, fractional_maximal, hilbert, maximal, DiagonalKernel};
use lorext::weights::{a1_characteristic, ap_characteristic};
use lorext::{interval_grid, Space, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every open ball `{y : d(c,y) < r}`, listed once per center and radius.
fn brute_balls(s: &Space) -> Vec<Vec<usize>> {
    let n = s.len();
    let mut out = Vec::new();
    for c in 0..n {
        let mut radii: Vec<f64> = (0..n).map(|y| s.d(c, y)).collect();
        radii.push(radii.iter().copied().fold(0.0, f64::max) + 1.0);
        for r in radii {
            let members: Vec<usize> = (0..n).filter(|&y| s.d(c, y) < r).collect();
            if !members.is_empty() {
                out.push(members);
            }
        }
    }
    out
}

fn avg(s: &Space, b: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    let m: f64 = b.iter().map(|&y| s.mass()[y]).sum();
    b.iter().map(|&y| f(y) * s.mass()[y]).sum::<f64>() / m
}

fn brute_maximal(s: &Space, f: &[f64]) -> Vec<f64> {
    let balls = brute_balls(s);
    (0..s.len())
        .map(|x| balls.iter().filter(|b| b.contains(&x)).map(|b| avg(s, b, |y| f[y].abs())).fold(0.0, f64::max))
        .collect()
}

fn brute_ap(s: &Space, w: &[f64], p: f64) -> f64 {
    let e = 1.0 / (1.0 - p);
    brute_balls(s)
        .iter()
        .map(|b| avg(s, b, |y| w[y]) * avg(s, b, |y| w[y].powf(e)).powf(p - 1.0))
        .fold(0.0, f64::max)
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> Space {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]).collect();
    let mut dist = vec![0.0; n * n];
    let mut ids = Vec::new();
    for i in 0..n {
        ids.push(format!("p{i}"));
        for j in 0..n {
            // Taxicab metric plus a small offset so coincident points stay distinct.
            let d = (pts[i][0] - pts[j][0]).abs() + (pts[i][1] - pts[j][1]).abs();
            dist[i * n + j] = if i == j { 0.0 } else { d + 0.5 };
        }
    }
    let mass = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    Space::new(ids, dist, mass).unwrap()
}

fn three_line() -> Space {
    Space::from_line(&[0.0, 1.0, 2.0], vec![1.0; 3]).unwrap()
}

#[test]
fn maximal_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let n = rng.random_range(1..12);
        let s = random_space(&mut rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = maximal(&s, &f).unwrap();
        let want = brute_maximal(&s, &f);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-13 * b.max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn ap_and_a1_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let n = rng.random_range(1..10);
        let s = random_space(&mut rng, n);
        let wv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5f64).exp()).collect();
        let w = Weight::new(&s, wv.clone()).unwrap();
        for p in [1.5, 2.0, 3.5] {
            let got = ap_characteristic(&s, &w, p).unwrap().value;
            let want = brute_ap(&s, &wv, p);
            assert!((got - want).abs() <= 1e-12 * want, "p = {p}: {got} vs {want}");
        }
        let mw = brute_maximal(&s, &wv);
        let a1 = mw.iter().zip(&wv).map(|(m, w)| m / w).fold(0.0, f64::max);
        let got = a1_characteristic(&s, &w).unwrap().value;
        assert!((got - a1).abs() <= 1e-12 * a1);
    }
}

#[test]
fn fractional_maximal_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let n = rng.random_range(1..10);
        let s = random_space(&mut rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let alpha = 0.3;
        let balls = brute_balls(&s);
        let want: Vec<f64> = (0..n)
            .map(|x| {
                balls
                    .iter()
                    .filter(|b| b.contains(&x))
                    .map(|b| {
                        let m: f64 = b.iter().map(|&y| s.mass()[y]).sum();
                        m.powf(alpha) * avg(&s, b, |y| f[y])
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let got = fractional_maximal(&s, &f, alpha).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-13 * b.max(1.0));
        }
    }
}

#[test]
fn fractional_integral_matches_direct_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let n = rng.random_range(1..10);
        let s = random_space(&mut rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = 0.4;
        let want: Vec<f64> = (0..n)
            .map(|x| {
                (0..n)
                    .map(|y| {
                        let k = if x == y {
                            s.mass()[x].powf(alpha - 1.0)
                        } else {
                            let r = s.d(x, y);
                            let m: f64 = (0..n).filter(|&z| s.d(x, z) < r).map(|z| s.mass()[z]).sum();
                            m.powf(alpha - 1.0)
                        };
                        k * f[y] * s.mass()[y]
                    })
                    .sum()
            })
            .collect();
        let got = fractional_integral(&s, &f, alpha, DiagonalKernel::Consistent).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn frozen_lorentz_values() {
    let s = three_line();
    let w = Weight::ones(&s);
    let f = [3.0, 1.0, 2.0];
    let l21 = lorentz_norm_rearr(&s, &f, &w, 2.0, 1.0).unwrap();
    assert!((l21 - (1.0 + 2f64.sqrt() + 3f64.sqrt())).abs() < 1e-14);
    assert_eq!(lorentz_norm_rearr(&s, &f, &w, 2.0, f64::INFINITY).unwrap(), 3.0);
    let l22 = lorentz_norm_rearr(&s, &f, &w, 2.0, 2.0).unwrap();
    assert!((l22 - 14f64.sqrt()).abs() < 1e-14);
}

#[test]
fn frozen_maximal_and_hilbert() {
    let s = three_line();
    let m = maximal(&s, &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(m, vec![1.0, 0.5, 1.0 / 3.0]);
    let g = interval_grid(4).unwrap();
    let h = hilbert(&g, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    let want = [0.0, 1.0, 0.5, 1.0 / 3.0];
    for (a, b) in h.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn frozen_ap_two_points() {
    let s = Space::from_line(&[0.0, 1.0], vec![1.0, 1.0]).unwrap();
    let w = Weight::new(&s, vec![1.0, 4.0]).unwrap();
    assert!((ap_characteristic(&s, &w, 2.0).unwrap().value - 1.5625).abs() < 1e-15);
}

#[test]
fn frozen_grand_norm_of_indicator() {
    // ‖χ_X‖ with w(X) = 1 is sup_ε ε^{θ/(p-ε)}; on the grid {0.5, 0.25} at p = 2, θ = 1 the
    // larger point wins: 0.5^{1/1.5}.
    let s = three_line();
    let w = Weight::new(&s, vec![1.0 / 3.0; 3]).unwrap();
    let grid = [0.5, 0.25];
    let g = grand_lorentz_norm(&s, &[1.0; 3], &w, 2.0, 3.0, 1.0, Some(&grid)).unwrap();
    assert!((g.value - 0.5f64.powf(1.0 / 1.5)).abs() < 1e-15);
    assert_eq!(g.witness_eps, 0.5);
    let is = iwaniec_sbordone_norm(&s, &[1.0; 3], &w, 2.0, 1.0, Some(&grid)).unwrap();
    assert!((is.value - g.value).abs() < 1e-15);
}

#[test]
fn power_weight_ap_converges_to_continuum() {
    // On (0,1), [x^a]_{A_2} is attained on intervals (0,t) for a in (-1,1):
    // avg x^a · avg x^{-a} = 1/((1+a)(1-a)).
    let a: f64 = 0.5;
    let exact = 1.0 / ((1.0 + a) * (1.0 - a));
    let g = interval_grid(256).unwrap();
    let w = Weight::power(&g, a).unwrap();
    let got = ap_characteristic(&g, &w, 2.0).unwrap().value;
    assert!((got - exact).abs() / exact < 0.02, "{got} vs {exact}");
}
