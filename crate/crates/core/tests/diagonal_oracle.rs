//! Eve-constrained diagonal solver against an independent penalty
//! projected-gradient oracle with 100 random starts.

use bdris::diagonal::{diag_objective, solve_diagonal_constrained, solve_diagonal_unconstrained, DiagForms, DiagSettings};
use bdris::linalg::{hermitian_eig, random_gaussian};
use bdris::model::QuadraticForms;
use bdris::{CMat, CVec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn psd(rng: &mut ChaCha8Rng, r: usize) -> CMat {
    let g = random_gaussian(rng, r, r + 1);
    &g * g.adjoint()
}

fn project_box(w: &CVec) -> CVec {
    w.map(|z| if z.norm() > 1.0 { z / z.norm() } else { z })
}

/// Maximizes `f − (β/2)·max(0, g − ε)²` over `|ω_i| ≤ 1` with backtracking
/// projected gradient and a growing β, then rescales onto the cap.
fn penalty_oracle(cb: &CMat, ce: &CMat, eps: f64, w0: CVec) -> f64 {
    let merit = |w: &CVec, beta: f64| {
        let over = (diag_objective(ce, w) - eps).max(0.0);
        diag_objective(cb, w) - 0.5 * beta * over * over
    };
    let mut w = w0;
    let mut step = 0.1;
    for beta in [1.0, 10.0, 1e2, 1e3, 1e4, 1e5] {
        for _ in 0..400 {
            let over = (diag_objective(ce, &w) - eps).max(0.0);
            let grad = cb * &w - ce * &w * C64::from(beta * over);
            let here = merit(&w, beta);
            let mut moved = false;
            while step > 1e-14 {
                let cand = project_box(&(&w + &grad * C64::from(step)));
                if merit(&cand, beta) > here {
                    w = cand;
                    step *= 1.5;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                step = 0.1;
                break;
            }
        }
    }
    let f = diag_objective(cb, &w);
    let g = diag_objective(ce, &w);
    if g > eps {
        f * eps / g
    } else {
        f
    }
}

#[test]
fn constrained_diagonal_within_two_percent_of_oracle() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let r = 4;
        let (eb, ee, m) = (psd(&mut rng, r), psd(&mut rng, r), psd(&mut rng, r));
        let forms = QuadraticForms::from_parts(eb, Some(ee), m).unwrap();
        let mut d = DiagForms::from_forms(&forms).unwrap();
        // Unit top eigenvalues keep the oracle's step sizes meaningful.
        let sb = hermitian_eig(&d.c_b).unwrap().values[0];
        let se = hermitian_eig(d.c_e.as_ref().unwrap()).unwrap().values[0];
        d.c_b /= C64::from(sb);
        d.c_e = d.c_e.map(|c| c / C64::from(se));

        let s = DiagSettings::default();
        let (_, free) = solve_diagonal_unconstrained(&d, &s).unwrap();
        for frac in [0.05, 0.3] {
            let eps = frac * free.constraint("eve_fim").unwrap();
            let (_, rep) = solve_diagonal_constrained(&d, eps, &s).unwrap();
            let ce = d.c_e.as_ref().unwrap();
            let oracle = (0..100)
                .map(|_| {
                    let w0 = CVec::from_fn(r, |_, _| C64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..std::f64::consts::TAU)));
                    penalty_oracle(&d.c_b, ce, eps, w0)
                })
                .fold(0.0, f64::max);
            assert!(rep.converged, "seed {seed} frac {frac}: {:?}", rep.notes);
            assert!(rep.constraint("eve_fim").unwrap() <= eps * (1.0 + 1e-3));
            assert!(
                rep.objective >= 0.98 * oracle,
                "seed {seed} frac {frac}: solver {} oracle {oracle}",
                rep.objective
            );
        }
    }
}
