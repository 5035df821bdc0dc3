//! Cross-checks the revised simplex against a plain dense-tableau two-phase
//! simplex on random bounded LPs.

use oppcharge::lp::{LinearProgram, LpStatus, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq)]
enum Outcome {
    Optimal(f64),
    Infeasible,
}

/// Dense tableau, Bland's rule throughout. Variables are `x >= 0`; upper
/// bounds must be passed as rows.
fn tableau_min(c: &[f64], rows: &[(Vec<f64>, Sense, f64)]) -> Outcome {
    let n = c.len();
    let m = rows.len();
    let mut n_slack = 0;
    let mut n_art = 0;
    for (_, s, _) in rows {
        match s {
            Sense::Eq => n_art += 1,
            _ => n_slack += 1,
        }
    }
    // >= rows with positive rhs need an artificial too; count after flipping
    let mut norm: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for (a, s, b) in rows {
        if *b < 0.0 {
            let flipped = match s {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
            norm.push((a.iter().map(|v| -v).collect(), flipped, -b));
        } else {
            norm.push((a.clone(), *s, *b));
        }
    }
    n_art += norm.iter().filter(|r| r.1 == Sense::Ge).count();
    let width = n + n_slack + n_art + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    let mut basis = vec![0; m];
    let (mut sk, mut ak) = (n, n + n_slack);
    let art_start = n + n_slack;
    for (i, (a, s, b)) in norm.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][width - 1] = *b;
        match s {
            Sense::Le => {
                t[i][sk] = 1.0;
                basis[i] = sk;
                sk += 1;
            }
            Sense::Ge => {
                t[i][sk] = -1.0;
                sk += 1;
                t[i][ak] = 1.0;
                basis[i] = ak;
                ak += 1;
            }
            Sense::Eq => {
                t[i][ak] = 1.0;
                basis[i] = ak;
                ak += 1;
            }
        }
    }

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, q: usize) {
        let p = t[r][q];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let pr = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[q].abs() > 0.0 {
                let f = row[q];
                for (v, pv) in row.iter_mut().zip(&pr) {
                    *v -= f * pv;
                }
            }
        }
        basis[r] = q;
    }

    fn run(t: &mut [Vec<f64>], basis: &mut [usize], allowed: usize) -> bool {
        let m = basis.len();
        let w = t[0].len();
        loop {
            let Some(q) = (0..allowed).find(|&j| t[m][j] < -1e-10) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                if t[i][q] > 1e-10 {
                    let ratio = t[i][w - 1] / t[i][q];
                    let better = match best {
                        None => true,
                        Some((r, br)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && basis[i] < basis[r])
                        }
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = best else {
                return false;
            };
            pivot(t, basis, r, q);
        }
    }

    let price = |t: &mut [Vec<f64>], basis: &[usize], cost: &[f64]| {
        let obj = &mut t[m];
        obj.iter_mut().for_each(|v| *v = 0.0);
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                let row = t[i].clone();
                for (v, r) in t[m].iter_mut().zip(&row) {
                    *v -= cb * r;
                }
            }
        }
    };

    if n_art > 0 {
        let mut c1 = vec![0.0; width - 1];
        for k in art_start..width - 1 {
            c1[k] = 1.0;
        }
        price(&mut t, &basis, &c1);
        run(&mut t, &mut basis, width - 1);
        if -t[m][width - 1] > 1e-7 {
            return Outcome::Infeasible;
        }
        // drive zero-valued artificials out of the basis where possible
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(q) = (0..art_start).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, q);
                }
            }
        }
    }
    let mut c2 = vec![0.0; art_start];
    c2[..n].copy_from_slice(c);
    price(&mut t, &basis, &c2);
    assert!(run(&mut t, &mut basis, art_start), "oracle LPs are bounded");
    Outcome::Optimal(-t[m][width - 1])
}

fn random_case(rng: &mut ChaCha8Rng) -> (LinearProgram, Outcome) {
    let n = 20;
    let m = rng.gen_range(8..16);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let ub: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=10) as f64).collect();
    let mut lp = LinearProgram::new();
    let vars: Vec<_> = (0..n)
        .map(|k| lp.add_var(format!("x{k}"), 0.0, ub[k], c[k]))
        .collect();
    let mut rows = Vec::new();
    for r in 0..m {
        let a: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.35) {
                    rng.gen_range(-4..=6) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let sense = match rng.gen_range(0..10) {
            0..=5 => Sense::Le,
            6..=8 => Sense::Ge,
            _ => Sense::Eq,
        };
        let b = rng.gen_range(-10..=30) as f64;
        let coeffs: Vec<_> = a
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (vars[k], *v))
            .collect();
        lp.add_row(format!("r{r}"), coeffs, sense, b);
        rows.push((a, sense, b));
    }
    for k in 0..n {
        let mut a = vec![0.0; n];
        a[k] = 1.0;
        rows.push((a, Sense::Le, ub[k]));
    }
    let expect = tableau_min(&c, &rows);
    (lp, expect)
}

#[test]
fn random_lps_match_dense_tableau() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..300 {
        let (lp, expect) = random_case(&mut rng);
        let got = lp.solve().unwrap();
        match expect {
            Outcome::Optimal(z) => {
                optimal += 1;
                assert_eq!(got.status, LpStatus::Optimal, "case {case}");
                assert!((got.objective - z).abs() <= 1e-6, "case {case}: {} vs {z}", got.objective);
                assert!(lp.max_violation(&got.values) <= 1e-6, "case {case}");
            }
            Outcome::Infeasible => {
                infeasible += 1;
                assert_eq!(got.status, LpStatus::Infeasible, "case {case}");
            }
        }
    }
    // the generator should exercise both outcomes
    assert!(optimal > 50 && infeasible > 10, "{optimal} optimal, {infeasible} infeasible");
}
