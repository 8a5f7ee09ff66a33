//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gperiodic::assembly::{discretize_against_phi0, glue, DiscretizationMode, PairingRule, Truncation};
use gperiodic::bounds::{run_scenario, BoundReport, Scenario};
use gperiodic::cell::{build_cell, cell_with_positive_lambda0, neumann_spectrum, CellSpec, WeightFamily};
use gperiodic::eigen::{smallest_eigenpairs, EigenOptions};
use gperiodic::graph::{
    build_regular_tree, cheeger_bruteforce, cheeger_sweep, dirichlet_laplacian, mu0_estimate, GraphFamily,
};
use gperiodic::sparse::{CsrMatrix, SparseOperator};
use gperiodic::tube::{
    g_inf_profile, harmonic_solve_tube, radial_laplacian_apply, radial_laplacian_inf, TubeDerived, TubeProfile,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dense_lowest(a: &CsrMatrix) -> Vec<f64> {
    let n = a.nrows();
    let m = DMatrix::from_row_slice(n, n, &a.to_dense());
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

// ---------------------------------------------------------------------------
// 1. Cheeger inequalities on tree and lattice balls.

fn cheeger_inequalities() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let cases = [
        (GraphFamily::Tree { valence: 3 }, vec![10, 11]),
        (GraphFamily::Tree { valence: 4 }, vec![10, 11]),
        (GraphFamily::Lattice { dimension: 1 }, vec![40, 50]),
        (GraphFamily::Lattice { dimension: 2 }, vec![15, 20]),
    ];
    for (fam, depths) in cases {
        let c = mu0_estimate(&fam, &depths, 1e-12, &EigenOptions::default()).map_err(|e| e.to_string())?;
        let v = c.valence as f64;
        for i in 0..c.depths.len() {
            let (mu, h) = (c.mu0_estimates[i], c.cheeger_estimates[i]);
            if !(h * h / (2.0 * v) <= mu + 1e-3 && mu <= h + 1e-3) {
                ok = false;
                lines.push(format!("{} depth {}: violated with μ₀={mu:.4} h={h:.4}", c.family, c.depths[i]));
            }
        }
        let (mu, h) = (c.converged_mu0, c.converged_h);
        ok &= h * h / (2.0 * v) <= mu + 1e-3 && mu <= h + 1e-3;
        lines.push(format!("{}: h²/2v={:.4} μ₀={:.4} h={:.4}", c.family, h * h / (2.0 * v), mu, h));
    }
    // On balls small enough for exhaustive search the sweep never beats the
    // exact h, the lower inequality holds ball by ball, and the indicator of
    // the optimal set caps μ₀ at v·h (its edge boundary is at most v times
    // its vertex boundary).
    for (v, depth) in [(3, 3), (4, 2)] {
        let g = build_regular_tree(v, depth).map_err(|e| e.to_string())?;
        let exact = cheeger_bruteforce(&g, 20).map_err(|e| e.to_string())?;
        let sweep = cheeger_sweep(&g).map_err(|e| e.to_string())?.value;
        let (lap, _) = dirichlet_laplacian(&g).map_err(|e| e.to_string())?;
        let mu = dense_lowest(&lap)[0];
        if !(exact <= sweep + 1e-12 && exact * exact / (2.0 * v as f64) <= mu && mu <= v as f64 * exact) {
            ok = false;
            lines.push(format!("T{v} depth {depth}: oracle check violated"));
        }
        lines.push(format!("T{v} depth {depth}: exact h={exact:.4} sweep={sweep:.4} μ₀={mu:.4}"));
    }
    check(ok, lines.join("; "))
}

// ---------------------------------------------------------------------------
// 2. Tree μ₀ converges to v − 2√(v−1).

fn tree_mu0() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (v, last) in [(3usize, 12usize), (4, 10)] {
        let fam = GraphFamily::Tree { valence: v };
        let depths: Vec<usize> = (2..=last).collect();
        let c = mu0_estimate(&fam, &depths, 1e-12, &EigenOptions::default()).map_err(|e| e.to_string())?;
        let target = v as f64 - 2.0 * ((v - 1) as f64).sqrt();
        let err = (c.converged_mu0 - target).abs();
        ok &= err < 1e-2 && c.mu0_extrapolated.is_some();
        ok &= c.mu0_estimates.windows(2).all(|w| w[1] <= w[0] + 1e-10);
        // Dense oracle on the small balls.
        let mut dense_err = 0.0f64;
        for (i, &d) in c.depths.iter().enumerate().filter(|(_, &d)| d <= 6) {
            let g = fam.ball(d).map_err(|e| e.to_string())?;
            let (lap, _) = dirichlet_laplacian(&g).map_err(|e| e.to_string())?;
            dense_err = dense_err.max((dense_lowest(&lap)[0] - c.mu0_estimates[i]).abs());
        }
        ok &= dense_err < 1e-8;
        lines.push(format!(
            "T{v}: raw μ₀,{last}={:.5} tail={:.5} target={target:.5} |err|={err:.1e} dense≤6 dev={dense_err:.1e}",
            c.mu0_last, c.converged_mu0
        ));
    }
    check(ok, lines.join("; "))
}

// ---------------------------------------------------------------------------
// Scenario helpers for 3, 4 and 9.

fn scenario(text: &str) -> Result<BoundReport, String> {
    let s = Scenario::from_toml(text).map_err(|e| e.to_string())?;
    run_scenario(&s).map_err(|e| e.to_string())
}

fn verdict_summary(r: &BoundReport) -> String {
    r.verdicts.iter().filter(|v| !v.passed).map(|v| v.name.clone()).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// 3. Amenable equality on ℤ.

fn amenable_equality() -> Outcome {
    let r = scenario(
        r#"
name = "z_comb"
[graph]
kind = "lattice"
dimension = 1
depths = [10, 20, 30, 40, 50]
[cell]
kind = "balanced_comb"
valence = 2
mesh_step = 0.025
"#,
    )?;
    let quarter = PI * PI / 4.0;
    let cell_ok = (r.lambda0_c - quarter).abs() < 5e-4;
    let decreasing = r.delta.windows(2).all(|w| w[1] < w[0]);
    let last = *r.delta.last().unwrap();
    let cutoff_ok = !r.cutoff.is_empty() && r.cutoff.iter().all(|c| c.holds);
    let worst_margin = r.cutoff.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    check(
        cell_ok && decreasing && last < 5e-3 && cutoff_ok && r.passed,
        format!(
            "λ₀(C)={:.6} (π²/4={quarter:.6}); δ={:?}; cutoff holds at {} depths (min margin {worst_margin:.3e}); failing verdicts [{}]",
            r.lambda0_c,
            r.delta.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>(),
            r.cutoff.len(),
            verdict_summary(&r)
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Non-amenable gap on the 3-tree.

fn nonamenable_gap() -> Outcome {
    let r = scenario(
        r#"
name = "tree3_comb"
[graph]
kind = "tree"
valence = 3
depths = [2, 3, 4, 5, 6, 7, 8]
[cell]
kind = "balanced_comb"
valence = 3
mesh_step = 0.05
"#,
    )?;
    let bound = r.constants.a * r.eta * (3.0 - 2.0 * 2f64.sqrt()) * 0.95;
    check(
        r.delta_limit > 0.0 && r.delta_limit >= bound && r.passed,
        format!(
            "δ raw={:.4} δ_∞ (conservative)={:.4} ≥ A·η·μ₀·0.95={bound:.3e} (A={:.3e}, η={:.3}); failing verdicts [{}]",
            r.delta.last().unwrap(),
            r.delta_limit,
            r.constants.a,
            r.eta,
            verdict_summary(&r)
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Harmonic-energy comparison on random tubes.

const GRID: usize = 64;

fn energies(t: &TubeProfile) -> Result<(f64, f64), String> {
    let d = TubeDerived::from_profile(t);
    let ginf = g_inf_profile(&d, 1.0, 0.0, t.r_max()).map_err(|e| e.to_string())?;
    let gt = harmonic_solve_tube(t, 1.0, 0.0, t.r_max()).map_err(|e| e.to_string())?;
    Ok((gt.energy, ginf.energy))
}

fn tube_comparison() -> Outcome {
    // Calibrate c on an x-independent profile, where both continuum energies
    // coincide and the discrete gap is pure discretization error.
    let flat = TubeProfile::from_fn(2, 1.0, 1.0, GRID, GRID, |_, r| r.exp()).map_err(|e| e.to_string())?;
    let h = flat.dr();
    let (et, ei) = energies(&flat)?;
    let c = 4.0 * (et - ei).abs() / (h * h);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..50 {
        // Random log-Lipschitz field: a few Fourier modes in x times smooth
        // radial profiles, exponentiated.
        let modes: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|k| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI), (k + 1) as f64, rng.gen_range(-1.0..1.0)))
            .collect();
        let base = rng.gen_range(-1.0..2.0);
        let n = rng.gen_range(2..=4);
        let t = TubeProfile::from_fn(n, 1.0, 1.0, GRID, GRID, |x, r| {
            let mut s = base * r;
            for &(amp, ph, k, curv) in &modes {
                s += amp * r * (1.0 + curv * r) * (2.0 * PI * k * x + ph).sin() / k;
            }
            s.exp()
        })
        .map_err(|e| e.to_string())?;
        let (et, ei) = energies(&t)?;
        let gap = et - (ei - c * h * h);
        min_gap = min_gap.min(gap);
        if gap < 0.0 {
            violations += 1;
        }
    }
    check(violations == 0, format!("c={c:.3e}, h={h:.4e}, violations={violations}/50, min slack {min_gap:.3e}"))
}

// ---------------------------------------------------------------------------
// 6. Closed-form energy of G_inf under grid refinement.

fn closed_form_energy() -> Outcome {
    // θ = cosh r, n = 2: U_inf(1) = arctan(sinh 1), energy = 1/arctan(sinh 1).
    let exact = 1.0 / 1f64.sinh().atan();
    let mut errs = Vec::new();
    for nr in [33, 65, 129] {
        let t = TubeProfile::from_fn(2, 1.0, 1.0, 3, nr, |_, r| r.cosh()).map_err(|e| e.to_string())?;
        let d = TubeDerived::from_profile(&t);
        let g = g_inf_profile(&d, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
        errs.push((g.discrete_energy(&d) - exact).abs());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    check(
        orders.iter().all(|&p| p >= 1.8),
        format!("exact={exact:.6}, errors={:?}, observed orders={orders:.3?}", errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    )
}

// ---------------------------------------------------------------------------
// 7. Radial Laplacian comparison.

fn radial_comparison() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0usize;
    let mut points = 0usize;
    for _ in 0..100 {
        let (a, b, ph, curv) =
            (rng.gen_range(-1.0..2.0), rng.gen_range(0.0..1.5), rng.gen_range(0.0..2.0 * PI), rng.gen_range(-0.5..0.5));
        let n = rng.gen_range(2..=4);
        let t = TubeProfile::from_fn(n, 1.0, 1.0, 33, 65, |x, r| {
            (r * (a + b * (2.0 * PI * x + ph).sin()) + curv * r * r).exp()
        })
        .map_err(|e| e.to_string())?;
        let d = TubeDerived::from_profile(&t);
        let slope = rng.gen_range(0.2..2.0);
        let bumps: Vec<(f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..1.0))).collect();
        let u: Vec<f64> = t
            .radii()
            .iter()
            .map(|&r| 1.0 - slope * r - bumps.iter().map(|&(h, s, m)| h * (s * (r - m)).tanh()).sum::<f64>())
            .collect();
        let full = radial_laplacian_apply(&t, &u).map_err(|e| e.to_string())?;
        let inf = radial_laplacian_inf(&d, &u).map_err(|e| e.to_string())?;
        for i in 0..t.nx() {
            for j in 0..t.nr() {
                points += 1;
                if full[i * t.nr() + j] < inf[j] - 1e-10 * (1.0 + inf[j].abs()) {
                    violations += 1;
                }
            }
        }
    }
    check(violations == 0, format!("{violations} violations over {points} grid points"))
}

// ---------------------------------------------------------------------------
// 8. Hyperbolic half-line.

fn hyperbolic_half_line() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [2usize, 3] {
        let w = WeightFamily::CoshPower { power: (n - 1) as f64, shift: 0.0, scale: 1.0 };
        let c = cell_with_positive_lambda0(&CellSpec::half_line(30.0, w, 1e-2)).map_err(|e| e.to_string())?;
        let s = neumann_spectrum(&c, 2, 1e-10).map_err(|e| e.to_string())?;
        let target = ((n - 1) * (n - 1)) as f64 / 4.0;
        let err = s.lambda0 - target;
        ok &= err.abs() < 1e-2;
        lines.push(format!("n={n}: λ₀={:.5} target={target} diff={err:.2e}", s.lambda0));
    }
    check(ok, lines.join("; "))
}

// ---------------------------------------------------------------------------
// 9. Bounded variant on the 3-tree with a star cell.

fn bounded_variant() -> Outcome {
    let r = scenario(
        r#"
name = "tree3_star"
variant = "bounded"
[graph]
kind = "tree"
valence = 3
depths = [2, 3, 4, 5, 6, 7, 8]
[cell]
kind = "star"
valence = 3
leg_length = 0.5
mesh_step = 0.05
"#,
    )?;
    let upper = *r.lambda0_m_upper.last().unwrap();
    let a1 = r.constants.a;
    let a2 = r.constants.a_upper_bounded.unwrap_or(f64::NAN);
    let lower = a1 * r.eta * r.mu0_ref * 0.95;
    let top = a2 * r.h_est * 1.05;
    check(
        upper > 0.0 && lower <= upper && upper <= top && r.passed,
        format!("{lower:.4e} ≤ λ₀(M)_upper={upper:.4e} ≤ {top:.4e} (A₁={a1:.3e}, A₂={a2:.3e}, h={:.4})", r.h_est),
    )
}

// ---------------------------------------------------------------------------
// 10. Discretization identities on a glued tree ball.

fn discretization_identities() -> Outcome {
    let mesh = build_cell(&CellSpec::balanced_comb(3, 0.05)).map_err(|e| e.to_string())?;
    let s = neumann_spectrum(&mesh, 3, 1e-11).map_err(|e| e.to_string())?;
    let g = build_regular_tree(3, 3).map_err(|e| e.to_string())?;
    let space = glue(&g, &mesh, &PairingRule::Ports, Truncation::Neumann).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut pyth, mut orth, mut energy) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let f: Vec<f64> = (0..space.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = discretize_against_phi0(&space, &f, &s, DiscretizationMode::Phi0).map_err(|e| e.to_string())?;
        pyth = pyth.max(d.pythagoras_defect());
        orth = orth.max(d.orthogonality_defect());
        energy = energy.max(d.energy_defect());
    }
    check(
        pyth <= 1e-10 && orth <= 1e-8 && energy <= 1e-8,
        format!("max |a²−b²−c²|={pyth:.2e}, max |⟨g,φ₀⟩|={orth:.2e}, max energy defect={energy:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 11. Sparse eigensolver against a dense generalized solve.

fn random_spd_pair(rng: &mut ChaCha8Rng, n: usize) -> (CsrMatrix, CsrMatrix) {
    // K: weighted Laplacian of a random sparse graph plus a small random
    // diagonal; M: diagonally dominant with random symmetric off-diagonals.
    let mut k = Vec::new();
    let mut m = Vec::new();
    let mut kd = vec![0.0; n];
    let mut md = vec![0.0; n];
    let mut add_edge = |i: usize, j: usize, rng: &mut ChaCha8Rng, k: &mut Vec<(usize, usize, f64)>| {
        let w = rng.gen_range(0.1..2.0);
        k.push((i, j, -w));
        k.push((j, i, -w));
        kd[i] += w;
        kd[j] += w;
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        add_edge(i, j, rng, &mut k);
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            add_edge(i, j, rng, &mut k);
        }
    }
    for (i, d) in kd.iter().enumerate() {
        k.push((i, i, d + rng.gen_range(0.0..0.1)));
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            let w: f64 = rng.gen_range(-0.2..0.2);
            m.push((i, j, w));
            m.push((j, i, w));
            md[i] += w.abs();
            md[j] += w.abs();
        }
    }
    for (i, d) in md.iter().enumerate() {
        m.push((i, i, d + rng.gen_range(0.5..2.0)));
    }
    (CsrMatrix::from_triplets(n, n, &k).unwrap(), CsrMatrix::from_triplets(n, n, &m).unwrap())
}

fn eigensolver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut dims = Vec::new();
    for _ in 0..25 {
        let n = rng.gen_range(10..=200);
        dims.push(n);
        let (k, m) = random_spd_pair(&mut rng, n);
        let op = SparseOperator::new(k.clone(), m.clone()).map_err(|e| e.to_string())?;
        let sol = smallest_eigenpairs(&op, &EigenOptions { count: 2, tol: 1e-11, ..EigenOptions::default() })
            .and_then(|s| s.require_converged())
            .map_err(|e| e.to_string())?;
        // Dense oracle: L⁻¹ K L⁻ᵀ with M = L Lᵀ.
        let kd = DMatrix::from_row_slice(n, n, &k.to_dense());
        let md = DMatrix::from_row_slice(n, n, &m.to_dense());
        let l = md.cholesky().ok_or("mass not positive definite")?.l();
        let linv = l.clone().try_inverse().ok_or("singular factor")?;
        let a = &linv * kd * linv.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (p, e) in sol.pairs.iter().zip(&ev) {
            worst = worst.max((p.value - e).abs());
        }
    }
    check(worst < 1e-8, format!("max |Δλ| over 25 pairs = {worst:.2e} (dimensions {}..{})", dims.iter().min().unwrap(), dims.iter().max().unwrap()))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 Cheeger inequalities", cheeger_inequalities, Some(Duration::from_secs(10))),
        ("2 tree mu0 limit", tree_mu0, Some(Duration::from_secs(30))),
        ("3 amenable equality on Z", amenable_equality, Some(Duration::from_secs(60))),
        ("4 non-amenable gap on T3", nonamenable_gap, Some(Duration::from_secs(120))),
        ("5 harmonic-energy comparison", tube_comparison, Some(Duration::from_secs(60))),
        ("6 closed-form energy order", closed_form_energy, None),
        ("7 radial comparison", radial_comparison, None),
        ("8 hyperbolic half-line", hyperbolic_half_line, None),
        ("9 bounded variant on T3", bounded_variant, None),
        ("10 discretization identities", discretization_identities, None),
        ("11 eigensolver oracle", eigensolver_oracle, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = limit.is_some_and(|l| elapsed > l);
        let (pass, detail) = match outcome {
            Ok(d) => (!over, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        let budget = limit.map(|l| format!(" / {}s", l.as_secs())).unwrap_or_default();
        println!(
            "{} criterion {name} [{:.2}s{budget}]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
