use gperiodic::assembly::{
    discretize_against_phi0, glue, glued_options, lambda0_bracket, DiscretizationMode, PairingRule, Truncation,
};
use gperiodic::bounds::{recompute_constants, run_scenario, Scenario};
use gperiodic::cell::{build_cell, neumann_spectrum, CellMesh, CellSpec, CellSpectrum, WeightFamily};
use gperiodic::eigen::EigenOptions;
use gperiodic::graph::{
    build_lattice, build_regular_tree, combinatorial_laplacian_apply, dirichlet_ground_state, mu0_estimate,
    rayleigh_quotient_comb, GraphBall, GraphFamily,
};
use gperiodic::sparse::SparseOperator;
use gperiodic::tube::{
    compute_theta_inf, constant_a_parts, constant_a_prime, g_inf_profile, harmonic_solve_tube, oscillation_beta,
    radial_laplacian_apply, radial_laplacian_inf, TubeDerived, TubeProfile,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn small_balls() -> &'static [GraphBall] {
    static B: OnceLock<Vec<GraphBall>> = OnceLock::new();
    B.get_or_init(|| {
        vec![build_lattice(1, 6).unwrap(), build_lattice(2, 3).unwrap(), build_regular_tree(3, 3).unwrap()]
    })
}

struct CombCell {
    mesh: CellMesh,
    spectrum: CellSpectrum,
}

fn comb() -> &'static CombCell {
    static C: OnceLock<CombCell> = OnceLock::new();
    C.get_or_init(|| {
        let mesh = build_cell(&CellSpec::balanced_comb(3, 0.1)).unwrap();
        let spectrum = neumann_spectrum(&mesh, 3, 1e-11).unwrap();
        CombCell { mesh, spectrum }
    })
}

fn star() -> &'static CombCell {
    static C: OnceLock<CombCell> = OnceLock::new();
    C.get_or_init(|| {
        let mesh = build_cell(&CellSpec::star(3, 0.5, WeightFamily::Exp { rate: 0.7 }, 0.1)).unwrap();
        let spectrum = neumann_spectrum(&mesh, 3, 1e-11).unwrap();
        CombCell { mesh, spectrum }
    })
}

/// `log θ(x, r) = r·(a + b·sin(2πx/L + c)) + d·r²`, which is log-Lipschitz
/// and equal to one at `r = 0`.
fn wavy_profile(n: usize, nx: usize, nr: usize, a: f64, b: f64, c: f64, d: f64) -> TubeProfile {
    let len = 1.0;
    TubeProfile::from_fn(n, 1.0, len, nx, nr, move |x, r| {
        (r * (a + b * (2.0 * std::f64::consts::PI * x / len + c).sin()) + d * r * r).exp()
    })
    .unwrap()
}

fn vec_in(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn graph_laplacian_is_symmetric_with_edge_form(which in 0usize..3, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let g = &small_balls()[which];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = g.num_vertices();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lf = combinatorial_laplacian_apply(g, &f, false).unwrap();
        let lh = combinatorial_laplacian_apply(g, &h, false).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        prop_assert!((dot(&lf, &h) - dot(&f, &lh)).abs() < 1e-12 * (1.0 + dot(&lf, &h).abs()));
        let edge_sum: f64 = g.edges().iter().map(|e| (f[e.a] - f[e.b]).powi(2)).sum();
        prop_assert!((dot(&lf, &f) - edge_sum).abs() < 1e-12 * (1.0 + edge_sum));
        prop_assert!(edge_sum >= 0.0);
    }

    #[test]
    fn graph_rayleigh_quotient_dominates_ball_mu0(which in 0usize..3, f in vec_in(64)) {
        let g = &small_balls()[which];
        let (mu, _, _) = dirichlet_ground_state(g, &EigenOptions::default()).unwrap();
        let vals: Vec<f64> = (0..g.num_vertices())
            .map(|v| if g.is_interior(v) { f[v % f.len()] } else { 0.0 })
            .collect();
        prop_assume!(vals.iter().any(|x| x.abs() > 1e-3));
        let q = rayleigh_quotient_comb(g, &vals).unwrap();
        prop_assert!(q >= mu - 1e-9, "{} < {}", q, mu);
    }

    #[test]
    fn theta_inf_ratio_is_nonincreasing(
        a in -1.0f64..2.0, b in 0.0f64..1.5, c in 0.0f64..6.3, d in -0.5f64..0.5, n in 2usize..4,
    ) {
        let t = wavy_profile(n, 17, 41, a, b, c, d);
        let (theta_inf, _) = compute_theta_inf(&t);
        for i in 0..t.nx() {
            for j in 1..t.nr() {
                let prev = theta_inf[j - 1] / t.theta(i, j - 1);
                let cur = theta_inf[j] / t.theta(i, j);
                prop_assert!(cur <= prev * (1.0 + 1e-12), "x index {}, r index {}", i, j);
            }
        }
    }

    #[test]
    fn beta_has_zero_weighted_mean(a in -1.0f64..2.0, b in 0.0f64..1.5, c in 0.0f64..6.3, d in -0.5f64..0.5) {
        let t = wavy_profile(3, 17, 21, a, b, c, d);
        let (beta, kappa, volume) = oscillation_beta(&t);
        let q = t.x_weights();
        for j in 0..t.nr() {
            let mean: f64 = (0..t.nx()).map(|i| q[i] * t.theta(i, j).powi(2) * beta[i * t.nr() + j]).sum();
            prop_assert!(mean.abs() < 1e-12 * (1.0 + volume[j]) * (1.0 + kappa));
        }
        prop_assert!(beta.iter().all(|x| x.abs() <= kappa));
    }

    #[test]
    fn radial_comparison_for_decreasing_u(
        a in -1.0f64..2.0, b in 0.0f64..1.5, c in 0.0f64..6.3, d in -0.5f64..0.5,
        slope in 0.2f64..2.0,
        bumps in prop::collection::vec((0.0f64..1.0, 0.5f64..3.0, 0.0f64..1.0), 0..4),
    ) {
        let t = wavy_profile(3, 17, 33, a, b, c, d);
        let der = TubeDerived::from_profile(&t);
        // Smooth and strictly decreasing, so the one-sided end stencils keep
        // the sign of u'.
        let u: Vec<f64> = t
            .radii()
            .iter()
            .map(|&r| 1.0 - slope * r - bumps.iter().map(|&(h, s, m)| h * (s * (r - m)).tanh()).sum::<f64>())
            .collect();
        let full = radial_laplacian_apply(&t, &u).unwrap();
        let inf = radial_laplacian_inf(&der, &u).unwrap();
        for i in 0..t.nx() {
            for j in 0..t.nr() {
                prop_assert!(full[i * t.nr() + j] >= inf[j] - 1e-9);
            }
        }
    }

    #[test]
    fn harmonic_energy_comparison(a in -1.0f64..2.0, b in 0.0f64..1.0, c in 0.0f64..6.3, p in 0.5f64..2.0) {
        let t = wavy_profile(2, 17, 17, a, b, c, 0.0);
        let der = TubeDerived::from_profile(&t);
        let g = g_inf_profile(&der, p, 0.0, 1.0).unwrap();
        let sol = harmonic_solve_tube(&t, p, 0.0, 1.0).unwrap();
        prop_assert!(sol.energy >= g.energy * (1.0 - 0.02), "{} < {}", sol.energy, g.energy);
    }

    #[test]
    fn constants_are_positive(
        a in -1.0f64..2.0, b in 0.0f64..1.5, c in 0.0f64..6.3,
        phi in 0.05f64..2.0, lambda1 in 0.1f64..50.0, vol in 0.01f64..3.0,
        k in 1usize..8, width in 0.05f64..2.0, lambda0 in 0.0f64..5.0,
    ) {
        let t = wavy_profile(2, 9, 17, a, b, c, 0.0);
        let der = TubeDerived::from_profile(&t);
        let lc = constant_a_parts(&der, phi, lambda1, vol).unwrap();
        prop_assert!(lc.a1 > 0.0 && lc.a2 > 0.0 && lc.a > 0.0);
        if let Some(a3) = lc.a3 {
            prop_assert!(a3 > 0.0);
        }
        prop_assert!(constant_a_prime(k, width, lambda0).unwrap() > 0.0);
    }

    #[test]
    fn cell_rayleigh_quotient_dominates_lambda0(f in vec_in(256)) {
        let c = comb();
        let op = c.mesh.operator().unwrap();
        let u: Vec<f64> = (0..op.dimension()).map(|i| f[i % f.len()] + 0.01).collect();
        prop_assert!(op.rayleigh(&u) >= c.spectrum.lambda0 - 1e-9);
    }

    #[test]
    fn discretization_identities(f in vec_in(512), which in 0usize..2) {
        let c = if which == 0 { comb() } else { star() };
        let g = build_regular_tree(3, 2).unwrap();
        let space = glue(&g, &c.mesh, &PairingRule::Ports, Truncation::Neumann).unwrap();
        let u: Vec<f64> = (0..space.dimension()).map(|i| f[(7 * i) % f.len()]).collect();
        let d = discretize_against_phi0(&space, &u, &c.spectrum, DiscretizationMode::Phi0).unwrap();
        let scale = 1.0 + d.a2.iter().sum::<f64>();
        prop_assert!(d.pythagoras_defect() < 1e-10 * scale);
        prop_assert!(d.orthogonality_defect() < 1e-8 * scale);
        prop_assert!(d.energy_defect() < 1e-8 * (1.0 + d.energy));
        for i in 0..d.c2.len() {
            prop_assert!(d.grad_g2[i] >= c.spectrum.lambda1 * d.c2[i] - 1e-8 * (1.0 + d.grad_g2[i]));
        }
    }
}

#[test]
fn ball_mu0_is_nonincreasing_in_depth() {
    for fam in [GraphFamily::Tree { valence: 3 }, GraphFamily::Lattice { dimension: 1 }, GraphFamily::Lattice {
        dimension: 2,
    }] {
        let c = mu0_estimate(&fam, &[1, 2, 3, 4, 5, 6], 1e-9, &EigenOptions::default()).unwrap();
        for w in c.mu0_estimates.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{}: {:?}", fam.name(), c.mu0_estimates);
        }
    }
}

#[test]
fn dirichlet_truncation_dominates_neumann() {
    let interval = {
        let mesh = build_cell(&CellSpec::interval(1.0, WeightFamily::Exp { rate: 0.5 }, 0.05)).unwrap();
        let spectrum = neumann_spectrum(&mesh, 3, 1e-11).unwrap();
        CombCell { mesh, spectrum }
    };
    let cases = [
        (comb(), build_regular_tree(3, 2).unwrap()),
        (star(), build_regular_tree(3, 2).unwrap()),
        (&interval, build_lattice(1, 3).unwrap()),
    ];
    for (c, g) in cases {
        let opts = EigenOptions { shift: Some(c.spectrum.lambda0 - 0.5), ..glued_options(&c.spectrum, 1e-10, 7) };
        let d = glue(&g, &c.mesh, &PairingRule::Ports, Truncation::Dirichlet).unwrap();
        let n = glue(&g, &c.mesh, &PairingRule::Ports, Truncation::Neumann).unwrap();
        let ld = d.eigenpairs(&opts).unwrap().pairs[0].value;
        let ln = n.eigenpairs(&opts).unwrap().pairs[0].value;
        assert!(ld >= ln - 1e-9, "{ld} < {ln}");
        assert!(ld >= c.spectrum.lambda0 - 1e-9);
    }
}

#[test]
fn bracket_is_monotone_and_above_cell_bottom() {
    let c = comb();
    let balls: Vec<GraphBall> = (1..=4).map(|d| build_regular_tree(3, d).unwrap()).collect();
    let b = lambda0_bracket(&balls, &c.mesh, &c.spectrum, &PairingRule::Ports, 1e-10, 3, None).unwrap();
    for w in b.upper.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    assert!(b.upper.iter().all(|&u| u >= c.spectrum.lambda0 - 1e-9));
}

#[test]
fn eigen_oracle_on_glued_operator() {
    // Dense generalized eigensolve of a small glued operator against the
    // sparse solver.
    let c = star();
    let g = build_regular_tree(3, 1).unwrap();
    let s = glue(&g, &c.mesh, &PairingRule::Ports, Truncation::Neumann).unwrap();
    let op: &SparseOperator = &s.operator;
    let n = op.dimension();
    let k = nalgebra::DMatrix::from_row_slice(n, n, &op.stiffness.to_dense());
    let m = nalgebra::DMatrix::from_row_slice(n, n, &op.mass.to_dense());
    let minv_half = nalgebra::DMatrix::from_diagonal(&m.diagonal().map(|x| 1.0 / x.sqrt()));
    let a = &minv_half * k * &minv_half;
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let opts = EigenOptions { count: 2, shift: Some(-0.5), ..glued_options(&c.spectrum, 1e-11, 1) };
    let sol = s.eigenpairs(&opts).unwrap();
    for (p, e) in sol.pairs.iter().zip(&ev) {
        assert!((p.value - e).abs() < 1e-8 * (1.0 + e.abs()), "{} vs {}", p.value, e);
    }
}

fn tree_scenario() -> Scenario {
    Scenario::from_toml(
        r#"
name = "determinism"
[graph]
kind = "tree"
valence = 3
depths = [2, 3, 4]
[cell]
kind = "balanced_comb"
valence = 3
mesh_step = 0.1
"#,
    )
    .unwrap()
}

#[test]
fn reports_are_deterministic_and_recomputable() {
    let s = tree_scenario();
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert_eq!(a.deterministic_json().unwrap(), b.deterministic_json().unwrap());
    let (aa, ap) = recompute_constants(&a).unwrap();
    assert_eq!(aa, a.constants.a);
    assert_eq!(ap, a.constants.a_prime);
    assert!(a.delta.iter().all(|&d| d >= -s.tolerances.solver));
}
