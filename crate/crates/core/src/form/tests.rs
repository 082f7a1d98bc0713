use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::wspace::{project, weighted_l2_norm};

fn params(rho: f64, r: f64) -> HestonParams {
    HestonParams::new(2.0, 0.04, 0.3, rho, r).unwrap()
}

fn variational() -> VariationalParams {
    VariationalParams { a: 1e-4, nu: 0.5, mu: 2.0, omega: 2.5 }
}

fn domain(nx: usize, ny: usize) -> TruncatedDomain {
    TruncatedDomain::new(-1.0, 1.0, 1e-4, 0.4, nx, ny).unwrap()
}

fn random_function(dom: &TruncatedDomain, rng: &mut ChaCha8Rng) -> DiscreteFunction {
    DiscreteFunction::new(dom, (0..dom.n_interior()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    let scale = a.triplets().fold(0.0f64, |m, (_, _, v)| m.max(v.abs()));
    a.max_abs_diff(b) / scale
}

#[test]
fn zero_coefficients_match_term_deletion() {
    use FormTerm::*;
    let dom = domain(12, 10);
    let quad = QuadratureRule::default();
    let vp = variational();

    let p = params(0.0, 0.03);
    let full = assemble_terms(&dom, &quad, &p, &vp, &TermSet::all());
    let cut = assemble_terms(
        &dom,
        &quad,
        &params(0.4, 0.03),
        &vp,
        &TermSet::all().without(&[CrossWeight, Mixed, DriftXOmega]),
    );
    assert!(rel_diff(&full, &cut) <= 1e-14);

    let p = params(0.2, 0.0);
    let full = assemble_terms(&dom, &quad, &p, &vp, &TermSet::all());
    let cut =
        assemble_terms(&dom, &quad, &params(0.2, 0.05), &vp, &TermSet::all().without(&[DriftXRate, ReactionRate]));
    assert!(rel_diff(&full, &cut) <= 1e-14);

    let mut p = params(0.2, 0.03);
    p.kappa = 0.0;
    let full = assemble_terms(&dom, &quad, &p, &vp, &TermSet::all());
    let cut = assemble_terms(
        &dom,
        &quad,
        &params(0.2, 0.03),
        &vp,
        &TermSet::all().without(&[DriftYReversion, ReactionReversion]),
    );
    assert!(rel_diff(&full, &cut) <= 1e-14);

    let zero_omega = VariationalParams { omega: 0.0, ..vp };
    let p = params(0.2, 0.03);
    let full = assemble_terms(&dom, &quad, &p, &zero_omega, &TermSet::all());
    let cut = assemble_terms(
        &dom,
        &quad,
        &p,
        &vp,
        &TermSet::all().without(&[DriftXOmega, DriftYOmega, ReactionOmega, ReactionReversion]),
    );
    assert!(rel_diff(&full, &cut) <= 1e-14);
}

#[test]
fn pieces_sum_to_the_full_form() {
    let dom = domain(10, 8);
    let quad = QuadratureRule::default();
    let (p, vp) = (params(0.3, 0.02), variational());
    let full = assemble(&dom, &quad, &p, &vp).a;
    let mut sum = CsrMatrix::from_triplets(dom.n_interior(), &[]);
    for t in FormTerm::ALL {
        let piece = assemble_terms(&dom, &quad, &p, &vp, &TermSet::none().with(&[t]));
        sum = sum.linear_combination(1.0, &piece, 1.0);
    }
    assert!(rel_diff(&full, &sum) <= 1e-13);
}

#[test]
fn term_groups_cover_one_to_ten() {
    let mut groups: Vec<u8> = FormTerm::ALL.iter().map(FormTerm::group).collect();
    groups.dedup();
    assert_eq!(groups, (1..=10).collect::<Vec<_>>());
}

#[test]
fn mass_is_symmetric_positive_definite_within_envelope() {
    let dom = domain(16, 12);
    let quad = QuadratureRule::default();
    let vp = variational();
    let mass = assemble_mass(&dom, &quad, vp.nu, vp.mu);
    assert!(rel_diff(&mass, &mass.transpose()) <= 1e-15);

    let area = dom.hx() * dom.hy();
    let w_min = weight_sq(0.0, dom.a, vp.nu, vp.mu);
    let w_max = weight_sq(dom.x_max, dom.y_max, vp.nu, vp.mu);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let v = random_function(&dom, &mut rng);
        let x = v.values();
        let q = mass.bilinear(x, x) / x.iter().map(|t| t * t).sum::<f64>();
        assert!(q > 0.0);
        assert!(q >= w_min * area / 9.0 && q <= w_max * area, "{q}");
    }
}

#[test]
fn stencil_bandwidth() {
    let dom = domain(14, 9);
    let fm = assemble(&dom, &QuadratureRule::default(), &params(0.1, 0.0), &variational());
    assert!(fm.a.bandwidth() <= 3 * (dom.nx - 1) + 3);
    assert_eq!(fm.a.bandwidth(), dom.nx);
    // at most nine neighbours per row
    assert!((0..fm.a.dim()).all(|i| fm.a.row(i).count() <= 9));
}

#[test]
fn second_order_block_is_symmetric_and_positive() {
    use FormTerm::*;
    let dom = domain(12, 10);
    let quad = QuadratureRule::default();
    let (p, vp) = (params(0.7, 0.0), variational());
    let diag = assemble_terms(&dom, &quad, &p, &vp, &TermSet::none().with(&[DiffusionX, DiffusionY]));
    assert!(rel_diff(&diag, &diag.transpose()) <= 1e-15);
    let mixed = assemble_terms(&dom, &quad, &p, &vp, &TermSet::none().with(&[Mixed]));
    let sym = diag.linear_combination(1.0, &mixed.linear_combination(0.5, &mixed.transpose(), 0.5), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let v = random_function(&dom, &mut rng);
        assert!(sym.bilinear(v.values(), v.values()) > 0.0);
    }
}

#[test]
fn pointwise_second_order_coefficients_are_positive_definite() {
    for &rho in &[-0.99f64, -0.5, 0.0, 0.3, 0.99] {
        for &sigma in &[0.05f64, 0.3, 2.0] {
            for &y in &[1e-4f64, 0.1, 3.0] {
                // y·[[1/2, ρσ/2], [ρσ/2, σ²/2]]
                let (a, b, d) = (0.5 * y, 0.5 * rho * sigma * y, 0.5 * sigma * sigma * y);
                let tr = a + d;
                let det = a * d - b * b;
                let lo = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
                assert!(det > 0.0 && lo > 0.0);
            }
        }
    }
}

/// `𝓛u` for a Gaussian bump, from its analytic derivatives.
fn apply_operator(g: &GaussianBump, p: &HestonParams, omega: f64, x: f64, y: f64) -> f64 {
    let HestonParams { kappa, m, sigma, rho, r, .. } = *p;
    let s2 = sigma * sigma;
    let u = g.value(x, y);
    let (ax, ay) = ((x - g.x0) / (g.sx * g.sx), (y - g.y0) / (g.sy * g.sy));
    let ux = -ax * u;
    let uy = -ay * u;
    let uxx = (ax * ax - 1.0 / (g.sx * g.sx)) * u;
    let uyy = (ay * ay - 1.0 / (g.sy * g.sy)) * u;
    let uxy = ax * ay * u;
    -0.5 * y * uxx
        - 0.5 * s2 * y * uyy
        - rho * sigma * y * uxy
        - (omega * rho * sigma * y * y - 0.5 * y + r) * ux
        - (omega * s2 * y * y + kappa * (m - y)) * uy
        - (0.5 * omega * s2 * y * (omega * y * y + 1.0) + omega * y * kappa * (m - y) - r) * u
}

#[test]
fn galerkin_form_converges_to_strong_form() {
    let p = params(0.3, 0.03);
    let vp = variational();
    let u = GaussianBump { x0: 0.1, y0: 0.2, sx: 0.15, sy: 0.035, amp: 1.0 };
    let v = GaussianBump { x0: -0.05, y0: 0.19, sx: 0.12, sy: 0.03, amp: 1.0 };
    let quad = QuadratureRule::default();
    let strong = weighted_integral(&domain(8, 8), &QuadratureRule::new(12).unwrap(), vp.nu, vp.mu, |x, y| {
        apply_operator(&u, &p, vp.omega, x, y) * v.value(x, y)
    });
    let mut errors = Vec::new();
    for &(nx, ny) in &[(32, 24), (64, 48), (128, 96)] {
        let dom = domain(nx, ny);
        let fm = assemble(&dom, &quad, &p, &vp);
        let (pu, pv) = (project(|x, y| u.value(x, y), &dom), project(|x, y| v.value(x, y), &dom));
        errors.push((fm.a.bilinear(pu.values(), pv.values()) - strong) / strong.abs());
    }
    // second order in h, and the extrapolated limit lands on the strong form
    for w in errors.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.9, "{errors:?}");
    }
    assert!((4.0 * errors[2] - errors[1]).abs() / 3.0 <= 1e-4, "{errors:?}");
}

#[test]
fn ibp_identities_hold_for_bumps() {
    let dom = domain(40, 40);
    let quad = QuadratureRule::new(7).unwrap();
    let u = GaussianBump { x0: 0.1, y0: 0.2, sx: 0.2, sy: 0.035, amp: 1.0 };
    let v = GaussianBump { x0: -0.1, y0: 0.21, sx: 0.25, sy: 0.03, amp: 2.0 };
    for (a, b) in [(&u, &u), (&u, &v), (&v, &u)] {
        let res = check_ibp_identities(a, b, &dom, &quad, 0.5, 2.0);
        for r in res.relative() {
            assert!(r <= 1e-6, "{res:?}");
        }
    }
    let zero = check_ibp_identities(&u, &0.0, &dom, &quad, 0.5, 2.0);
    assert_eq!(zero.residual, [0.0; 3]);
}

#[test]
fn y32_bound_holds_for_bumps() {
    let dom = domain(40, 40);
    let quad = QuadratureRule::new(7).unwrap();
    for (y0, sy, mu) in [(0.2, 0.035, 2.0), (0.15, 0.03, 0.5), (0.25, 0.03, 10.0)] {
        let v = GaussianBump { x0: 0.0, y0, sx: 0.2, sy, amp: 1.0 };
        let (lhs, rhs) = y32_bound(&v, &dom, &quad, 0.5, mu);
        assert!(lhs <= rhs, "{lhs} > {rhs}");
    }
}

#[test]
fn source_vanishes_outside_the_domain() {
    let dom = domain(16, 12);
    let quad = QuadratureRule::default();
    let spec = OptionSpec::call(10.0, 1.0).unwrap();
    let load = dirac_source(0.0, &dom, &quad, &params(0.1, 0.0), &variational(), &spec);
    assert!(load.iter().all(|v| *v == 0.0));
    assert_eq!(source_mass(0.0, &dom, &params(0.1, 0.0), &variational(), &spec), 0.0);
}

#[test]
fn source_only_touches_neighbouring_columns() {
    let dom = domain(16, 12);
    let quad = QuadratureRule::default();
    let spec = OptionSpec::call(1.1, 1.0).unwrap();
    let p = params(0.1, 0.02);
    let t = 0.3;
    let xs = source_line(t, &p, &spec);
    let load = dirac_source(t, &dom, &quad, &p, &variational(), &spec);
    for (k, v) in load.iter().enumerate() {
        let (i, _) = dom.node_of(k);
        let far = (dom.x_node(i) - xs).abs() >= dom.hx();
        if far {
            assert_eq!(*v, 0.0);
        } else {
            assert!(*v >= 0.0);
        }
    }
    assert!(load.iter().any(|v| *v > 0.0));
}

#[test]
fn source_mass_matches_line_integral() {
    let quad = QuadratureRule::default();
    let p = params(0.1, 0.03);
    let vp = variational();
    for &(nx, ny) in &[(16, 12), (64, 48)] {
        let dom = domain(nx, ny);
        for &(k, t) in &[(1.0, 0.0), (1.3, 0.5), (0.5, 1.0)] {
            let spec = OptionSpec::call(k, 1.0).unwrap();
            let total: f64 = dirac_source(t, &dom, &quad, &p, &vp, &spec).iter().sum();
            assert_relative_eq!(total, source_mass(t, &dom, &p, &vp, &spec), max_relative = 1e-6);
        }
    }
}

#[test]
fn source_line_moves_with_rate() {
    let spec = OptionSpec::call(1.5, 2.0).unwrap();
    assert_relative_eq!(source_line(0.5, &params(0.0, 0.04), &spec), 1.5f64.ln() - 0.02);
}

#[test]
fn garding_residual_of_zero_is_zero() {
    let dom = domain(8, 6);
    let quad = QuadratureRule::default();
    let fm = assemble(&dom, &quad, &params(0.1, 0.0), &variational());
    let z = DiscreteFunction::zeros(&dom);
    assert_eq!(garding_residual_with(&z, &fm, 0.3, -1.0, &dom, &quad), 0.0);
}

#[test]
fn continuity_ratio_rejects_zero_and_is_scale_invariant() {
    let dom = domain(12, 10);
    let quad = QuadratureRule::default();
    let fm = assemble(&dom, &quad, &params(0.1, 0.0), &variational());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (u, v) = (random_function(&dom, &mut rng), random_function(&dom, &mut rng));
    let z = DiscreteFunction::zeros(&dom);
    assert!(matches!(continuity_ratio(&z, &v, &fm, &dom, &quad), Err(Error::InvalidParameter(_))));
    let r1 = continuity_ratio(&u, &v, &fm, &dom, &quad).unwrap();
    let r2 = continuity_ratio(&u.scaled(2.0), &v, &fm, &dom, &quad).unwrap();
    assert_relative_eq!(r1, r2, max_relative = 1e-13);
}

#[test]
fn continuity_bound_dominates_random_pairs() {
    let dom = domain(24, 18);
    let quad = QuadratureRule::default();
    let (p, vp) = (params(0.1, 0.02), variational());
    let fm = assemble(&dom, &quad, &p, &vp);
    let bound = continuity_bound(&p, &vp, &dom);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (u, v) = (random_function(&dom, &mut rng), random_function(&dom, &mut rng));
        assert!(continuity_ratio(&u, &v, &fm, &dom, &quad).unwrap() <= bound);
    }
}

#[test]
fn triplet_export_is_zero_based() {
    let dom = domain(3, 3);
    let fm = assemble(&dom, &QuadratureRule::default(), &params(0.1, 0.0), &variational());
    let (mut a, mut m) = (Vec::new(), Vec::new());
    fm.write_triplets(&mut a, &mut m).unwrap();
    let text = String::from_utf8(m).unwrap();
    let first: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
    assert_eq!(first.len(), 3);
    assert_eq!((first[0], first[1]), ("0", "0"));
    assert_eq!(text.lines().count(), fm.mass.nnz());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), fm.a.nnz());
}

#[test]
fn assembly_is_deterministic_across_thread_counts() {
    let dom = domain(20, 16);
    let quad = QuadratureRule::default();
    let (p, vp) = (params(0.2, 0.01), variational());
    let build = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| assemble(&dom, &quad, &p, &vp))
    };
    assert_eq!(build(1), build(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_norm_matches_weighted_l2_norm(seed in any::<u64>()) {
        let dom = domain(10, 8);
        let quad = QuadratureRule::default();
        let vp = variational();
        let mass = assemble_mass(&dom, &quad, vp.nu, vp.mu);
        let v = random_function(&dom, &mut ChaCha8Rng::seed_from_u64(seed));
        let from_mass = mass.bilinear(v.values(), v.values()).sqrt();
        let direct = weighted_l2_norm(&v, &dom, &quad, vp.nu, vp.mu);
        prop_assert!((from_mass - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn form_is_linear_in_each_argument(seed in any::<u64>(), c in -3.0f64..3.0) {
        let dom = domain(8, 6);
        let fm = assemble(&dom, &QuadratureRule::default(), &params(0.1, 0.02), &variational());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, w, v) = (random_function(&dom, &mut rng), random_function(&dom, &mut rng), random_function(&dom, &mut rng));
        let comb: Vec<f64> = u.values().iter().zip(w.values()).map(|(a, b)| a + c * b).collect();
        let lhs = fm.a.bilinear(&comb, v.values());
        let rhs = fm.a.bilinear(u.values(), v.values()) + c * fm.a.bilinear(w.values(), v.values());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}
