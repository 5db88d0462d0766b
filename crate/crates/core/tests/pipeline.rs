use std::f64::consts::PI;

use perforate::capacity::{cap_q_ball, CapacityModel, Integrand};
use perforate::classify::{classify, ClassifyParams, HoleClass};
use perforate::field::Bump;
use perforate::gamma::gamma_gap_study;
use perforate::geometry::{build_perforated_domain, DomainDescriptor};
use perforate::homogenized::{homogenized_minimize, GridSpec};
use perforate::process::{generate, Correlation, MarkLaw, ProcessConfig, Window};
use perforate::quadrature::ShellResolution;
use perforate::slln::{capacity_sum_study, counting_study, StudyConfig};
use proptest::prelude::*;

fn sparse_study() -> StudyConfig {
    StudyConfig {
        intensity: 0.05,
        mark_law: MarkLaw::Constant { rho0: 1.0 },
        correlation: Correlation::Independent,
        domain: DomainDescriptor::unit_cube(3),
        q: 2.0,
        eps_grid: vec![0.1, 0.05],
        replicas: 3,
        classify: ClassifyParams::default(),
        bump: Bump::centred(3, 0.3, 1.0),
        integrand: Integrand::Model,
        mark_power: None,
        shell: ShellResolution { radial: 8, angular: 16 },
        cell_nodes: 400,
        seed: 17,
    }
}

#[test]
fn studies_are_seed_deterministic() {
    let c = sparse_study();
    let a = counting_study(&c).unwrap();
    let b = counting_study(&c).unwrap();
    assert_eq!(a, b);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    let other = counting_study(&StudyConfig { seed: 18, ..c }).unwrap();
    assert_ne!(a.rows[1].samples, other.rows[1].samples);
}

#[test]
fn capacitary_term_matches_capacity_sum() {
    let c = sparse_study();
    let capsum = capacity_sum_study(&c).unwrap();
    let gamma = gamma_gap_study(&c).unwrap();
    let cap = gamma.column("capacitary").unwrap();
    let gm = capsum.column("gm_count_density").unwrap();
    let vg = gamma.column("vg_count_density").unwrap();
    for (e, row) in capsum.rows.iter().enumerate() {
        assert!(row.mean > 0.0, "sparse holes must leave very-good holes");
        assert!((row.mean - cap[e]).abs() <= 1e-12 * row.mean, "{} vs {}", row.mean, cap[e]);
        assert_eq!(gm[e], vg[e]);
    }
}

#[test]
fn gamma_breakdown_adds_up() {
    let c = sparse_study();
    let gamma = gamma_gap_study(&c).unwrap();
    let col = |n: &str| gamma.column(n).unwrap();
    let (bulk, cap, corr, total) = (col("bulk"), col("capacitary"), col("corrections"), col("total"));
    for e in 0..c.eps_grid.len() {
        assert!((bulk[e] + cap[e] + corr[e] - total[e]).abs() <= 1e-12 * total[e]);
        assert!(gamma.rows[e].target > 0.0);
    }
}

/// Discrete energies on grids `h, h/2, h/4` converge with observed order at least one.
#[test]
fn homogenized_energy_converges_with_grid() {
    let model = CapacityModel::model(3, 2.0).unwrap();
    let law = MarkLaw::Constant { rho0: 1.0 };
    let bump = Bump::centred(3, 0.35, 1.0);
    let energies: Vec<f64> = [11usize, 23, 47]
        .iter()
        .map(|&n| {
            let grid = GridSpec { dim: 3, n, half_width: 0.5 };
            homogenized_minimize(grid, &model, &law, 2.0, |x| bump.value(x)).unwrap().energy
        })
        .collect();
    let order = ((energies[0] - energies[1]) / (energies[1] - energies[2])).abs().log2();
    assert!(order >= 1.0, "energies {energies:?}, order {order}");
    assert!(energies.iter().all(|e| *e < 0.0));
}

#[test]
fn empty_process_gives_empty_domain() {
    let cfg = ProcessConfig {
        intensity: 0.0,
        window: Window::centred_cube(3, 5.0),
        mark_law: MarkLaw::Constant { rho0: 1.0 },
        correlation: Correlation::Independent,
        seed: 3,
    };
    let r = generate(&cfg).unwrap();
    assert!(r.is_empty());
    let d = build_perforated_domain(&r, 0.1, 2.0, &DomainDescriptor::unit_cube(3)).unwrap();
    let cls = classify(&d, &r, &ClassifyParams::default()).unwrap();
    assert!(cls.good.is_empty() && cls.bad.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ball_capacity_is_homogeneous(q in 1.1f64..2.9, rho in 0.01f64..50.0, a in 0.01f64..100.0) {
        let base = cap_q_ball(3, q, rho).unwrap();
        let scaled = cap_q_ball(3, q, a * rho).unwrap();
        prop_assert!((scaled - a.powf(3.0 - q) * base).abs() <= 1e-12 * scaled);
    }

    #[test]
    fn model_ball_capacity_in_3d_is_4pi_rho(rho in 0.01f64..50.0) {
        prop_assert!((cap_q_ball(3, 2.0, rho).unwrap() - 4.0 * PI * rho).abs() <= 1e-13 * rho);
    }

    #[test]
    fn classification_invariants_hold_brute_force(
        seed in 0u64..10_000,
        intensity in 0.05f64..3.0,
        eps in 0.08f64..0.2,
        beta in 3.2f64..6.0,
    ) {
        let domain = DomainDescriptor::unit_cube(3);
        let cfg = ProcessConfig {
            intensity,
            window: domain.blown_up_window(eps),
            mark_law: MarkLaw::Pareto { rho_min: 0.5, beta },
            correlation: Correlation::Independent,
            seed,
        };
        let r = generate(&cfg).unwrap();
        let d = build_perforated_domain(&r, eps, 2.0, &domain).unwrap();
        let cls = classify(&d, &r, &ClassifyParams::default()).unwrap();
        let limit = 0.5 * eps * cls.r_eps;
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for &g in &cls.good {
            prop_assert!(d.radii[g] <= limit);
            for &h in &cls.good {
                if h != g {
                    prop_assert!(dist(d.centre(g), d.centre(h)) >= 2.0 * eps * cls.r_eps);
                }
            }
            for &b in &cls.bad {
                prop_assert!(dist(d.centre(g), d.centre(b)) - d.radii[g] - 2.0 * d.radii[b] >= limit);
            }
        }
        prop_assert_eq!(cls.vg.len() + cls.mg.len(), cls.good.len());
        prop_assert!(cls.class.iter().filter(|c| **c == HoleClass::Good).count() == cls.good.len());
    }
}
