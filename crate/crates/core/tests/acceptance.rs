//! Acceptance suite: one PASS/FAIL line per criterion, run with
//! `cargo test -p hotgas --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use hotgas::equilibrium::{mean_field_energy, solve_thermal_equilibrium, ThermalOptions};
use hotgas::experiments::{
    calibrate_delta, estimate_next_order_partition, estimate_rate, minimize_hamiltonian,
    split_hamiltonian, AnnealOptions, PartitionOptions, RateMode, RateOptions,
};
use hotgas::fields::{
    estimate_specific_entropy, poisson_relative_entropy_rate, tagged_empirical_field, EntropyReference,
};
use hotgas::pointconfig::{config_distance, min_separation, regularize_with_report, Domain, PointConfig};
use hotgas::sampling::{
    acceptance_probability, rng_from_seed, sample_poisson_box, sample_poisson_inhomogeneous,
    BetaMode, GibbsChain, GibbsSpec, Proposal, SamplerConfig,
};
use hotgas::stats::chi_square;
use hotgas::torus::{
    convolve, min_image, GridMeasure, KernelSpec, Potential, SignedGridField, TorusGeometry,
};
use rand::Rng;
use statrs::distribution::{Discrete, Poisson};

struct Outcome {
    pass: bool,
    detail: String,
}

fn reference_potential() -> Potential {
    Potential::Cosine { amplitude: 1.5, mode: 1 }
}

fn closed_form_noninteracting() -> Outcome {
    let g = TorusGeometry::new(1, 1.0, 64).unwrap();
    let v = reference_potential().sample(&g).unwrap();
    let theta = 1.0;
    let sol = solve_thermal_equilibrium(&KernelSpec::zero(g), &v, theta, &ThermalOptions::default()).unwrap();
    let w: Vec<f64> = v.values().iter().map(|x| (-theta * x).exp()).collect();
    let z: f64 = w.iter().sum::<f64>() * g.cell_volume();
    let err = sol.mu_theta.values().iter().zip(&w).map(|(m, e)| (m - e / z).abs()).fold(0.0, f64::max);
    Outcome { pass: err <= 1e-10, detail: format!("max cell error {err:.2e}") }
}

fn euler_lagrange_residual() -> Outcome {
    let g = TorusGeometry::new(1, 1.0, 128).unwrap();
    let k = KernelSpec::cosine(g, 1.0).unwrap();
    let v = reference_potential().sample(&g).unwrap();
    let theta = 1.0;
    let sol = solve_thermal_equilibrium(&k, &v, theta, &ThermalOptions::default()).unwrap();
    // independent check: h by direct summation
    let n = g.resolution();
    let mu = sol.mu_theta.values();
    let lhs: Vec<f64> = (0..n)
        .map(|i| {
            let h: f64 = (0..n).map(|j| (2.0 * PI * (i as f64 - j as f64) / n as f64).cos() * mu[j]).sum::<f64>()
                * g.cell_volume();
            2.0 * h + v.values()[i] + mu[i].ln() / theta
        })
        .collect();
    let c = lhs.iter().sum::<f64>() / n as f64;
    let res = lhs.iter().map(|x| (x - c).abs()).fold(0.0, f64::max);
    Outcome { pass: res <= 1e-7, detail: format!("sup residual {res:.2e} (solver reports {:.2e})", sol.residual) }
}

fn splitting_identity() -> Outcome {
    let v = reference_potential();
    let mut rng = rng_from_seed(2026);
    let dom = Domain::torus(1, 1.0).unwrap();
    let configs: Vec<PointConfig> = (0..100)
        .map(|_| {
            let pts: Vec<Vec<f64>> = (0..32).map(|_| vec![rng.random::<f64>()]).collect();
            PointConfig::new(dom.clone(), &pts).unwrap()
        })
        .collect();
    let mut worst = Vec::new();
    for n in [32, 64, 128] {
        let g = TorusGeometry::new(1, 1.0, n).unwrap();
        let k = KernelSpec::cosine(g, 1.0).unwrap();
        let opts = ThermalOptions { tol: 1e-12, ..Default::default() };
        let sol = solve_thermal_equilibrium(&k, &v.sample(&g).unwrap(), 1.0, &opts).unwrap();
        let w = configs
            .iter()
            .map(|c| split_hamiltonian(c, &sol, &k, &v).unwrap().residual)
            .fold(0.0, f64::max);
        worst.push(w);
    }
    let pass = worst[2] <= 1e-6 && worst[0] > worst[1] && worst[1] > worst[2];
    Outcome { pass, detail: format!("worst residual at n=32/64/128: {:.2e} / {:.2e} / {:.2e}", worst[0], worst[1], worst[2]) }
}

fn next_order_partition() -> Outcome {
    let v = reference_potential();
    let g = TorusGeometry::new(1, 1.0, 128).unwrap();
    let zero = estimate_next_order_partition(&KernelSpec::zero(g), &v, 1.0, &[1, 2, 3], &PartitionOptions::default()).unwrap();
    let zero_err = zero.iter().map(|e| e.log_k.abs()).fold(0.0, f64::max);
    let k = KernelSpec::cosine(g, 1.0).unwrap();
    let cos = estimate_next_order_partition(&k, &v, 1.0, &[1, 2, 3, 4], &PartitionOptions::default()).unwrap();
    let per_n: Vec<f64> = cos.iter().map(|e| e.log_k_over_n.abs()).collect();
    let trend = per_n.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: zero_err <= 1e-9 && trend,
        detail: format!("g=0 max |log K| {zero_err:.2e}; cos |log K/N| = {per_n:.4?}"),
    }
}

fn poisson_counts() -> Outcome {
    let mut rng = rng_from_seed(5);
    let dom = Domain::cube(2, 0.0, 1.0).unwrap();
    let mut ps = Vec::new();
    for mean in [0.5, 2.0, 8.0] {
        let draws = 100_000;
        let top = 40;
        let mut counts = vec![0.0; top + 1];
        for _ in 0..draws {
            let n = sample_poisson_box(mean, &dom, &mut rng).unwrap().len();
            counts[n.min(top)] += 1.0;
        }
        let law = Poisson::new(mean).unwrap();
        let mut expected: Vec<f64> = (0..top).map(|j| law.pmf(j as u64) * draws as f64).collect();
        expected.push(draws as f64 - expected.iter().sum::<f64>());
        ps.push(chi_square(&counts, &expected, 5.0).2);
    }
    Outcome { pass: ps.iter().all(|&p| p > 0.01), detail: format!("p-values {ps:.3?}") }
}

fn entropy_oracle() -> Outcome {
    let mut rng = rng_from_seed(6);
    let dom = Domain::cube(1, -2.0, 2.0).unwrap();
    let windows: Vec<PointConfig> = (0..10_000).map(|_| sample_poisson_box(2.0, &dom, &mut rng).unwrap()).collect();
    let est = estimate_specific_entropy(&windows, &EntropyReference::Constant(1.0), 4.0, 0.5).unwrap();
    let exact = poisson_relative_entropy_rate(2.0, 1.0).unwrap();
    let rel = (est.value - exact).abs() / exact;
    Outcome {
        pass: rel <= 0.15,
        detail: format!("estimate {:.4} ± {:.4} vs {exact:.4} (relative error {rel:.3})", est.value, est.std_error),
    }
}

fn regularization() -> Outcome {
    let mut rng = rng_from_seed(7);
    let taus = [0.1, 0.05, 0.025];
    let mut count_ok = true;
    let mut sep_ok = true;
    let mut moved_ok = true;
    let mut monotone = 0;
    let mut worst = [0.0f64; 3];
    for i in 0..50 {
        let d = 1 + i % 2;
        let side = if d == 1 { 9.0 } else { 3.0 };
        let dom = Domain::torus(d, side).unwrap();
        let c = sample_poisson_box(if d == 1 { 1.0 } else { 2.0 }, &dom, &mut rng).unwrap();
        let mut dists = Vec::new();
        for (t, &tau) in taus.iter().enumerate() {
            let width = 6.0 * tau;
            let r = regularize_with_report(&c, tau);
            count_ok &= r.config.len() == c.len();
            for cell in &r.triggered {
                let pts: Vec<Vec<f64>> = r
                    .config
                    .points()
                    .filter(|p| {
                        p.iter()
                            .zip(&cell.cell)
                            .zip(&r.cells_per_axis)
                            .all(|((x, &ci), &m)| ((x / width).floor() as usize).min(m - 1) == ci)
                    })
                    .map(|p| p.to_vec())
                    .collect();
                count_ok &= pts.len() == cell.count;
                let sub = PointConfig::new(dom.clone(), &pts).unwrap();
                let q = (cell.count as f64).powf(1.0 / d as f64).ceil();
                sep_ok &= cell.count < 2 || min_separation(&sub) >= 3.0 * tau / q - 1e-12;
            }
            // no point leaves its cell
            for (p, q) in c.points().zip(r.config.points()) {
                moved_ok &= dom.distance(p, q) <= width * (d as f64).sqrt() + 1e-12;
            }
            let dist = config_distance(&c, &r.config).unwrap();
            worst[t] = worst[t].max(dist);
            dists.push(dist);
        }
        if dists[0] >= dists[1] - 1e-12 && dists[1] >= dists[2] - 1e-12 {
            monotone += 1;
        }
    }
    Outcome {
        pass: count_ok && sep_ok && moved_ok && monotone == 50,
        detail: format!(
            "counts preserved {count_ok}, separation {sep_ok}, displacement within cell {moved_ok}, \
             monotone in {monotone}/50 configs, max distance per tau {worst:.4?}"
        ),
    }
}

fn mean_field_compatibility() -> Outcome {
    let g = TorusGeometry::new(1, 1.0, 128).unwrap();
    let k = KernelSpec::cosine(g, 1.0).unwrap();
    let v = reference_potential();
    let opts = ThermalOptions { tol: 1e-8, max_iterations: 1_000_000, ..Default::default() };
    let vg = v.sample(&g).unwrap();
    let sol = solve_thermal_equilibrium(&k, &vg, 1e4, &opts).unwrap();
    let e_min = mean_field_energy(&sol.mu_theta, &k, &vg).unwrap();
    let (_, h) = minimize_hamiltonian(&k, &v, 64, &AnnealOptions { seed: 8, ..Default::default() }).unwrap();
    let rel = (h - e_min).abs() / e_min.abs();
    Outcome { pass: rel <= 0.05, detail: format!("min H/N^2 {h:.5} vs min E_V {e_min:.5} (relative gap {rel:.3})") }
}

fn typical_event_rate() -> Outcome {
    let g = TorusGeometry::new(1, 1.0, 64).unwrap();
    let k = KernelSpec::zero(g);
    let v = reference_potential();
    let sol = solve_thermal_equilibrium(&k, &v.sample(&g).unwrap(), 1.0, &ThermalOptions::default()).unwrap();
    let n = 64;
    let intensity = GridMeasure::new(g, sol.mu_theta.values().iter().map(|m| m * n as f64).collect()).unwrap();
    let target_cfg = sample_poisson_inhomogeneous(&intensity, &mut rng_from_seed(90)).unwrap();
    let mut opts = RateOptions {
        n_list: vec![n],
        samples_per_n: 400,
        m_tags: 64,
        dictionary_size: 128,
        dictionary_seed: 91,
        seed: 92,
        ..Default::default()
    };
    let target = tagged_empirical_field(&target_cfg, opts.m_tags, 6.0).unwrap();
    // the ball radius is the median distance in an independent calibration run
    opts.delta = calibrate_delta(&target, &RateMode::Iid, &sol.mu_theta, n, 0.5, &opts).unwrap();
    opts.seed = 93;
    let est = estimate_rate(&RateMode::Iid, &k, &sol, &target, &opts).unwrap();
    let p = &est.points[0];
    let pass = p.estimate.is_some_and(|r| (-0.1..=0.1).contains(&r));
    Outcome {
        pass,
        detail: format!(
            "delta {:.4}, hits {}/{}, rate {} in [{:.4}, {:.4}]",
            opts.delta,
            p.hits,
            p.samples,
            p.estimate.map_or("undefined (no hits)".into(), |r| format!("{r:.4}")),
            p.lower,
            p.upper
        ),
    }
}

fn property_suites() -> Outcome {
    // pseudometric axioms on random triples
    let mut rng = rng_from_seed(2026);
    let mut violations = 0;
    for t in 0..500 {
        let d = 1 + t % 2;
        let dom = Domain::torus(d, 1.0).unwrap();
        let draw = |rng: &mut hotgas::sampling::SimRng| {
            let m = rng.random_range(1..=8);
            let pts: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
            PointConfig::new(dom.clone(), &pts).unwrap()
        };
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let dist = |x: &PointConfig, y: &PointConfig| config_distance(x, y).unwrap();
        let (ab, ba, bc, ac, aa) = (dist(&a, &b), dist(&b, &a), dist(&b, &c), dist(&a, &c), dist(&a, &a));
        if aa.abs() > 1e-9 || ab < -1e-9 || (ab - ba).abs() > 1e-9 || ac > ab + bc + 1e-9 {
            violations += 1;
        }
    }
    // spectral convolution against the double sum
    let mut conv_err: f64 = 0.0;
    for (d, n) in [(1, 2), (1, 5), (1, 8), (2, 4), (2, 8), (3, 4)] {
        let g = TorusGeometry::new(d, 1.3, n).unwrap();
        let raw: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let table: Vec<f64> = (0..g.len()).map(|i| raw[i] + raw[g.negate(i)]).collect();
        let kernel = KernelSpec::tabulated(g, table.clone()).unwrap();
        let f = SignedGridField::new(g, (0..g.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        let fast = convolve(&kernel, &f).unwrap();
        let mut ia = vec![0; d];
        let mut ib = vec![0; d];
        let mut diff = vec![0; d];
        for i in 0..g.len() {
            g.unflatten(i, &mut ia);
            let mut s = 0.0;
            for j in 0..g.len() {
                g.unflatten(j, &mut ib);
                for a in 0..d {
                    diff[a] = (ia[a] + n - ib[a]) % n;
                }
                s += table[g.flatten(&diff)] * f.values()[j];
            }
            conv_err = conv_err.max((fast.values()[i] - s * g.cell_volume()).abs());
        }
    }
    // detailed balance on an enumerated two-particle, four-site toy
    let g = TorusGeometry::new(1, 1.0, 4).unwrap();
    let spec = GibbsSpec {
        kernel: KernelSpec::tabulated(g, vec![0.9, -0.3, 0.2, -0.3]).unwrap(),
        potential: Potential::Grid(SignedGridField::new(g, vec![0.1, 0.7, -0.4, 0.0]).unwrap()),
        n_particles: 2,
        beta_mode: BetaMode::Explicit { beta: 1.7 },
    };
    let cfg = SamplerConfig { proposal: Proposal::Lattice { sites_per_axis: 4 }, ..Default::default() };
    let mut chain = GibbsChain::new(spec.clone(), cfg, None, rng_from_seed(0)).unwrap();
    let states: Vec<Vec<f64>> = (0..16).map(|s| vec![(s % 4) as f64 / 4.0, (s / 4) as f64 / 4.0]).collect();
    let weights: Vec<f64> = states.iter().map(|s| (-1.7 * spec.hamiltonian(s)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut flow_err: f64 = 0.0;
    for a in 0..16 {
        for b in 0..16 {
            let moved: Vec<usize> = (0..2).filter(|&i| states[a][i] != states[b][i]).collect();
            if moved.len() != 1 {
                continue;
            }
            let i = moved[0];
            let rate = |chain: &mut GibbsChain, from: &[f64], to: f64| {
                chain.set_state(from).unwrap();
                acceptance_probability(chain.beta(), chain.delta_energy(i, &[to])) / 8.0
            };
            let fab = weights[a] / z * rate(&mut chain, &states[a], states[b][i]);
            let fba = weights[b] / z * rate(&mut chain, &states[b], states[a][i]);
            flow_err = flow_err.max((fab - fba).abs());
        }
    }
    let _ = min_image(0.0, 1.0);
    Outcome {
        pass: violations == 0 && conv_err <= 1e-11 && flow_err <= 1e-12,
        detail: format!("{violations} axiom violations in 500 triples, convolution error {conv_err:.1e}, flow imbalance {flow_err:.1e}"),
    }
}

/// Criteria that fail with a faithful implementation. They still print FAIL.
///
/// 7: the displacement of a triggered point is its offset from the centre of
/// its cell, which is bounded by the cell size but not monotone in τ (points
/// at 0.2 and 0.4 move by 0.025 at τ = 0.1 and by 0.05 at τ = 0.05), and a
/// point that crosses the boundary of a centred cube □_k becomes an unmatched
/// atom in that term of the distance. Only the bound shrinks with τ.
const KNOWN_FAILURES: &[&str] = &["7 regularization"];

#[test]
fn acceptance_suite() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 closed-form thermal equilibrium (g=0)", Duration::from_secs(1), closed_form_noninteracting),
        ("2 Euler-Lagrange residual", Duration::from_secs(10), euler_lagrange_residual),
        ("3 splitting identity", Duration::from_secs(30), splitting_identity),
        ("4 next-order partition function", Duration::from_secs(300), next_order_partition),
        ("5 Poisson count law", Duration::from_secs(30), poisson_counts),
        ("6 specific entropy oracle", Duration::from_secs(120), entropy_oracle),
        ("7 regularization", Duration::from_secs(60), regularization),
        ("8 mean-field compatibility", Duration::from_secs(300), mean_field_compatibility),
        ("9 typical-event rate", Duration::from_secs(600), typical_event_rate),
        ("10 metric and kernel property suites", Duration::from_secs(60), property_suites),
    ];
    let mut failed = Vec::new();
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed < limit;
        println!(
            "{} criterion {name}: {} [{:.2?} / limit {:?}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed,
            limit
        );
        if !pass {
            failed.push(name);
        }
    }
    let unexpected: Vec<_> = failed.iter().filter(|n| !KNOWN_FAILURES.contains(n)).collect();
    assert!(unexpected.is_empty(), "failed criteria: {unexpected:?}");
    let recovered: Vec<_> = KNOWN_FAILURES.iter().filter(|n| !failed.contains(n)).collect();
    assert!(recovered.is_empty(), "criteria now pass, update KNOWN_FAILURES: {recovered:?}");
}
