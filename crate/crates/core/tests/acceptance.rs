//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process fails if any criterion fails.

use std::time::{Duration, Instant};

use homographic::characteristics::{
    characteristics, cohesion, moment_g, moment_g_pairwise, rms_size_b,
};
use homographic::integrator::{compare_to_analytic, integrate_recorded, Method};
use homographic::lagrange::lagrange_solution;
use homographic::minsize::{
    brute_force_w, flatness_report, g_ratio_e, min_size_attainment, w_closed_form,
    BruteForceOptions,
};
use homographic::solver::{
    lower_bound_cl, minimize, multistart, objective_and_gradient, start_configuration,
    MultistartOptions, SolverOptions,
};
use homographic::trajectory::{predicted_profile, sample, Grid, TrajectorySpec};
use homographic::{Configuration, MassSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> MassSpec {
    MassSpec::unit_gravity((0..n).map(|_| rng.gen_range(0.2..5.0)).collect()).unwrap()
}

fn timed(limit: Duration, run: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = run();
    let elapsed = start.elapsed();
    verdict(
        v.pass && elapsed <= limit,
        format!(
            "{}; {:.1} s of {} s allowed",
            v.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn three_body_agreement() -> Verdict {
    timed(Duration::from_secs(30), || {
        let spec = MassSpec::unit_gravity(vec![1.0; 3]).unwrap();
        let catalog = multistart(&spec, 0.5, 50, 2024, &MultistartOptions::default()).unwrap();
        let side = 3f64.cbrt();
        let best = catalog
            .entries
            .iter()
            .map(|e| {
                let side_err = e
                    .result
                    .config
                    .pairwise_distances()
                    .map(|(_, _, d)| (d - side).abs())
                    .fold(0.0, f64::max);
                (side_err, (e.result.c_estimate - 3.0).abs())
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((ds, dc)) => verdict(
                ds <= 1e-6 && dc <= 1e-6,
                format!(
                    "{} classes, side error {ds:.2e}, |3 - C| {dc:.2e}",
                    catalog.entries.len()
                ),
            ),
            None => verdict(false, "no converged class".to_string()),
        }
    })
}

fn residual_gate() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let options = SolverOptions::default();
    let (mut worst, mut converged, mut runs): (f64, usize, usize) = (0.0, 0, 0);
    let mut empty_sets = 0;
    for n in 2..=6 {
        for set in 0..3 {
            let spec = random_masses(&mut rng, n);
            let mut set_converged = 0;
            for k in 0..8 {
                let seed = start_configuration(&spec, 0.5, 100 + set as u64, k, 5);
                runs += 1;
                if let Ok(r) = minimize(&spec, 0.5, &seed, &options) {
                    if r.converged {
                        set_converged += 1;
                        worst = worst.max(r.residual);
                    }
                }
            }
            converged += set_converged;
            empty_sets += usize::from(set_converged == 0);
        }
    }
    verdict(
        worst <= 1e-9 && empty_sets == 0,
        format!("{converged} of {runs} runs converged, worst residual {worst:.2e}"),
    )
}

fn scaling_laws() -> Verdict {
    let lambdas = [0.1, 0.5, 1.0, 2.0, 10.0];
    let (mut fsg, mut g_law, mut tl2, mut virial): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for masses in [
        vec![1.0, 1.0, 1.0],
        vec![1.0, 2.0, 3.0, 4.0],
        vec![0.5, 1.5, 1.0, 2.5, 0.8],
    ] {
        let spec = MassSpec::unit_gravity(masses).unwrap();
        let bests: Vec<_> = lambdas
            .iter()
            .map(|&l| {
                let catalog = multistart(&spec, l, 20, 5, &MultistartOptions::default()).unwrap();
                catalog.best().expect("a converged class").result.clone()
            })
            .collect();
        let c_ref = bests[1].c_estimate;
        for (r, &lambda) in bests.iter().zip(&lambdas) {
            let f = cohesion(&spec, &r.config).unwrap();
            let g = moment_g(&spec, &r.config);
            fsg = fsg.max(rel(f * g.sqrt(), c_ref));
            g_law = g_law.max(rel(g, (c_ref / (2.0 * lambda)).powf(2.0 / 3.0)));
            let orbit = TrajectorySpec::circular(spec.clone(), r.config.clone(), lambda).unwrap();
            for state in sample(&orbit, 16, 1.0, Grid::Phi).unwrap().states {
                let ch = characteristics(&spec, &state).unwrap();
                let l = ch.angular_momentum_norm();
                tl2 = tl2.max(rel(ch.kinetic * l * l, c_ref * c_ref / 2.0));
                virial = virial.max(rel(2.0 * ch.kinetic, ch.f));
            }
        }
    }
    verdict(
        fsg <= 1e-6 && g_law <= 1e-6 && tl2 <= 1e-6 && virial <= 1e-10,
        format!("f√g {fsg:.2e}, g law {g_law:.2e}, TL² {tl2:.2e}, f = 2T {virial:.2e}"),
    )
}

fn lower_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_gap, mut worst_three): (f64, f64) = (f64::INFINITY, 0.0);
    let mut entries = 0;
    let mut empty = 0;
    for set in 0..20 {
        let n = 3 + set % 3;
        let spec = random_masses(&mut rng, n);
        let catalog =
            multistart(&spec, 0.5, 20, set as u64, &MultistartOptions::default()).unwrap();
        let cl = lower_bound_cl(&spec);
        for e in &catalog.entries {
            worst_gap = worst_gap.min(e.result.c_estimate - cl);
        }
        entries += catalog.entries.len();
        match catalog.best() {
            Some(best) if n == 3 => worst_three = worst_three.max(rel(best.result.c_estimate, cl)),
            Some(_) => {}
            None => empty += 1,
        }
    }
    verdict(
        worst_gap >= -1e-9 && worst_three <= 1e-6 && empty == 0,
        format!("{entries} entries, min C - C_L {worst_gap:.2e}, N=3 equality {worst_three:.2e}"),
    )
}

fn integrator_oracle() -> Verdict {
    timed(Duration::from_secs(60), || {
        let dt = 1e-4;
        let mut details = Vec::new();
        let mut pass = true;
        for (masses, e) in [
            (vec![1.0, 1.0, 1.0], None),
            (vec![1.0, 2.0, 3.0], None),
            (vec![1.0, 1.0, 1.0], Some(0.36f64)),
        ] {
            let spec = MassSpec::unit_gravity(masses).unwrap();
            let seed = lagrange_solution(&spec, 0.5).unwrap().config;
            let orbit = match e {
                None => TrajectorySpec::circular(spec, seed, 0.5).unwrap(),
                Some(e) => TrajectorySpec::pulsating(spec, seed, 0.5, (1.0f64 - e).sqrt()).unwrap(),
            };
            let steps = (orbit.period() / dt).ceil() as usize;
            let run = integrate_recorded(
                orbit.masses(),
                &orbit.state_at_time(0.0),
                dt,
                steps,
                Method::Rk4,
                1,
            )
            .unwrap();
            let r = compare_to_analytic(&run, &orbit).unwrap();
            let ok = !r.collided
                && r.energy_drift <= 1e-8
                && r.lz_drift <= 1e-8
                && (e.is_some() || r.relative_position_error <= 1e-5);
            pass &= ok;
            details.push(format!(
                "{}: pos {:.1e} b, E {:.1e}, Lz {:.1e}",
                if e.is_some() { "pulsating" } else { "circular" },
                r.relative_position_error,
                r.energy_drift,
                r.lz_drift
            ));
        }
        verdict(pass, details.join("; "))
    })
}

fn pulsating_profiles() -> Verdict {
    let spec = MassSpec::unit_gravity(vec![1.0, 2.0, 3.0]).unwrap();
    let seed = lagrange_solution(&spec, 0.5).unwrap().config;
    let (mut fsg, mut kinetic, mut means): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for e in [-0.8, -0.36, -0.2, 0.2, 0.36, 0.8] {
        let orbit = TrajectorySpec::pulsating(spec.clone(), seed.clone(), 0.5, (1.0f64 - e).sqrt())
            .unwrap();
        let n = 4096;
        let traj = sample(&orbit, n + 1, 1.0, Grid::Phi).unwrap();
        let (f0, g0, _) = orbit.seed_values().unwrap();
        let (mut f_sum, mut t_sum) = (0.0, 0.0);
        for (k, (state, &phi)) in traj.states.iter().zip(&traj.phis).enumerate() {
            let ch = characteristics(&spec, state).unwrap();
            fsg = fsg.max(rel(ch.f * ch.g.sqrt(), f0 * g0.sqrt()));
            let expected = predicted_profile(&orbit, phi).unwrap().kinetic;
            kinetic = kinetic.max(rel(ch.kinetic, expected));
            if k < n {
                f_sum += ch.f;
                t_sum += ch.kinetic;
            }
        }
        let (mf, mt) = (f_sum / n as f64, t_sum / n as f64);
        means = means.max(rel(mf, 2.0 * mt / (1.0 + e * e)));
    }
    verdict(
        fsg <= 1e-10 && kinetic <= 1e-10 && means <= 1e-6,
        format!("f√g {fsg:.2e}, T(φ) {kinetic:.2e}, means {means:.2e}"),
    )
}

fn three_dimensional_minimum() -> Verdict {
    timed(Duration::from_secs(300), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let options = BruteForceOptions::default();
        let (mut above, mut below, mut flat): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for k in 0..50 {
            let l = rng.gen_range(0.2..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let t = rng.gen_range(0.1..5.0);
            for n in [2, 3] {
                let spec = random_masses(&mut rng, n);
                let w = w_closed_form(l, t).unwrap();
                let found = brute_force_w(&spec, l, t, &options, k).unwrap();
                above = above.max(found.w / w - 1.0);
                below = below.max(1.0 - found.w / w);
                let report = flatness_report(&spec, &found.state);
                let b = rms_size_b(&spec, &found.state.config);
                let v = (2.0 * t / spec.total_mass()).sqrt();
                flat = flat.max(report.max_abs_z / b).max(report.max_abs_vz / v);
            }
        }
        verdict(
            above <= 0.01 && below <= 1e-6 && flat <= 1e-3,
            format!("excess {above:.2e}, deficit {below:.2e}, flatness {flat:.2e}"),
        )
    })
}

fn ratio_law() -> Verdict {
    let (mut pulsating, mut circular): (f64, f64) = (0.0, 0.0);
    for masses in [
        vec![1.0, 1.0, 1.0],
        vec![1.0, 2.0, 3.0],
        vec![0.2, 4.0, 1.3],
    ] {
        let spec = MassSpec::unit_gravity(masses).unwrap();
        let seed = lagrange_solution(&spec, 0.5).unwrap().config;
        for e in [-0.8, -0.36, 0.0, 0.2, 0.36, 0.8] {
            let orbit =
                TrajectorySpec::pulsating(spec.clone(), seed.clone(), 0.5, (1.0f64 - e).sqrt())
                    .unwrap();
            let traj = sample(&orbit, 301, 2.0, Grid::Time).unwrap();
            for (s, &phi) in min_size_attainment(&spec, &traj)
                .unwrap()
                .iter()
                .zip(&traj.phis)
            {
                pulsating = pulsating.max((s.ratio - g_ratio_e(e, phi).unwrap()).abs());
            }
        }
        let orbit = TrajectorySpec::circular(spec.clone(), seed, 0.5).unwrap();
        let traj = sample(&orbit, 101, 1.0, Grid::Time).unwrap();
        for s in min_size_attainment(&spec, &traj).unwrap() {
            circular = circular.max((s.ratio - 1.0).abs());
        }
    }
    verdict(
        pulsating <= 1e-8 && circular <= 1e-9,
        format!("pulsating |g/W - G| {pulsating:.2e}, circular |g/W - 1| {circular:.2e}"),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 2 + k % 4;
        let spec = random_masses(&mut rng, n);
        let config = loop {
            let coords: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Ok(c) = Configuration::new(2, coords) {
                if c.min_pairwise_distance() > 0.05 {
                    break c;
                }
            }
        };
        let lambda = rng.gen_range(0.1..5.0);
        let (_, grad) = objective_and_gradient(&spec, &config, lambda).unwrap();
        let h = 1e-6 * rms_size_b(&spec, &config);
        let value = |c: Vec<f64>| {
            let c = Configuration::new(2, c).unwrap();
            cohesion(&spec, &c).unwrap() + lambda * moment_g(&spec, &c)
        };
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..2 * n {
            let mut plus = config.coords().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (value(plus) - value(minus)) / (2.0 * h);
            diff += (fd - grad[i]).powi(2);
            norm += grad[i] * grad[i];
        }
        worst = worst.max((diff / norm).sqrt());
    }
    verdict(
        worst <= 1e-5,
        format!("worst relative error {worst:.2e} over 100 configurations"),
    )
}

fn moment_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 2 + k % 5;
        let dim = 2 + k % 2;
        let spec = random_masses(&mut rng, n);
        let coords: Vec<f64> = (0..dim * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let config = Configuration::new(dim, coords).unwrap().centered(&spec);
        worst = worst.max(rel(
            moment_g_pairwise(&spec, &config),
            moment_g(&spec, &config),
        ));
    }
    verdict(
        worst <= 1e-12,
        format!("worst relative difference {worst:.2e}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("three-body analytic agreement", three_body_agreement),
        ("residual gate", residual_gate),
        ("scaling laws", scaling_laws),
        ("lower bound", lower_bound),
        ("integrator oracle", integrator_oracle),
        ("pulsating profiles", pulsating_profiles),
        ("3D minimum", three_dimensional_minimum),
        ("ratio law", ratio_law),
        ("gradient correctness", gradient_check),
        ("pairwise moment identity", moment_identity),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {} ({name}): {}",
            if v.pass { "PASS" } else { "FAIL" },
            k + 1,
            v.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
