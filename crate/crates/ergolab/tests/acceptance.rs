//! Desk-scale acceptance gate. Each test prints one `criterion N: PASS/FAIL`
//! line; tolerances are pinned here, not in the library.

use ergolab::diagnostics::{
    self, LyapunovSpec, Side,
};
use ergolab::kernels::{gwm_step, GuidedState, KernelSpec};
use ergolab::numerics::{fit_power_law, log_sum_exp, RngStream};
use ergolab::operator::{build_grid_operator, estimate_polynomial_rate, geometric_schedule, Evolution};
use ergolab::targets::Target;

fn report(id: &str, pass: bool, detail: &str) {
    if pass {
        println!("criterion {id}: PASS ({detail})");
    } else {
        println!("criterion {id}: FAIL ({detail})");
    }
    assert!(pass, "criterion {id}: {detail}");
}

#[test]
fn criterion_1_polynomial_rate_separation() {
    let target = Target::poly_tail(2.0, 1.0).unwrap();
    let schedule = geometric_schedule(10, 10_000, 25).unwrap();
    let window = (100.0, 10_000.0);
    let x0 = 50.0;

    let rwm = build_grid_operator(&KernelSpec::Rwm { eps: 1.0 }, &target, 2000.0, 4001, 1.0)
        .unwrap();
    let (fit_r, _) =
        estimate_polynomial_rate(&rwm, rwm.cell_of(x0).unwrap(), None, &schedule, window)
            .unwrap();

    let gwm = build_grid_operator(
        &KernelSpec::Gwm { eps: 1.0, lazy: 0.0 },
        &target,
        2000.0,
        4001,
        1.0,
    )
    .unwrap();
    let (fit_g, _) =
        estimate_polynomial_rate(&gwm, gwm.cell_of(x0).unwrap(), Some(1), &schedule, window)
            .unwrap();

    let sep = fit_r.slope - fit_g.slope;
    let pass = (fit_r.slope + 1.0).abs() <= 0.5 && (fit_g.slope + 2.0).abs() <= 0.5 && sep >= 0.6;
    report(
        "1",
        pass,
        &format!(
            "rwm slope {:.3}, gwm slope {:.3}, separation {:.3}",
            fit_r.slope, fit_g.slope, sep
        ),
    );
}

#[test]
fn criterion_2_drift_certificate() {
    let target = Target::poly_tail(2.0, 1.0).unwrap();
    let rep = diagnostics::gwm_polynomial_drift_check(&target, 1.0, 1.0, 0.8, 50.0, 500.0, 46)
        .unwrap();
    let worst = rep
        .margin_plus
        .iter()
        .chain(rep.margin_minus.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    report(
        "2",
        rep.pass && worst < 0.0,
        &format!("alpha* {:.4}, worst margin {:.3e}, c {:.3e}", rep.alpha_star, worst, rep.c),
    );
}

#[test]
fn criterion_3_reachability_lower_bound() {
    let rep = diagnostics::lemma_a2_audit(2.0, 1.0, 3.0, 20, 1.0, 1_000_000, 20260826).unwrap();
    let pass = rep.reach < 1e-4
        && (rep.pi_a_n - 1.0 / 21600.0).abs() < 1e-15
        && rep.tv_lower_bound > 0.0;
    report(
        "3",
        pass,
        &format!(
            "reach {:.2e} (stderr {:.1e}), pi(A_n) {:.6e}, tv lower bound {:.3e}",
            rep.reach, rep.reach_stderr, rep.pi_a_n, rep.tv_lower_bound
        ),
    );
}

#[test]
fn criterion_4a_counterexample_acceptance() {
    let target = Target::SquaredGaussian;
    let kernel = KernelSpec::Counterexample;
    let a3 = diagnostics::total_acceptance(&kernel, &target, 3.0, None).unwrap();
    let a6 = diagnostics::total_acceptance(&kernel, &target, 6.0, None).unwrap();
    let a10 = diagnostics::total_acceptance(&kernel, &target, 10.0, None).unwrap();
    let pass = a10 >= 0.9 && a3 < a6 && a6 < a10;
    report("4a", pass, &format!("acceptance {a3:.4} < {a6:.4} < {a10:.4}"));
}

#[test]
fn criterion_4b_counterexample_drift_ratio() {
    let target = Target::SquaredGaussian;
    let v = LyapunovSpec::ExpQuadratic { c: 0.25 };
    let ratio =
        diagnostics::drift_ratio(&KernelSpec::Counterexample, &target, &v, 6.0, None).unwrap();
    report("4b", ratio < 0.1, &format!("drift ratio {ratio:.4} at x = 6"));
}

#[test]
fn criterion_4c_counterexample_qvv_blowup() {
    let target = Target::SquaredGaussian;
    let v = LyapunovSpec::ExpQuadratic { c: 0.25 };
    let qvv = diagnostics::counterexample_qvv_log(&target, &v, 3.0).unwrap();
    report(
        "4c",
        qvv.log_jump > 1e6,
        &format!("log jump contribution {:.3e} at x = 3", qvv.log_jump),
    );
}

#[test]
fn criterion_4d_counterexample_spectral_gap() {
    let target = Target::SquaredGaussian;
    let op = build_grid_operator(&KernelSpec::Counterexample, &target, 6.0, 1201, 1.0).unwrap();
    let gap = op.spectral_gap().unwrap();
    report("4d", gap > 0.01, &format!("spectral gap {gap:.4} on [-6, 6], N = 1201"));
}

#[test]
fn criterion_5_coupling_decoupling_probability() {
    let target = Target::convex(2.0, 1.0).unwrap();
    let mut ests = Vec::new();
    for &x0 in &[5.0, 20.0, 100.0] {
        ests.push(diagnostics::coupled_rwm_lazy_gwm(&target, x0, 5, 1.0, 100_000, 4242).unwrap());
    }
    let mono = ests.windows(2).all(|w| {
        w[1].p_decouple <= w[0].p_decouple + 2.0 * (w[0].stderr + w[1].stderr)
    });
    let pass = mono && ests[2].p_decouple <= 0.05;
    report(
        "5",
        pass,
        &format!(
            "p_decouple {:.4}, {:.4}, {:.4} at x0 = 5, 20, 100",
            ests[0].p_decouple, ests[1].p_decouple, ests[2].p_decouple
        ),
    );
}

#[test]
fn criterion_6_outward_acceptance_decay() {
    let target = Target::convex(2.0, 1.0).unwrap();
    let a: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&x| diagnostics::one_sided_acceptance(&target, 1.0, x, Side::AwayFromOrigin).unwrap())
        .collect();
    let pass = a.windows(2).all(|w| w[1] < w[0]) && a[2] < 0.011;
    report(
        "6",
        pass,
        &format!("away acceptance {:.4}, {:.4}, {:.5}, {:.6}", a[0], a[1], a[2], a[3]),
    );
}

#[test]
fn criterion_7_displacement_exponents() {
    let target = Target::poly_tail(2.0, 1.0).unwrap();
    let window = (10.0, 2000.0);
    let (fit_r, _) = diagnostics::displacement_exponent(
        &KernelSpec::Rwm { eps: 1.0 },
        &target,
        1000.0,
        10_000,
        200,
        window,
        7,
    )
    .unwrap();
    let (fit_g, _) = diagnostics::displacement_exponent(
        &KernelSpec::Gwm { eps: 1.0, lazy: 0.0 },
        &target,
        1000.0,
        10_000,
        200,
        window,
        7,
    )
    .unwrap();
    let pass = (0.4..=0.6).contains(&fit_r.slope) && (0.85..=1.0).contains(&fit_g.slope);
    report(
        "7",
        pass,
        &format!("rwm exponent {:.3}, gwm exponent {:.3}", fit_r.slope, fit_g.slope),
    );
}

#[test]
fn criterion_8_hitting_time_ratio() {
    let target = Target::convex(2.0, 1.0).unwrap();
    let rep =
        diagnostics::hitting_time_ratio(&target, 500.0, 10.0, 1.0, 1000, 200_000, 99).unwrap();
    let pass = (1.8..=2.2).contains(&rep.ratio);
    report(
        "8",
        pass,
        &format!(
            "ratio {:.3} (rwm {:.0} steps, gwm {:.0} steps)",
            rep.ratio, rep.rwm_mean, rep.gwm_mean
        ),
    );
}

#[test]
fn criterion_9_property_suite() {
    let target = Target::poly_tail(2.0, 1.0).unwrap();

    // operator row-stochasticity and RWM detailed balance
    let rwm = build_grid_operator(&KernelSpec::Rwm { eps: 1.0 }, &target, 30.0, 101, 1.0).unwrap();
    let row_err = rwm
        .rows
        .iter()
        .map(|r| (r.iter().map(|&(_, m)| m).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut db_err: f64 = 0.0;
    for (i, row) in rwm.rows.iter().enumerate() {
        for &(j, m) in row {
            let j = j as usize;
            if j == i {
                continue;
            }
            let back = rwm.rows[j]
                .iter()
                .find(|&&(jj, _)| jj as usize == i)
                .map(|&(_, m)| m)
                .unwrap_or(0.0);
            db_err = db_err.max((rwm.pi_grid[i] * m - rwm.pi_grid[j] * back).abs());
        }
    }

    // stationarity of the lifted operator (light-tailed target so the
    // domain truncation is far below the tolerance)
    let light = Target::convex(2.0, 1.0).unwrap();
    let gwm = build_grid_operator(
        &KernelSpec::Gwm { eps: 1.0, lazy: 0.1 },
        &light,
        30.0,
        101,
        1.0,
    )
    .unwrap();
    let mut ev = Evolution::new(&gwm, gwm.pi_grid.clone());
    ev.advance(1);
    let stat_err = gwm.tv_to_target(&ev.dist) - gwm.tail_out;

    // rejection flips momentum, exactly
    let mut rng = RngStream::new(5, 0);
    let mut s = GuidedState::new(0.0, 1).unwrap();
    let mut flips_ok = true;
    for _ in 0..20_000 {
        let (ns, out) = gwm_step(s, &target, 1.0, 0.0, &mut rng);
        match out {
            ergolab::kernels::GwmOutcome::Rejected => {
                flips_ok &= ns.p == -s.p && ns.x == s.x;
            }
            ergolab::kernels::GwmOutcome::Accepted => flips_ok &= ns.p == s.p,
            ergolab::kernels::GwmOutcome::Hold => flips_ok &= ns.p == s.p && ns.x == s.x,
        }
        s = ns;
    }

    // log_sum_exp bounds
    let terms = [-3.0, -1.0, 0.5, -700.0];
    let lse = log_sum_exp(&terms).unwrap();
    let max = 0.5;
    let lse_ok = lse >= max && lse <= max + (terms.len() as f64).ln();

    // fit_power_law scale invariance
    let xs: Vec<f64> = (1..40).map(|i| i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.7)).collect();
    let f1 = fit_power_law(&xs, &ys, (1.0, 40.0)).unwrap();
    let ys2: Vec<f64> = ys.iter().map(|y| y * 1e6).collect();
    let f2 = fit_power_law(&xs, &ys2, (1.0, 40.0)).unwrap();
    let scale_err = (f1.slope - f2.slope).abs();

    // determinism across thread counts, byte-identical artifacts
    let run_in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let c = diagnostics::coupled_rwm_lazy_gwm(&target, 20.0, 5, 1.0, 20_000, 11).unwrap();
            let (fit, pts) = diagnostics::displacement_exponent(
                &KernelSpec::Gwm { eps: 1.0, lazy: 0.0 },
                &target,
                100.0,
                1000,
                100,
                (5.0, 500.0),
                3,
            )
            .unwrap();
            let mut s = format!("{:?} {:?}\n", c.p_decouple, fit.slope);
            for p in pts {
                s.push_str(&format!("{:?},{:?},{:?}\n", p.t, p.mean_abs_disp, p.stderr));
            }
            s
        })
    };
    let det_ok = run_in_pool(1) == run_in_pool(4);

    let pass = row_err < 1e-9
        && db_err < 1e-9
        && stat_err < 1e-8
        && flips_ok
        && lse_ok
        && scale_err < 1e-12
        && det_ok;
    report(
        "9",
        pass,
        &format!(
            "row err {row_err:.1e}, db err {db_err:.1e}, stationarity {stat_err:.1e}, \
             flips {flips_ok}, lse {lse_ok}, scale err {scale_err:.1e}, determinism {det_ok}"
        ),
    );
}
