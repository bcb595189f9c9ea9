//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#![allow(clippy::needless_range_loop)]
use std::fs;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use neurogrid::coding::{first_spike_latency, latency_encode, LatencyCodingParams};
use neurogrid::grid::{build_admittance, kirchhoff_residual, solve_power_flow, DroopSource};
use neurogrid::neuron::{spike_times_constant_input, LifParams};
use neurogrid::plasticity::{hebbian_trajectory, principal_component_check};
use neurogrid::scenarios::{
    correlation_analysis, run_scenario, solve_mu, FiringSample, RunOptions, RunSeries, ScenarioConfig, ScenarioId,
    ScenarioOutcome,
};
use neurogrid::{SystemConfig, TieLine, Topology};
use neurogrid_cli::{parse_config, simulate, SimulateArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run(id: ScenarioId) -> Result<ScenarioOutcome, String> {
    let sys = SystemConfig::default();
    run_scenario(&ScenarioConfig::preset(id, &sys), &sys, &RunOptions::default()).map_err(|e| e.to_string())
}

fn criterion_1() -> Check {
    let p = |th| LifParams::with_tau(1.0, 1e-3, th).unwrap();
    let spikes = |i: f64, th: f64| spike_times_constant_input(i, &p(th), 1e-5, 0.05).unwrap();
    let isi = |s: &[f64]| s[1] - s[0];
    let a = spikes(0.5, 0.4);
    let b = spikes(0.5, 0.8);
    let c = spikes(1.0, 0.4);
    let d = spikes(1.0, 0.8);
    let ok = !a.is_empty() && b.is_empty() && c.len() >= 2 && d.len() >= 2 && isi(&c) < isi(&d);
    let detail = if c.len() >= 2 && d.len() >= 2 {
        format!(
            "{} / {} / {} / {} spikes, ISI {:.3} ms < {:.3} ms",
            a.len(),
            b.len(),
            c.len(),
            d.len(),
            isi(&c) * 1e3,
            isi(&d) * 1e3
        )
    } else {
        format!("{} / {} / {} / {} spikes", a.len(), b.len(), c.len(), d.len())
    };
    ensure(ok, detail)
}

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for &i in &[0.6, 1.0, 2.5, 5.0, 12.0] {
        for &(v_th, tau) in &[(0.5, 1e-3), (0.2, 0.25e-3), (0.4, 5e-3), (0.55, 2e-3)] {
            let dt = tau / 200.0;
            let expect = latency_encode(i, 1.0, &LatencyCodingParams { tau, v_th });
            let times =
                spike_times_constant_input(i, &LifParams::with_tau(1.0, tau, v_th).unwrap(), dt, expect + 10.0 * dt)
                    .unwrap();
            worst = worst.max((first_spike_latency(&times, 0.0) - expect).abs() / dt);
            n += 1;
        }
    }
    ensure(worst <= 2.0, format!("{n} combinations, worst error {worst:.3}·dt"))
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        x[r] = (b[r] - (r + 1..n).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
    }
    x
}

fn topology(n: usize, ties: &[(usize, usize, f64)]) -> Topology {
    Topology {
        n_buses: n,
        ties: ties
            .iter()
            .enumerate()
            .map(|(i, &(a, b, r))| TieLine {
                id: format!("t{i}"),
                from_bus: a,
                to_bus: b,
                resistance: r,
            })
            .collect(),
        psi: (0..n)
            .map(|k| (0..n).map(|l| f64::from(u8::from(k == l))).collect())
            .collect(),
    }
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut resid, mut oracle): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let mut ties = vec![];
        for k in 1..4 {
            ties.push((rng.gen_range(0..k), k, rng.gen_range(0.05..2.0)));
        }
        for (a, b) in [(0, 2), (1, 3), (0, 3)] {
            if rng.gen_bool(0.5) && !ties.iter().any(|t| (t.0, t.1) == (a, b)) {
                ties.push((a, b, rng.gen_range(0.05..2.0)));
            }
        }
        let droops: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..5.0)).collect();
        let loads: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mut online: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.8)).collect();
        online[rng.gen_range(0..4)] = true;
        let y = build_admittance(&topology(4, &ties)).map_err(|e| e.to_string())?;
        let src: Vec<DroopSource> = droops
            .iter()
            .map(|r| DroopSource {
                v_ref: 315.0,
                resistance: *r,
            })
            .collect();
        let flow = solve_power_flow(&y, &src, &loads, &online).map_err(|e| e.to_string())?;
        resid = kirchhoff_residual(&y, &flow, &loads)
            .iter()
            .fold(resid, |m, r| m.max(r.abs()));
        let mut a = vec![vec![0.0; 4]; 4];
        let mut b: Vec<f64> = loads.iter().map(|l| -l).collect();
        for &(i, j, r) in &ties {
            a[i][i] += 1.0 / r;
            a[j][j] += 1.0 / r;
            a[i][j] -= 1.0 / r;
            a[j][i] -= 1.0 / r;
        }
        for k in (0..4).filter(|k| online[*k]) {
            a[k][k] += 1.0 / droops[k];
            b[k] += 315.0 / droops[k];
        }
        let v = gauss(a, b);
        oracle = (0..4).fold(oracle, |m, k| m.max((v[k] - flow.voltages[k]).abs()));
    }
    let y = build_admittance(&topology(2, &[(0, 1, 0.4)])).map_err(|e| e.to_string())?;
    let src = [DroopSource {
        v_ref: 315.0,
        resistance: 2.0,
    }; 2];
    let sym = solve_power_flow(&y, &src, &[4.0, 4.0], &[true, true]).map_err(|e| e.to_string())?;
    let gap = (sym.currents[0] - sym.currents[1]).abs();
    ensure(
        resid < 1e-9 && oracle < 1e-9 && gap <= 1e-12 && (sym.currents[0] - 4.0).abs() <= 1e-12,
        format!("max residual {resid:.1e} A, max oracle gap {oracle:.1e} V, symmetric share gap {gap:.1e} A"),
    )
}

fn window_mean(s: &RunSeries, x: &[f64], a: f64, b: f64) -> f64 {
    let (i, j) = (s.index_at(a), s.index_at(b));
    x[i..j].iter().sum::<f64>() / (j - i) as f64
}

fn criterion_4(case_i: &ScenarioOutcome) -> Check {
    let m = &case_i.metrics;
    let dv = (m.mean_voltage - 315.0).abs() / 315.0;
    ensure(
        case_i.divergence.is_none() && dv <= 0.01 && m.sharing_error <= 0.05 && m.delta_r_settle_max <= 0.2,
        format!(
            "mean V {:.2} ({:.2}%), sharing error {:.4}, ΔR settles in {:.3} s",
            m.mean_voltage,
            dv * 100.0,
            m.sharing_error,
            m.delta_r_settle_max
        ),
    )
}

fn criterion_5(case_i: &ScenarioOutcome, case_ii: &ScenarioOutcome) -> Check {
    let (a, b) = (&case_i.metrics, &case_ii.metrics);
    let ratio = b.oscillation_index_delta_r / a.oscillation_index_delta_r.max(1e-12);
    let detail = format!(
        "ΔR index {:.4} vs {:.4} (×{:.1}); g_syn index {:.4} vs {:.4}; diverged: {}",
        b.oscillation_index_delta_r,
        a.oscillation_index_delta_r,
        ratio,
        b.oscillation_index,
        a.oscillation_index,
        b.diverged
    );
    ensure(
        b.diverged || (ratio >= 10.0 && b.oscillation_index_delta_r >= 0.1),
        detail,
    )
}

fn criterion_6(case_iii: &ScenarioOutcome) -> Check {
    let s = &case_iii.series;
    let total = |a, b| (0..4).map(|k| window_mean(s, &s.i_out[k], a, b)).sum::<f64>();
    let (pre, up, down) = (total(0.7, 1.0), total(1.7, 2.0), total(5.7, 6.0));
    let before_down = total(4.7, 5.0);
    let m = &case_iii.metrics;
    ensure(
        up > pre && down < before_down && m.trigger_violations == 0 && m.spikes_sv > 0,
        format!(
            "ΣI {pre:.2} → {up:.2} A after the rise, {before_down:.2} → {down:.2} A after the drop; {} burst spikes, {} trigger violations",
            m.spikes_sv, m.trigger_violations
        ),
    )
}

fn criterion_7(case_iv: &ScenarioOutcome) -> Check {
    let s = &case_iv.series;
    let after = s.index_at(4.0 + 1e-3);
    let i3_zero = s.i_out[2][after..].iter().all(|i| *i == 0.0);
    let spikes3 = case_iv.spikes.iter().filter(|r| r.der_id == 3 && r.t > 4.0).count();
    let shares = |a, b| {
        let m: Vec<f64> = [0, 1, 3].iter().map(|k| window_mean(s, &s.i_out[*k], a, b)).collect();
        let t: f64 = m.iter().sum();
        m.into_iter().map(|x| x / t).collect::<Vec<_>>()
    };
    let (p, q) = (shares(4.3, 5.0), shares(5.2, 6.0));
    let drift = p.iter().zip(&q).map(|(a, b)| (b / a - 1.0).abs()).fold(0.0, f64::max);
    let served = case_iv.metrics.load_served_error;
    ensure(
        i3_zero && spikes3 == 0 && served < 0.01 && drift <= 0.05,
        format!(
            "I_3 = 0 after 4 s: {i3_zero}, DER-3 spikes after 4 s: {spikes3}, load served error {:.2}%, share drift across 5 s {:.2}%",
            served * 100.0,
            drift * 100.0
        ),
    )
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 1.0;
    let mut n = 0;
    while n < 50 {
        // Top eigenvalue 1, the rest at most 0.9.
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let q = a.qr().q();
        let eig = DVector::from_vec(vec![
            1.0,
            rng.gen_range(0.0..0.9),
            rng.gen_range(0.0..0.9),
            rng.gen_range(0.0..0.9),
        ]);
        let c = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let w0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Power-iteration oracle for the dominant direction.
        let mut v = DVector::from_element(4, 1.0);
        for _ in 0..3000 {
            v = &c * v;
            v /= v.norm();
        }
        let w0v = DVector::from_vec(w0.clone());
        if (w0v.dot(&v) / w0v.norm()).abs() < 0.05 {
            continue;
        }
        let w = hebbian_trajectory(&c, &DMatrix::identity(4, 4), &w0, 1.0, 100.0, 0.01).map_err(|e| e.to_string())?;
        let wv = DVector::from_vec(w.clone());
        let cos = (wv.dot(&v) / wv.norm()).abs();
        let check = principal_component_check(&c, &w).map_err(|e| e.to_string())?;
        worst = worst.min(cos).min(check.score);
        n += 1;
    }
    ensure(worst >= 0.99, format!("{n} matrices, worst alignment {worst:.6}"))
}

fn criterion_9(sweep: &ScenarioOutcome) -> Check {
    let (mu, kappa) = (0.7, 0.9);
    let inputs: Vec<f64> = (0..8).map(|k| 0.1 + 0.125 * k as f64).collect();
    let outputs: Vec<FiringSample> = (0..3)
        .map(|k| {
            let (i_in, i_out) = (2.0 + k as f64, 1.5);
            FiringSample {
                t: 0.2 + 0.3 * k as f64,
                v_dot: kappa * (mu * 8.0 * i_in - 3.0 * i_out),
                i_in,
                i_out,
            }
        })
        .collect();
    let got = correlation_analysis(&inputs, &outputs, kappa, &[(0.0, 1.0)]).map_err(|e| e.to_string())?[0].mu;
    let direct = solve_mu(kappa * (mu * 2.0 * 5.0 - 1.0 * 4.0), kappa, 2.0, 5.0, 1.0, 4.0);
    let err = (got.unwrap_or(f64::NAN) - mu).abs().max((direct - mu).abs());
    let r2 = sweep.metrics.correlation_r2.unwrap_or(f64::NAN);
    ensure(
        err < 1e-6 && r2 >= 0.9,
        format!(
            "μ recovery error {err:.1e}, sweep R² {r2:.4} over {} windows (slope {:.2})",
            sweep
                .correlation
                .iter()
                .filter(|c| !(0.4..=0.7).contains(&c.c_in))
                .count(),
            sweep.metrics.correlation_slope.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_10() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let args = |name: &str| SimulateArgs {
        scenario: ScenarioId::CaseI,
        config: None,
        out: dir.path().join(name),
        decimation: 20,
        strict_literal: false,
        seed: 0,
    };
    let (_, a) = simulate(&args("a")).map_err(|e| e.to_string())?;
    let (_, b) = simulate(&args("b")).map_err(|e| e.to_string())?;
    let same_hashes = a.files == b.files
        && a.files.iter().all(|f| {
            fs::read(dir.path().join("a").join(&f.name)).ok() == fs::read(dir.path().join("b").join(&f.name)).ok()
        });
    let defaults = parse_config("").map_err(|e| format!("{e:#}"))?;
    let d = &defaults;
    let reference = defaults == SystemConfig::default()
        && d.grid.v_ref == 315.0
        && d.der.capacitance == [450e-6, 500e-6, 480e-6, 520e-6]
        && d.grid.ties.iter().map(|t| t.resistance).collect::<Vec<_>>() == [0.5, 0.25, 0.6, 0.8]
        && (d.der.rated_current, d.der.max_voltage_dev, d.der.static_droop) == (10.0, 20.0, 2.0)
        && (d.droop.a, d.coding.xi, d.coding.kappa) == (2.0, 4.8, 0.9);
    let mut rejected = 0;
    for row in 0..4 {
        let mut c = SystemConfig::default();
        c.grid.psi[row][row] += 0.05;
        let text = neurogrid_cli::emit_config(&c).map_err(|e| e.to_string())?;
        rejected += usize::from(parse_config(&text).is_err());
    }
    ensure(
        same_hashes && reference && rejected == 4,
        format!("identical hashes: {same_hashes}, defaults exact: {reference}, perturbed ψ rows rejected: {rejected}/4"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, limit: f64, started: Instant, result: Check| {
        let secs = started.elapsed().as_secs_f64();
        let (ok, detail) = match result {
            Ok(d) => (secs < limit, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        let limit = if limit.is_finite() {
            format!("limit {limit} s")
        } else {
            "no limit".into()
        };
        println!(
            "criterion {n:2}: {} | {detail} | {secs:.2} s ({limit})",
            if ok { "PASS" } else { "FAIL" }
        );
    };

    let t = Instant::now();
    report(1, 1.0, t, criterion_1());
    let t = Instant::now();
    report(2, 1.0, t, criterion_2());
    let t = Instant::now();
    report(3, 5.0, t, criterion_3());

    let t = Instant::now();
    let case_i = run(ScenarioId::CaseI);
    report(4, 60.0, t, case_i.as_ref().map_err(Clone::clone).and_then(criterion_4));

    let t = Instant::now();
    let case_ii = run(ScenarioId::CaseII);
    let r5 = match (&case_i, &case_ii) {
        (Ok(a), Ok(b)) => criterion_5(a, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(5, 60.0, t, r5);

    let t = Instant::now();
    report(6, 60.0, t, run(ScenarioId::CaseIII).and_then(|o| criterion_6(&o)));
    let t = Instant::now();
    report(7, 60.0, t, run(ScenarioId::CaseIV).and_then(|o| criterion_7(&o)));
    let t = Instant::now();
    report(8, 10.0, t, criterion_8());
    let t = Instant::now();
    report(
        9,
        120.0,
        t,
        run(ScenarioId::CorrelationSweep).and_then(|o| criterion_9(&o)),
    );
    let t = Instant::now();
    report(10, f64::INFINITY, t, criterion_10());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
