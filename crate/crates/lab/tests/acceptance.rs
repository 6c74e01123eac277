//! Acceptance run: one `PASS`/`FAIL` line per criterion, nonzero exit on any failure.

use std::time::Instant;

use cocycle_core::boundary::{self, FullFlag};
use cocycle_core::liegroup::{self, longest_weyl, random_element, GroupElement};
use cocycle_core::rng::{Domain, Stream};
use cocycle_core::Mat;
use cocycle_lab::config::ScenarioConfig;
use cocycle_lab::runner::{self, RunReport};
use cocycle_lab::scenarios;
use serde_json::Value;

struct Check {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn rng(trial: u64, step: u64) -> Stream {
    Stream::new(20_240_601, trial, Domain::Probe, step)
}

// ---------------------------------------------------------------- 1

fn decomposition() -> Check {
    let t0 = Instant::now();
    let (mut rec, mut tr) = (0.0f64, 0.0f64);
    for n in [3, 4] {
        let mut r = rng(n as u64, 0);
        for _ in 0..10_000 {
            let g = random_element(&mut r, n);
            let c = g.kak();
            let scale = g.matrix().max_abs();
            rec = rec.max(c.reassemble().max_abs_diff(g.matrix()) / scale);
            tr = tr.max(c.a_log.iter().sum::<f64>().abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Check {
        id: 1,
        name: "decomposition suite",
        pass: rec <= 1e-9 && tr <= 1e-9 && secs <= 10.0,
        detail: format!("kak residual {rec:.2e}, trace {tr:.2e}, {secs:.2}s"),
    }
}

// ---------------------------------------------------------------- 2

fn identities() -> Check {
    let (mut weights, mut upper, mut lower, mut cocycle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut violations = 0usize;
    let mut r = rng(10, 0);
    for i in 0..10_000 {
        let n = 3 + i % 2;
        let g = random_element(&mut r, n);
        let h = random_element(&mut r, n);
        let z = FullFlag::random(&mut r, n);
        let gh = g.mul(&h);
        let hz = z.act(&h);
        for k in 1..n {
            // Root from weights via the Cartan pairing.
            let omegas: Vec<f64> = (1..n).map(|j| liegroup::omega_val(&g, j).unwrap()).collect();
            weights = weights.max((liegroup::pair_with_roots(n, k, &omegas) - liegroup::alpha_val(&g, k).unwrap()).abs());
            let (wg, wh, wgh) = (liegroup::omega_val(&g, k).unwrap(), liegroup::omega_val(&h, k).unwrap(), liegroup::omega_val(&gh, k).unwrap());
            let whi = liegroup::omega_val(&h.inverse(), k).unwrap();
            upper = upper.max(wgh - wg - wh);
            lower = lower.max(wg - whi - wgh);
            let x = boundary::xi(&gh, &z, k).unwrap() - boundary::xi(&g, &hz, k).unwrap() - boundary::xi(&h, &z, k).unwrap();
            let s = boundary::sigma_hat(&gh, &z, k).unwrap()
                - boundary::sigma_hat(&g, &hz, k).unwrap()
                - boundary::sigma_hat(&h, &z, k).unwrap();
            cocycle = cocycle.max(x.abs()).max(s.abs());
            if boundary::xi(&g, &z, k).unwrap() > wg + 1e-12 {
                violations += 1;
            }
        }
    }
    let pass = weights <= 1e-9 && upper <= 1e-9 && lower <= 1e-9 && cocycle <= 1e-9 && violations == 0;
    Check {
        id: 2,
        name: "algebraic identities",
        pass,
        detail: format!(
            "roots-in-weights {weights:.2e}, subadditive excess {upper:.2e}, lower excess {lower:.2e}, cocycle {cocycle:.2e}, xi>omega {violations}"
        ),
    }
}

// ---------------------------------------------------------------- 3

/// Element whose orthogonal factor `Q` satisfies `Qᵀ = w₀·k2` up to row signs, so that
/// `dist_to_complement(z, ·)` measures how far the top minors of `k2·z` are from singular.
fn bad_set_frame(k2: &Mat) -> GroupElement {
    let n = k2.rows();
    let w0 = longest_weyl(n);
    let mut m = k2.transpose().matmul(&w0.matrix().transpose());
    if liegroup::GroupElement::new(m.clone()).is_err() {
        for i in 0..n {
            m[(i, 0)] = -m[(i, 0)];
        }
    }
    GroupElement::new(m).expect("orthogonal")
}

fn bound_constants() -> Check {
    let eps = 0.1;
    let scales = [1.0, 10.0, 100.0];
    // Sup over samples of each deficit, per scale.
    let mut xi_c = [0.0f64; 3];
    let mut sigma_c = [0.0f64; 3];
    let mut r = rng(20, 0);
    let mut samples = 0;
    while samples < 2000 {
        let n = 3 + samples % 2;
        let mut c = random_element(&mut r, n).kak();
        // Spread the singular values so that every gap is at least 3 at scale 1.
        let mut a: Vec<f64> = (0..n).map(|i| 3.0 * (n - 1 - i) as f64 + r.uniform()).collect();
        let mean = a.iter().sum::<f64>() / n as f64;
        a.iter_mut().for_each(|x| *x -= mean);
        c.a_log = a;
        let z = FullFlag::random(&mut r, n);
        if boundary::dist_to_complement(&z, &bad_set_frame(&c.k2)) <= eps {
            continue;
        }
        samples += 1;
        for (i, &t) in scales.iter().enumerate() {
            let g = c.scaled(t);
            for k in 1..n {
                let d = liegroup::omega_from_log(&g.a_log, k).unwrap() - boundary::xi_kak(&g, &z, k).unwrap();
                xi_c[i] = xi_c[i].max(d);
                let d = liegroup::alpha_from_log(&g.a_log, k).unwrap() - boundary::sigma_hat_kak(&g, &z, k).unwrap();
                sigma_c[i] = sigma_c[i].max(d);
            }
        }
    }
    let ratio = |c: &[f64; 3]| c[1].max(c[2]) / c[0];
    let (rx, rs) = (ratio(&xi_c), ratio(&sigma_c));
    Check {
        id: 3,
        name: "bound-constant stability",
        pass: rx <= 1.5 && rs <= 1.5 && xi_c.iter().chain(&sigma_c).all(|c| c.is_finite()),
        detail: format!("omega-xi sup {xi_c:.3?} ratio {rx:.3}, alpha-sigma sup {sigma_c:.3?} ratio {rs:.3}"),
    }
}

// ---------------------------------------------------------------- scenario runs

fn run_with(scenario: &str, experiments: &str, workers: Option<usize>) -> (RunReport, f64) {
    let mut c: ScenarioConfig = scenarios::bundled_by_name(scenario).expect("bundled");
    c.experiments = serde_json::from_str(experiments).expect("experiment list parses");
    let t0 = Instant::now();
    let out = runner::run(&c, None, workers).expect("valid config");
    (out.report, t0.elapsed().as_secs_f64())
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn fs(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(f).collect()).unwrap_or_default()
}

fn result<'a>(r: &'a RunReport, kind: &str) -> Result<&'a Value, String> {
    r.result(kind).ok_or_else(|| {
        let e = r.experiments.iter().find(|e| e.kind == kind).and_then(|e| e.error.clone());
        format!("{kind} failed: {}", e.unwrap_or_default())
    })
}

fn check(id: usize, name: &'static str, body: impl FnOnce() -> Result<(bool, String), String>) -> Check {
    match body() {
        Ok((pass, detail)) => Check { id, name, pass, detail },
        Err(detail) => Check { id, name, pass: false, detail },
    }
}

fn rotation() -> Check {
    check(4, "rotation scenario", || {
        let (r, _) = run_with(
            "rotation",
            r#"[{"kind": "exponents", "n_steps": 10000, "n_trials": 16},
                {"kind": "conformality", "n_trials": 16, "exponents": {"n_steps": 5000, "n_trials": 8}},
                {"kind": "furstenberg", "cloud": {"n_samples": 50000, "n_chains": 2}, "n_mc": 200000,
                 "exponents": {"n_steps": 10000, "n_trials": 16}}]"#,
            None,
        );
        let e = &result(&r, "exponents")?["report"];
        let (l, se) = (fs(&e["exponents"]), fs(&e["std_errors"]));
        let worst_z = l.iter().zip(&se).map(|(l, s)| l.abs() / s).fold(0.0, f64::max);
        let conf = result(&r, "conformality")?;
        let defect = conf["blocks"].as_array().unwrap().iter().flat_map(|b| fs(&b["max_defect"])).fold(0.0, f64::max);
        let fz = f(&result(&r, "furstenberg")?["max_z"]);
        Ok((worst_z <= 3.0 && defect <= 1e-8 && fz <= 3.0, format!("max |λ|/SE {worst_z:.2}, max defect {defect:.2e}, furstenberg z {fz:.2}")))
    })
}

fn sl2_mixed() -> Check {
    check(5, "SL(2,R) mixed boundary integral", || {
        let (r, secs) = run_with(
            "sl2-mixed",
            r#"[{"kind": "furstenberg", "cloud": {"n_samples": 100000, "n_chains": 2}, "n_mc": 1000000,
                 "exponents": {"n_steps": 50000, "n_trials": 32}}]"#,
            None,
        );
        let res = result(&r, "furstenberg")?;
        let row = &res["rows"][0];
        let (z, i, l) = (f(&row["z"]), f(&row["integral"]), f(&row["lambda"]));
        Ok((z <= 3.0 && secs <= 120.0, format!("integral {i:.5}, time average {l:.5}, z {z:.2}, {secs:.1}s")))
    })
}

fn sl2c() -> Check {
    check(6, "realified SL(2,C) semisimplicity", || {
        let (r, _) = run_with(
            "sl2c-realified",
            r#"[{"kind": "exponents", "n_steps": 20000, "n_trials": 16},
                {"kind": "conformality", "horizons": [100, 1000, 10000], "n_trials": 16,
                 "exponents": {"n_steps": 20000, "n_trials": 16}}]"#,
            None,
        );
        let e = &result(&r, "exponents")?["report"];
        let (gaps, gse) = (fs(&e["root_rates"]), fs(&e["root_rate_errors"]));
        let paired = gaps[0].abs() <= 3.0 * gse[0] && gaps[2].abs() <= 3.0 * gse[2];
        let degenerate: Vec<u64> = e["degenerate"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        let top = &result(&r, "conformality")?["blocks"][0];
        let slope = f(&top["tightness"]["slope"]);
        let verdict = top["tightness"]["verdict"].as_str().unwrap_or("").to_string();
        let transfer = f(&top["form"]["max_transfer_residual"]);
        let pass = paired && degenerate == [1, 3] && slope <= 0.01 && verdict == "TIGHT" && transfer <= 1e-2;
        Ok((
            pass,
            format!(
                "λ1−λ2 {:.1e}±{:.1e}, λ3−λ4 {:.1e}±{:.1e}, I {degenerate:?}, slope {slope:.2e}, {verdict}, transfer {transfer:.2e}",
                gaps[0], gse[0], gaps[2], gse[2]
            ),
        ))
    })
}

fn negative_control() -> Check {
    check(7, "negative controls", || {
        let (r, _) = run_with(
            "diag-negative-control",
            r#"[{"kind": "conformality", "horizons": [100, 1000, 10000], "n_trials": 32,
                 "exponents": {"n_steps": 10000, "n_trials": 16}}]"#,
            None,
        );
        let b = &result(&r, "conformality")?["blocks"][0]["tightness"];
        let m = fs(&b["medians"]);
        let growth = m[m.len() - 1] / m[0];
        let verdict = b["verdict"].as_str().unwrap_or("").to_string();
        let (r, _) = run_with("reducible-line-control", r#"[{"kind": "stationary", "n_samples": 5000, "n_chains": 4}]"#, None);
        let atom = result(&r, "stationary")?["atom"]["verdict"].as_str().unwrap_or("").to_string();
        Ok((growth >= 5.0 && verdict == "UNBOUNDED" && atom == "ATOM", format!("median growth {growth:.1}x, {verdict}, reducible control {atom}")))
    })
}

fn sl3_flags() -> Check {
    check(8, "SL(3) flag structure", || {
        let (r, _) = run_with(
            "sl3-generic",
            r#"[{"kind": "blocks", "n_paths": 500, "angle_tol": 1e-3, "exponents": {"n_steps": 20000, "n_trials": 16}},
                {"kind": "flags", "n_paths": 500, "angle_tol": 1e-3, "exponents": {"n_steps": 20000, "n_trials": 16},
                 "pullback": {"paths": 4, "horizons": [100, 200, 400], "n_samples": 1000}}]"#,
            None,
        );
        let dims = f(&result(&r, "blocks")?["dims_match_fraction"]);
        let fl = result(&r, "flags")?;
        let w0 = f(&fl["w0_fraction"]);
        let pb = &fl["pullback"];
        let mass = fs(&pb["median_mass"]).last().copied().unwrap_or(f64::NAN);
        let dist = f(&pb["max_final_distance"]);
        let pass = dims >= 0.99 && w0 >= 0.99 && mass >= 0.9 && dist <= 1e-2;
        Ok((pass, format!("dims match {dims:.3}, w0 {w0:.3}, pullback mass {mass:.3}, center distance {dist:.2e}")))
    })
}

fn tracking() -> Check {
    check(9, "geodesic tracking", || {
        let exps = r#"[{"kind": "tracking", "horizons": [100, 1000, 10000], "n_trials": 8, "tail": 2000,
                        "exponents": {"n_steps": 20000, "n_trials": 16}}]"#;
        let mut pass = true;
        let mut detail = Vec::new();
        for s in ["sl2-mixed", "sl3-generic"] {
            let (r, _) = run_with(s, exps, None);
            let rel = fs(&result(&r, "tracking")?["relative"]);
            let (first, last) = (rel[0], rel[rel.len() - 1]);
            pass &= last <= 0.1 && last < first;
            detail.push(format!("{s} {first:.3}→{last:.4}"));
        }
        Ok((pass, format!("defect/(n‖Λ‖) at 1e2→1e4: {}", detail.join(", "))))
    })
}

fn reproducibility() -> Check {
    check(10, "reproducibility", || {
        let mut differing = Vec::new();
        for c in scenarios::bundled() {
            let a = runner::run(&c, None, Some(1)).map_err(|e| e.to_string())?.report.to_json();
            let b = runner::run(&c, None, Some(4)).map_err(|e| e.to_string())?.report.to_json();
            if a != b {
                differing.push(c.name.clone());
            }
        }
        Ok((differing.is_empty(), format!("{} bundled scenarios at 1 and 4 workers; differing {differing:?}", scenarios::BUNDLED.len())))
    })
}

fn main() {
    let checks: [fn() -> Check; 10] =
        [decomposition, identities, bound_constants, rotation, sl2_mixed, sl2c, negative_control, sl3_flags, tracking, reproducibility];
    let mut failed = 0;
    for c in checks {
        let t0 = Instant::now();
        let r = c();
        failed += usize::from(!r.pass);
        println!("{} [{}] {}: {} ({:.1}s)", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.detail, t0.elapsed().as_secs_f64());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
