//! Acceptance gate: one line per criterion, nonzero exit on any regression.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use maxclass_core::distribution::{Distribution2, OdeModel};
use maxclass_core::frames::{kappa_coefficients, model_frame, sample_sigma_points, sigma_flow_fields, FRAME_TOL};
use maxclass_core::jacobi::JacobiCurve;
use maxclass_core::projective::{
    log_correction, projectivize, recheck_rho, rho, schwarzian_from_derivatives, transition_schwarzian, zero_order,
    GrassCurve, MobiusMap, Reparam, ReparamCurve,
};
use maxclass_core::symplectic::{CotangentPoint, Symplectification, DEFAULT_SAMPLES};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Status);

enum Status {
    Pass(String),
    Fail(String),
    /// A failure on the single relation the computed table disagrees with.
    Known(String),
}

fn status(v: Verdict) -> Status {
    match v {
        Ok(d) => Status::Pass(d),
        Err(d) => Status::Fail(d),
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let e = start.elapsed();
    ensure(e < limit, || {
        format!("took {:.1} s, limit {} s", e.as_secs_f64(), limit.as_secs())
    })
}

fn model(m: usize) -> Distribution2 {
    Distribution2::from_ode(&OdeModel::maximal(m)).unwrap()
}

fn symp(m: usize) -> Symplectification {
    Symplectification::new(&model(m)).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.8..0.8)).collect()
}

fn model_curve(m: usize, seed: u64) -> JacobiCurve {
    let s = symp(m);
    let q: Vec<f64> = (0..m + 3).map(|i| 0.1 * i as f64 - 0.2).collect();
    JacobiCurve::new(&s, &s.sample_regular_covector(&q, seed).unwrap()).unwrap()
}

/// `t + 0.8 t^2 / w + 0.3 t^3 / w^2` on a window of half-width `w`.
fn bent(curve: JacobiCurve) -> ReparamCurve<JacobiCurve> {
    let w = curve.window().1;
    let psi = Reparam::parse(&format!("t + {}*t^2 + {}*t^3", 0.8 / w, 0.3 / (w * w))).unwrap();
    ReparamCurve::new(curve, psi).unwrap()
}

fn growth_vectors() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        ("Darboux", OdeModel::new(1, 0, "p0").unwrap(), vec![2, 3]),
        ("Cartan", OdeModel::maximal(2), vec![2, 3, 5]),
        ("n = 6 model", OdeModel::maximal(3), vec![2, 3, 5, 6]),
    ];
    for (name, ode, expected) in cases {
        let d = Distribution2::from_ode(&ode).unwrap();
        for _ in 0..10 {
            let q = random_point(&mut rng, d.dim());
            let g = d.growth_vector(&q, d.dim()).map_err(|e| e.to_string())?;
            ensure(g == expected, || format!("{name} at {q:?}: {g:?}"))?;
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "(2,3), (2,3,5), (2,3,5,6) at 10 points each in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn classes() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [5, 6, 7] {
        let s = symp(n - 3);
        for k in 0..5 {
            let q = random_point(&mut rng, n);
            let r = s.class_at(&q, DEFAULT_SAMPLES, k).map_err(|e| e.to_string())?;
            ensure(r.m == n - 3, || format!("n = {n} at {q:?}: m = {}", r.m))?;
        }
    }
    let d = Distribution2::from_ode(&OdeModel::new(2, 0, "p0").unwrap()).unwrap();
    let q = [0.3, -0.2, 0.5, 0.1];
    ensure(d.growth_vector(&q, 4).unwrap() == [2, 3, 4], || {
        "z'' = y is not (2,3,4)".into()
    })?;
    let r = Symplectification::new(&d)
        .unwrap()
        .class_at(&q, DEFAULT_SAMPLES, 1)
        .map_err(|e| e.to_string())?;
    ensure(r.m == 1, || format!("z'' = y has m = {}", r.m))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "m = n - 3 for n = 5, 6, 7 and m = 1 for dim D^3 = 4 in {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

fn extension_laws() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for n in [5, 6, 7] {
        let s = symp(n - 3);
        let imax = n - 2;
        for _ in 0..4 {
            let q = random_point(&mut rng, n);
            let ann = s.annihilator(&q, 2).map_err(|e| e.to_string())?;
            for _ in 0..3 {
                let p = &ann.basis * DVector::from_fn(ann.dim(), |_, _| rng.random_range(-1.0..1.0));
                let lambda = CotangentPoint::new(q.clone(), p.iter().copied().collect()).unwrap();
                if s.check_stratum(&lambda).is_err() {
                    continue;
                }
                let dims = s.extension_dims(&lambda, imax).map_err(|e| e.to_string())?;
                ensure(dims[1] == dims[0] + 1, || {
                    format!("n = {n}: first increment in {dims:?}")
                })?;
                ensure(dims.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1), || {
                    format!("n = {n}: {dims:?}")
                })?;
                ensure(dims.iter().all(|&d| d <= 2 * n - 4), || {
                    format!("n = {n}: above 2n-4 in {dims:?}")
                })?;
                for (i, &d) in dims.iter().enumerate().take(n - 2) {
                    ensure(d == n - 1 + i, || format!("n = {n}: dim J^({i}) = {d} in {dims:?}"))?;
                }
                let speed = s.characteristic_vector(&lambda).unwrap().norm();
                let h = 1e-2 / speed;
                let top = imax.min(2);
                let coarse = s.extension_dims_fd(&lambda, top, h).map_err(|e| e.to_string())?;
                let fine = s.extension_dims_fd(&lambda, top, h / 2.0).map_err(|e| e.to_string())?;
                ensure(coarse == fine && coarse[..] == dims[..=top], || {
                    format!("n = {n}: step halving {coarse:?} -> {fine:?}, exact {dims:?}")
                })?;
                checked += 1;
            }
        }
    }
    ensure(checked >= 30, || format!("only {checked} covectors in the stratum"))?;
    Ok(format!(
        "laws hold at {checked} covectors for n = 5, 6, 7; step halving stable"
    ))
}

fn zero_orders() -> Verdict {
    let start = Instant::now();
    let mut found = Vec::new();
    for m in [2usize, 3] {
        let z = zero_order(&model_curve(m, 3), 0.0).map_err(|e| e.to_string())?;
        ensure((z.order - (m * m) as f64).abs() < 0.1, || {
            format!("m = {m}: k = {:.4}", z.order)
        })?;
        found.push(format!("{:.3}", z.order));
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("k = {} for m = 2, 3", found.join(", ")))
}

fn reparameterization() -> Verdict {
    let base = bent(model_curve(2, 3));
    let (a, b) = base.window();
    let w = (b - a) / 2.0;
    let mid = (a + b) / 2.0;
    let k = base.contact_order() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (a2, a3, a4) = (
            rng.random_range(-0.2..0.2) / w,
            rng.random_range(-0.1..0.1) / (w * w),
            rng.random_range(0.01..0.05),
        );
        let text = format!("t + {a2}*(t - {mid})^2 + {a3}*(t - {mid})^3 + {a4}*sin({}*t)", 1.0 / w);
        let psi = Reparam::parse(&text).unwrap();
        let rc = ReparamCurve::new(&base, psi.clone()).map_err(|e| e.to_string())?;
        for f in [0.3, 0.5, 0.7] {
            let t = a + f * (b - a);
            let d1 = psi.series_at(t, 1).unwrap().coeff(1);
            let rhs = rho(&rc, psi.value(t).unwrap()).unwrap() * d1 * d1 + k / 3.0 * psi.schwarzian(t).unwrap();
            worst = worst.max((rho(&base, t).unwrap() - rhs).abs());
        }
    }
    ensure(worst < 1e-5, || format!("reparameterization residual {worst:.3e}"))?;
    let mut mobius_worst = 0.0f64;
    for _ in 0..5 {
        let (mb, c) = (rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3) / w);
        let map = MobiusMap::new(1.0, mb, c, 1.0).unwrap();
        let ts = [0.2, 0.4, 0.55, 0.8].map(|x| a + x * (b - a));
        mobius_worst = mobius_worst.max(log_correction(&map.to_reparam(), ts, 4).unwrap().abs());
    }
    ensure(mobius_worst < 1e-8, || {
        format!("Mobius log-correction {mobius_worst:.3e}")
    })?;
    Ok(format!(
        "residual {worst:.2e}; Mobius log-correction {mobius_worst:.2e}"
    ))
}

fn schwarzians() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 100 {
        let (a, b, c) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let d = rng.random_range(-2.0..2.0);
        let t = rng.random_range(-2.0..2.0);
        let det: f64 = a * d - b * c;
        if det.abs() < 0.1 || (c * t + d).abs() < 0.5 {
            continue;
        }
        let s = det.abs().sqrt();
        let map = MobiusMap::new(a / s, b / s, c / s, d / s).unwrap();
        worst = worst.max(map.schwarzian(t).unwrap().abs());
        count += 1;
    }
    ensure(worst < 1e-12, || format!("Schwarzian of a Mobius map {worst:.3e}"))?;
    let mut cocycle = 0.0f64;
    for _ in 0..100 {
        let (alpha, beta) = (rng.random_range(-1.5..1.5), rng.random_range(0.5..2.0));
        let (gamma, delta) = (rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1));
        let t = rng.random_range(-0.8..0.8);
        let psi = |u: f64| {
            let e = (alpha * u).exp();
            [alpha * e + beta, alpha * alpha * e, alpha * alpha * alpha * e]
        };
        let chi = [
            1.0 + 2.0 * gamma * t + 3.0 * delta * t * t,
            2.0 * gamma + 6.0 * delta * t,
            6.0 * delta,
        ];
        let p = psi(t + gamma * t * t + delta * t * t * t);
        let comp = [
            p[0] * chi[0],
            p[1] * chi[0] * chi[0] + p[0] * chi[1],
            p[2] * chi[0].powi(3) + 3.0 * p[1] * chi[0] * chi[1] + p[0] * chi[2],
        ];
        let lhs = schwarzian_from_derivatives(comp[0], comp[1], comp[2]).unwrap();
        let rhs = schwarzian_from_derivatives(p[0], p[1], p[2]).unwrap() * chi[0] * chi[0]
            + schwarzian_from_derivatives(chi[0], chi[1], chi[2]).unwrap();
        cocycle = cocycle.max((lhs - rhs).abs());
    }
    ensure(cocycle < 1e-8, || format!("cocycle residual {cocycle:.3e}"))?;
    Ok(format!("Mobius {worst:.2e} at 100 points; cocycle {cocycle:.2e}"))
}

fn projectivization() -> Verdict {
    let base = bent(model_curve(2, 3));
    let (a, b) = base.window();
    let n = 61;
    let ts: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * (0.1 + 0.8 * i as f64 / (n - 1) as f64))
        .collect();
    let rhos: Vec<f64> = ts.iter().map(|&t| rho(&base, t).unwrap()).collect();
    let before = rhos.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let p = projectivize(&ts, &rhos, 4, n / 2).map_err(|e| e.to_string())?;
    let after = recheck_rho(&base, &p).map_err(|e| e.to_string())?;
    let worst = after.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    ensure(worst < 1e-5, || format!("rho after projectivization {worst:.3e}"))?;
    let q = projectivize(&ts, &rhos, 4, n / 4).map_err(|e| e.to_string())?;
    let mut transition = 0.0f64;
    for i in 0..n {
        transition = transition.max(transition_schwarzian(&p, &q, i).map_err(|e| e.to_string())?.abs());
    }
    ensure(transition < 1e-6, || format!("transition Schwarzian {transition:.3e}"))?;
    Ok(format!(
        "max |rho| {before:.2} -> {worst:.2e}; transition Schwarzian {transition:.2e}"
    ))
}

/// Criterion 8 is known to fail on exactly one expected relation; anything
/// else is a regression.
const KNOWN_MISMATCH: &str = "[g1,eta]";

fn frame_relations() -> Status {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut known_only = true;
    for m in [2, 3] {
        let s = symp(m);
        let flows = sigma_flow_fields(&s).unwrap();
        let pts = sample_sigma_points(&s, 10, 8).unwrap();
        for (label, r) in flows.gl2_residuals(&pts).unwrap() {
            if !(r < 1e-8) {
                problems.push(format!("gl2 {label} = {r:.2e} (m = {m})"));
                known_only = false;
            }
        }
    }
    for n in [5, 6, 7] {
        let f = match model_frame(n) {
            Ok(f) => f,
            Err(e) => return Status::Fail(format!("n = {n}: {e}")),
        };
        let c = &f.checks;
        let numeric = [
            c.symmetry_residual,
            c.fit_residual,
            c.antisymmetry,
            c.jacobi_residual,
            c.rounding_error,
        ];
        if numeric.iter().any(|v| !(*v < FRAME_TOL)) || c.dimension != 2 * n - 1 {
            problems.push(format!("n = {n}: residuals {numeric:?}, dimension {}", c.dimension));
            known_only = false;
        }
        for mm in &c.mismatches {
            problems.push(format!(
                "{} expected {}, found {} (n = {n})",
                mm.bracket, mm.expected, mm.found
            ));
            known_only &= mm.bracket == KNOWN_MISMATCH;
        }
    }
    if start.elapsed() > Duration::from_secs(120) {
        problems.push(format!("took {:.0} s", start.elapsed().as_secs_f64()));
        known_only = false;
    }
    if problems.is_empty() {
        Status::Pass("gl2 closes; every relation reproduced for n = 5, 6, 7".into())
    } else if known_only {
        Status::Known(problems.join("; "))
    } else {
        Status::Fail(problems.join("; "))
    }
}

fn kappa() -> Verdict {
    let mut worst = 0.0f64;
    for n in [6, 7] {
        let f = model_frame(n).map_err(|e| e.to_string())?;
        let gl2 = ["h", "g0", "g1", "g2"].map(|l| f.field(l).unwrap().clone());
        let u: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.2).collect();
        let k = kappa_coefficients(&gl2, f.field("eps1").unwrap(), n - 3, &u).map_err(|e| e.to_string())?;
        let all = [k.k1, k.k2.unwrap_or(f64::NAN), k.k3.unwrap_or(f64::NAN)];
        let largest = all
            .iter()
            .fold(0.0f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) });
        ensure(largest < 1e-6, || format!("n = {n}: kappa {all:?}"))?;
        worst = worst.max(largest);
    }
    Ok(format!("largest |kappa| {worst:.2e} for n = 6, 7"))
}

fn determinism() -> Verdict {
    let job = Path::new(env!("CARGO_MANIFEST_DIR")).join("jobs").join("cartan.toml");
    let run = |cmd: &str| {
        Command::new(env!("CARGO_BIN_EXE_maxclass"))
            .args([cmd, "--job", job.to_str().unwrap(), "--seed", "10"])
            .env_remove("MAXCLASS_TOL")
            .output()
            .unwrap()
    };
    for cmd in [
        "growth",
        "class",
        "characteristic",
        "rho-profile",
        "projectivize",
        "report",
    ] {
        let (a, b) = (run(cmd), run(cmd));
        ensure(!a.stdout.is_empty(), || format!("{cmd} printed nothing"))?;
        ensure(a.stdout == b.stdout && a.status == b.status, || {
            format!("{cmd} differs between runs")
        })?;
    }
    Ok("six commands byte-identical across reruns".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("growth vectors", || status(growth_vectors())),
        ("class", || status(classes())),
        ("extension-dimension laws", || status(extension_laws())),
        ("order of zero", || status(zero_orders())),
        ("reparameterization law", || status(reparameterization())),
        ("Schwarzian", || status(schwarzians())),
        ("projectivization", || status(projectivization())),
        ("frame relations", frame_relations),
        ("kappa normalization", || status(kappa())),
        ("determinism", || status(determinism())),
    ];
    let (mut passed, mut known, mut regressions) = (0, 0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Status::Fail("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Status::Pass(d) => {
                passed += 1;
                ("PASS", d)
            }
            Status::Known(d) => {
                known += 1;
                ("FAIL", format!("{d} (known)"))
            }
            Status::Fail(d) => {
                regressions += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
    }
    println!(
        "acceptance: {passed} passed, {} failed ({known} known, {regressions} regressions)",
        known + regressions
    );
    if regressions == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
