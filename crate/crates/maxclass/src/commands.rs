//! The subcommands and their JSON results.

use std::path::PathBuf;

use maxclass_core::distribution::Distribution2;
use maxclass_core::flow::{flow, FlowOptions};
use maxclass_core::frames::{model_frame, FRAME_TOL};
use maxclass_core::jacobi::JacobiCurve;
use maxclass_core::linalg::decide_rank;
use maxclass_core::projective::{
    projectivize, recheck_rho, rho, transition_schwarzian, ExprMap, GrassCurve, Reparam, ReparamCurve,
};
use maxclass_core::symplectic::{CotangentPoint, Symplectification, DEFAULT_SAMPLES};
use maxclass_core::Expr;
use serde_json::{json, Value};

use crate::job::{JobSpec, Tolerance};
use crate::report::{csv_profile, error_record, frame_records, rank_record};
use crate::{CliError, EXIT_NUMERICAL, EXIT_OK, SCHEMA_VERSION};

/// Largest `|rho|` accepted after projectivization.
pub const PROJECTIVE_TOL: f64 = 1e-5;
/// Largest Schwarzian accepted for the transition between two projective
/// parameters.
pub const TRANSITION_TOL: f64 = 1e-6;
pub const DEFAULT_CURVE_SAMPLES: usize = 31;
pub const DEFAULT_CHARACTERISTIC_SAMPLES: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Growth,
    Class,
    Characteristic,
    RhoProfile,
    Projectivize,
    VerifyModel,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Growth => "growth",
            Command::Class => "class",
            Command::Characteristic => "characteristic",
            Command::RhoProfile => "rho-profile",
            Command::Projectivize => "projectivize",
            Command::VerifyModel => "verify-model",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub job: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
}

/// A finished run: the JSON report, an optional CSV profile and the exit
/// status.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Value,
    pub csv: Option<String>,
    pub exit: u8,
}

struct Section {
    result: Value,
    csv: Option<String>,
    passed: bool,
}

impl Section {
    fn ok(result: Value) -> Section {
        Section {
            result,
            csv: None,
            passed: true,
        }
    }
}

struct Context {
    job: JobSpec,
    seed: Option<u64>,
    tol: Tolerance,
}

impl Context {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::input("job.seed", "this command samples covectors and needs a seed".into()))
    }

    fn distribution(&self) -> Result<(Distribution2, String), CliError> {
        self.job.distribution()
    }

    fn symplectification(&self, dist: &Distribution2) -> Result<Symplectification, CliError> {
        Ok(Symplectification::new(dist)?.with_tol(self.tol.rank))
    }

    /// The covector whose characteristic curve is followed.
    fn covector(&self, symp: &Symplectification) -> Result<CotangentPoint, CliError> {
        let n = symp.base_dim();
        if let Some(c) = &self.job.curve.covector {
            if c.len() != 2 * n {
                return Err(CliError::input(
                    "job.curve",
                    format!("covector has {} entries, expected {}", c.len(), 2 * n),
                ));
            }
            let lambda = CotangentPoint::from_vec(c);
            symp.check_stratum(&lambda)?;
            return Ok(lambda);
        }
        let seed = self.seed()?;
        let q = match &self.job.curve.point {
            Some(p) if p.len() != n => {
                return Err(CliError::input(
                    "job.curve",
                    format!("curve point has {} coordinates, expected {n}", p.len()),
                ))
            }
            Some(p) => p.clone(),
            None => self.job.base_points(n, Some(seed))?.swap_remove(0),
        };
        Ok(symp.sample_regular_covector(&q, seed)?)
    }

    fn curve(&self, symp: &Symplectification) -> Result<(CotangentPoint, Box<dyn GrassCurve>), CliError> {
        let lambda = self.covector(symp)?;
        let base = JacobiCurve::new(symp, &lambda)?;
        let Some(text) = &self.job.curve.bend else {
            return Ok((lambda, Box::new(base)));
        };
        let (a, b) = base.window();
        let w = (b - a) / 2.0;
        let bend = ExprMap::chart().parse(text).map_err(|e| CliError::expr(e, text))?;
        let scaled = Expr::var(0, "t").mul(&Expr::float(1.0 / w));
        let psi = Expr::float(w).mul(&bend.substitute(&[scaled])?);
        let curve = ReparamCurve::new(base, Reparam::Expr(ExprMap::new(psi)?))?;
        Ok((lambda, Box::new(curve)))
    }

    fn curve_samples(&self) -> Result<usize, CliError> {
        let n = self.job.curve.samples.unwrap_or(DEFAULT_CURVE_SAMPLES);
        if n < 4 {
            return Err(CliError::input("job.curve", "curves need at least 4 samples".into()));
        }
        Ok(n)
    }
}

/// Interior grid `a + (b - a) (0.1 + 0.8 i / (count - 1))`.
fn grid(window: (f64, f64), count: usize) -> Vec<f64> {
    let (a, b) = window;
    (0..count)
        .map(|i| a + (b - a) * (0.1 + 0.8 * i as f64 / (count - 1) as f64))
        .collect()
}

fn growth(ctx: &Context) -> Result<Section, CliError> {
    let (dist, _) = ctx.distribution()?;
    let n = dist.dim();
    let points = ctx.job.base_points(n, ctx.seed)?;
    let mut rows = Vec::with_capacity(points.len());
    for q in &points {
        let flag = dist.flag_at_tol(q, n, ctx.tol.rank)?;
        let vector: Vec<usize> = flag.iter().map(|l| l.ncols()).collect();
        let records: Vec<Value> = flag
            .iter()
            .map(|l| rank_record(&decide_rank(l, ctx.tol.rank)))
            .collect();
        rows.push(json!({ "q": q, "growth_vector": vector, "rank_records": records }));
    }
    Ok(Section::ok(json!({ "points": rows })))
}

fn class(ctx: &Context) -> Result<Section, CliError> {
    let (dist, _) = ctx.distribution()?;
    let symp = ctx.symplectification(&dist)?;
    let n = dist.dim();
    let seed = ctx.seed()?;
    let samples = ctx.job.class.samples.unwrap_or(DEFAULT_SAMPLES);
    let points = ctx.job.base_points(n, Some(seed))?;
    let mut rows = Vec::with_capacity(points.len());
    for (i, q) in points.iter().enumerate() {
        let report = symp.class_at(q, samples, seed.wrapping_add(i as u64))?;
        let best = report
            .samples
            .iter()
            .find(|s| s.1 == report.m)
            .expect("the class is attained by a sample");
        let lambda = CotangentPoint::new(q.clone(), best.0.clone())?;
        let spaces = symp.extension_spaces(&lambda, n - 2)?;
        let nus: Vec<usize> = report.samples.iter().map(|s| s.1).collect();
        rows.push(json!({
            "q": q,
            "m": report.m,
            "regular": report.regular,
            "probe_classes": report.probe_classes,
            "sample_nu": nus,
            "witness_covector": best.0,
            "extension_dims": spaces.iter().map(|s| s.dim()).collect::<Vec<_>>(),
            "rank_records": frame_records(&spaces),
        }));
    }
    Ok(Section::ok(json!({ "samples": samples, "points": rows })))
}

fn characteristic(ctx: &Context) -> Result<Section, CliError> {
    let (dist, _) = ctx.distribution()?;
    let symp = ctx.symplectification(&dist)?;
    let lambda = ctx.covector(&symp)?;
    let spaces = symp.extension_spaces(&lambda, 1)?;
    let speed = symp.characteristic_vector(&lambda)?.norm();
    let time = ctx.job.curve.time.unwrap_or(1.0);
    let count = ctx.job.curve.samples.unwrap_or(DEFAULT_CHARACTERISTIC_SAMPLES).max(2);
    let field = symp.characteristic_field();
    let opts = FlowOptions::default();
    let mut state = lambda.to_vec();
    let mut t = 0.0;
    let mut rows = vec![json!({ "t": 0.0, "state": state })];
    for i in 1..count {
        let next = time / speed * i as f64 / (count - 1) as f64;
        let step = flow(field, &state, next - t, &opts)?;
        state = step.endpoint.iter().copied().collect();
        t = next;
        rows.push(json!({ "t": t, "state": state, "error_estimate": step.error_estimate }));
    }
    Ok(Section::ok(json!({
        "covector": lambda.to_vec(),
        "speed": speed,
        "time_unit": 1.0 / speed,
        "samples": rows,
        "rank_records": frame_records(&spaces),
    })))
}

fn rho_profile(ctx: &Context) -> Result<Section, CliError> {
    let (dist, _) = ctx.distribution()?;
    let symp = ctx.symplectification(&dist)?;
    let (lambda, curve) = ctx.curve(&symp)?;
    let ts = grid(curve.window(), ctx.curve_samples()?);
    let values = ts.iter().map(|&t| rho(&*curve, t)).collect::<Result<Vec<f64>, _>>()?;
    let csv = csv_profile(&ts, &values);
    Ok(Section {
        result: json!({
            "covector": lambda.to_vec(),
            "window": [curve.window().0, curve.window().1],
            "half_dim": curve.half_dim(),
            "t": ts,
            "rho": values,
            "rank_records": frame_records(&symp.extension_spaces(&lambda, 1)?),
        }),
        csv: Some(csv),
        passed: true,
    })
}

fn projective(ctx: &Context) -> Result<Section, CliError> {
    let (dist, _) = ctx.distribution()?;
    let symp = ctx.symplectification(&dist)?;
    let (lambda, curve) = ctx.curve(&symp)?;
    let count = ctx.curve_samples()?;
    let ts = grid(curve.window(), count);
    let rhos = ts.iter().map(|&t| rho(&*curve, t)).collect::<Result<Vec<f64>, _>>()?;
    let k = curve.contact_order();
    let p = projectivize(&ts, &rhos, k, count / 2)?;
    let after = recheck_rho(&&*curve, &p)?;
    let worst = after.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let other = projectivize(&ts, &rhos, k, count / 4)?;
    let mut transition = 0.0f64;
    for i in 0..count {
        transition = transition.max(transition_schwarzian(&p, &other, i)?.abs());
    }
    let passed = worst < PROJECTIVE_TOL && transition < TRANSITION_TOL;
    Ok(Section {
        result: json!({
            "covector": lambda.to_vec(),
            "k": k,
            "origin": ts[p.origin],
            "t": ts,
            "rho": rhos,
            "psi": p.psi,
            "psi_d1": p.d1,
            "post_check": {
                "rho_after": after,
                "max_abs_rho_after": worst,
                "rho_tol": PROJECTIVE_TOL,
                "max_transition_schwarzian": transition,
                "transition_tol": TRANSITION_TOL,
                "passed": passed,
            },
            "rank_records": frame_records(&symp.extension_spaces(&lambda, 1)?),
        }),
        csv: Some(csv_profile(&ts, &p.psi)),
        passed,
    })
}

fn verify_model(n: usize) -> Result<Section, CliError> {
    if n < 5 {
        return Err(CliError::input(
            "job.model",
            format!("model frames need n >= 5, got {n}"),
        ));
    }
    let frame = model_frame(n)?;
    let c = &frame.checks;
    let passed = frame.passed();
    let mismatches: Vec<Value> = c
        .mismatches
        .iter()
        .map(|mm| json!({ "bracket": mm.bracket, "expected": mm.expected, "found": mm.found }))
        .collect();
    Ok(Section {
        result: json!({
            "n": n,
            "m": frame.m,
            "labels": frame.labels,
            "relations": frame.table.nonzero_relations(),
            "expected_relations": frame.expected.nonzero_relations(),
            "mismatches": mismatches,
            "checks": {
                "frame_tol": FRAME_TOL,
                "symmetry_residual": c.symmetry_residual,
                "fit_residual": c.fit_residual,
                "antisymmetry": c.antisymmetry,
                "jacobi_residual": c.jacobi_residual,
                "rounding_error": c.rounding_error,
                "heisenberg_residual": c.heisenberg_residual,
                "center_residual": c.center_residual,
                "dimension": c.dimension,
                "expected_dimension": 2 * n - 1,
            },
            "status": if passed { "pass" } else { "fail" },
        }),
        csv: None,
        passed,
    })
}

fn model_n(inv: &Invocation, job: &JobSpec) -> Option<usize> {
    inv.n.or(job.model.as_ref().map(|m| m.n))
}

fn single(inv: &Invocation, ctx: &Context) -> Result<Section, CliError> {
    match inv.command {
        Command::Growth => growth(ctx),
        Command::Class => class(ctx),
        Command::Characteristic => characteristic(ctx),
        Command::RhoProfile => rho_profile(ctx),
        Command::Projectivize => projective(ctx),
        Command::VerifyModel => {
            let n = model_n(inv, &ctx.job)
                .ok_or_else(|| CliError::input("job.model", "verify-model needs --n or [model] n".into()))?;
            verify_model(n)
        }
        Command::Report => unreachable!("handled by run"),
    }
}

fn report(inv: &Invocation, ctx: &Context) -> (Value, u8) {
    let mut sections = serde_json::Map::new();
    let mut exit = EXIT_OK;
    let mut record = |name: &str, r: Result<Section, CliError>| {
        let value = match r {
            Ok(s) => {
                if !s.passed {
                    exit = exit.max(EXIT_NUMERICAL);
                }
                s.result
            }
            Err(e) => {
                exit = exit.max(e.exit);
                error_record(&e)
            }
        };
        sections.insert(name.into(), value);
    };
    record("growth", growth(ctx));
    record("class", class(ctx));
    record("characteristic", characteristic(ctx));
    record("rho_profile", rho_profile(ctx));
    record("projectivize", projective(ctx));
    if let Some(n) = model_n(inv, &ctx.job) {
        record("verify_model", verify_model(n));
    }
    (Value::Object(sections), exit)
}

/// Run one invocation. Errors that prevent any report are returned as
/// `Err`; failed checks give a report with a nonzero exit status.
pub fn run(inv: &Invocation) -> Result<Outcome, CliError> {
    let job = match &inv.job {
        Some(path) => JobSpec::load(path)?,
        None if inv.command == Command::VerifyModel => JobSpec::empty(),
        None => {
            return Err(CliError::input(
                "cli",
                format!("`{}` needs --job FILE", inv.command.name()),
            ))
        }
    };
    if let Some(c) = &job.command {
        if c != inv.command.name() {
            return Err(CliError::input(
                "job.command",
                format!("job is for `{c}` but `{}` was requested", inv.command.name()),
            ));
        }
    }
    let tol = job.tolerance()?;
    let seed = inv.seed.or(job.seed);
    let description = match &job.distribution {
        Some(_) => {
            let (d, text) = job.distribution()?;
            json!({ "description": text, "dim": d.dim() })
        }
        None => Value::Null,
    };
    let ctx = Context { job, seed, tol };
    let (result, csv, exit) = if inv.command == Command::Report {
        let (v, exit) = report(inv, &ctx);
        (v, None, exit)
    } else {
        let s = single(inv, &ctx)?;
        let exit = if s.passed { EXIT_OK } else { EXIT_NUMERICAL };
        (s.result, s.csv, exit)
    };
    let json = json!({
        "schema_version": SCHEMA_VERSION,
        "command": inv.command.name(),
        "seed": seed,
        "tolerance": tol,
        "distribution": description,
        "result": result,
        "status": if exit == EXIT_OK { "pass" } else { "fail" },
    });
    Ok(Outcome { json, csv, exit })
}
