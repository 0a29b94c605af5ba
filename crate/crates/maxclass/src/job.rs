//! Job files: one TOML document describing a distribution and what to compute.

use std::path::Path;

use maxclass_core::distribution::{Distribution2, OdeModel};
use maxclass_core::field::VecField;
use maxclass_core::linalg::DEFAULT_RANK_TOL;
use maxclass_core::Chart;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the default rank tolerance.
pub const TOL_ENV: &str = "MAXCLASS_TOL";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub distribution: Option<DistributionSpec>,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub tolerances: TolerancesSpec,
    #[serde(default)]
    pub class: ClassSpec,
    #[serde(default)]
    pub curve: CurveSpec,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub ode: Option<OdeSpec>,
    pub chart: Option<Vec<String>>,
    pub x1: Option<Vec<String>>,
    pub x2: Option<Vec<String>>,
}

/// `z^(r) = F(x, y, ..., y^(s), z, ..., z^(r-1))`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    pub r: usize,
    pub s: usize,
    pub f: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSpec {
    #[serde(default)]
    pub base: Vec<Vec<f64>>,
    /// Number of seeded random base points added after `base`.
    #[serde(default)]
    pub random: usize,
    /// Half-width of the box the random points are drawn from.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSpec {
    pub rank: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    /// Base point of the covector; defaults to the first base point.
    pub point: Option<Vec<f64>>,
    /// Explicit covector `(q, p)`, overriding the sampled one.
    pub covector: Option<Vec<f64>>,
    /// Integration time in units of `1/|R(lambda)|`.
    pub time: Option<f64>,
    pub samples: Option<usize>,
    /// Reparameterization `b(s)` of the Jacobi curve, in the parameter
    /// `s = t / w` scaled by the window half-width `w`.
    pub bend: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<String>,
    pub csv: Option<String>,
}

/// Where the rank tolerance came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub rank: f64,
    pub source: &'static str,
}

impl JobSpec {
    pub fn parse(text: &str) -> Result<JobSpec, CliError> {
        toml::from_str(text).map_err(|e| CliError::input("job.toml", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<JobSpec, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::input("job.io", format!("{}: {e}", path.display())))?;
        JobSpec::parse(&text)
    }

    pub fn empty() -> JobSpec {
        JobSpec::parse("").expect("empty job parses")
    }

    pub fn tolerance(&self) -> Result<Tolerance, CliError> {
        let tol = if let Some(t) = self.tolerances.rank {
            Tolerance { rank: t, source: "job" }
        } else if let Ok(v) = std::env::var(TOL_ENV) {
            let rank = v
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::input("job.tolerance", format!("{TOL_ENV}={v} is not a number")))?;
            Tolerance { rank, source: "env" }
        } else {
            Tolerance {
                rank: DEFAULT_RANK_TOL,
                source: "default",
            }
        };
        if !(tol.rank > 0.0 && tol.rank < 1.0) {
            return Err(CliError::input(
                "job.tolerance",
                format!("rank tolerance {} outside (0, 1)", tol.rank),
            ));
        }
        Ok(tol)
    }

    /// The distribution, validated against its own one-forms.
    pub fn distribution(&self) -> Result<(Distribution2, String), CliError> {
        let spec = self
            .distribution
            .as_ref()
            .ok_or_else(|| CliError::input("job.distribution", "missing [distribution] table".into()))?;
        let explicit = spec.chart.is_some() || spec.x1.is_some() || spec.x2.is_some();
        match (&spec.ode, explicit) {
            (Some(_), true) | (None, false) => Err(CliError::input(
                "job.distribution",
                "give exactly one of `ode` or `chart` + `x1` + `x2`".into(),
            )),
            (Some(o), false) => {
                let model = OdeModel::new(o.r, o.s, &o.f).map_err(|e| CliError::expr(e, &o.f))?;
                let d = Distribution2::from_ode(&model)?;
                Ok((d, format!("z^({}) = {} with y up to order {}", o.r, model.f, o.s)))
            }
            (None, true) => {
                let names = spec.chart.as_ref().ok_or_else(missing_field("chart"))?;
                let chart = Chart::new(names)?;
                let field = |comps: &Option<Vec<String>>, name: &'static str| -> Result<VecField, CliError> {
                    let comps = comps.as_ref().ok_or_else(missing_field(name))?;
                    let mut out = Vec::with_capacity(comps.len());
                    for c in comps {
                        out.push(chart.parse(c).map_err(|e| CliError::expr(e, c))?);
                    }
                    Ok(VecField::new(&chart, out)?)
                };
                let d = Distribution2::new(field(&spec.x1, "x1")?, field(&spec.x2, "x2")?)?;
                Ok((d, format!("span{{X1, X2}} on ({})", names.join(", "))))
            }
        }
    }

    /// Explicit base points followed by the seeded random ones.
    pub fn base_points(&self, n: usize, seed: Option<u64>) -> Result<Vec<Vec<f64>>, CliError> {
        let mut out = Vec::with_capacity(self.points.base.len() + self.points.random);
        for p in &self.points.base {
            if p.len() != n {
                return Err(CliError::input(
                    "job.points",
                    format!("base point has {} coordinates, expected {n}", p.len()),
                ));
            }
            out.push(p.clone());
        }
        if self.points.random > 0 {
            let seed = seed.ok_or_else(|| CliError::input("job.seed", "random points need a seed".into()))?;
            let r = self.points.radius.unwrap_or(1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..self.points.random {
                out.push((0..n).map(|_| rng.random_range(-r..r)).collect());
            }
        }
        if out.is_empty() {
            return Err(CliError::input("job.points", "no base points given".into()));
        }
        Ok(out)
    }
}

fn missing_field(name: &'static str) -> impl Fn() -> CliError {
    move || CliError::input("job.distribution", format!("explicit distribution needs `{name}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CARTAN: &str = "seed = 3\n[distribution.ode]\nr = 1\ns = 2\nf = \"p2^2\"\n";

    #[test]
    fn ode_and_explicit_sources() {
        let job = JobSpec::parse(CARTAN).unwrap();
        let (d, text) = job.distribution().unwrap();
        assert_eq!(d.dim(), 5);
        assert!(text.contains("p2^2"));
        let explicit = JobSpec::parse(
            "[distribution]\nchart = [\"x\", \"y\", \"z\"]\nx1 = [\"1\", \"0\", \"y\"]\nx2 = [\"0\", \"1\", \"0\"]\n",
        )
        .unwrap();
        assert_eq!(
            explicit.distribution().unwrap().0.growth_vector(&[0.0; 3], 3).unwrap(),
            [2, 3]
        );
    }

    #[test]
    fn distribution_sources_are_exclusive() {
        let both = format!("[distribution]\nchart = [\"x\", \"y\", \"z\"]\n{CARTAN}").replace("seed = 3\n", "");
        assert_eq!(
            JobSpec::parse(&both).unwrap().distribution().unwrap_err().code,
            "job.distribution"
        );
        assert_eq!(JobSpec::empty().distribution().unwrap_err().code, "job.distribution");
        let partial = "[distribution]\nchart = [\"x\", \"y\", \"z\"]\nx1 = [\"1\", \"0\", \"y\"]\n";
        assert!(JobSpec::parse(partial)
            .unwrap()
            .distribution()
            .unwrap_err()
            .message
            .contains("x2"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = JobSpec::parse("sed = 3\n").unwrap_err();
        assert_eq!(err.code, "job.toml");
        assert_eq!(err.exit, crate::EXIT_INPUT);
    }

    #[test]
    fn random_points_are_seeded() {
        let job = JobSpec::parse("[points]\nbase = [[1, 2, 3]]\nrandom = 3\nradius = 0.5\n").unwrap();
        let a = job.base_points(3, Some(4)).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a[0], [1.0, 2.0, 3.0]);
        assert!(a[1..].iter().flatten().all(|v| v.abs() < 0.5));
        assert_eq!(a, job.base_points(3, Some(4)).unwrap());
        assert_ne!(a, job.base_points(3, Some(5)).unwrap());
        assert_eq!(job.base_points(3, None).unwrap_err().code, "job.seed");
        assert_eq!(job.base_points(4, Some(1)).unwrap_err().code, "job.points");
    }

    #[test]
    fn job_tolerance_wins() {
        let job = JobSpec::parse("[tolerances]\nrank = 1e-7\n").unwrap();
        assert_eq!(
            job.tolerance().unwrap(),
            Tolerance {
                rank: 1e-7,
                source: "job"
            }
        );
        let bad = JobSpec::parse("[tolerances]\nrank = 2.0\n").unwrap();
        assert!(bad.tolerance().is_err());
    }
}
