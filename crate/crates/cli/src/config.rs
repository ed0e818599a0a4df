//! Experiment configuration files.

use std::path::{Path, PathBuf};

use polysquare::geometry::{l_surface, torus, two_by_one};
use polysquare::{
    CubeBox, Direction2, ManifoldPoint, PolysquareSurface, SquareBox, SurfacePoint, SurfaceSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// A real input: a JSON number, a decimal string read as the nearest double,
/// or a square root of an integer, optionally reduced mod 1.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Decimal(String),
    Quadratic(QuadraticReal),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticReal {
    pub sqrt: u64,
    #[serde(default)]
    pub mod1: bool,
}

/// How a real input was given, recorded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub name: String,
    pub value: f64,
    pub source: String,
}

impl Real {
    pub fn resolve(&self, field: &str) -> Result<(f64, InputRecord), CliError> {
        let (value, source) = match self {
            Real::Number(x) => (*x, "number".to_string()),
            Real::Decimal(s) => {
                let x: f64 = s.trim().parse().map_err(|_| {
                    CliError::Config(format!("field `{field}`: `{s}` is not a decimal number"))
                })?;
                (x, format!("decimal \"{s}\""))
            }
            Real::Quadratic(q) => {
                let r = (q.sqrt as f64).sqrt();
                if q.mod1 {
                    (r - r.floor(), format!("sqrt({}) mod 1", q.sqrt))
                } else {
                    (r, format!("sqrt({})", q.sqrt))
                }
            }
        };
        if !value.is_finite() {
            return Err(CliError::Config(format!("field `{field}` is not finite")));
        }
        Ok((
            value,
            InputRecord {
                name: field.to_string(),
                value,
                source,
            },
        ))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub v1: Real,
    pub v2: Real,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub square: usize,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub square: usize,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Surface,
    Manifold,
}

/// One experiment. Each subcommand reads the fields it needs.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline surface spec, `{"file": path}`, or one of `torus`, `l`, `2x1`.
    pub surface: Option<Value>,
    pub step: Option<StepConfig>,
    /// Circle step of the `w`-shift.
    pub w3: Option<Real>,
    /// Vertical direction component of a geodesic in `P × [0,1)`.
    pub v3: Option<Real>,
    pub start: Option<StartConfig>,
    pub j: Option<usize>,
    pub t: Option<f64>,
    pub test_sets: Option<Vec<BoxConfig>>,
    pub checkpoints: Option<Vec<f64>>,
    /// Certification height.
    pub height: Option<u64>,
    pub certify_budget: Option<u64>,
    pub components: Option<Vec<Real>>,
    pub v1: Option<Real>,
    pub v2: Option<Real>,
    pub w: Option<Real>,
    pub eps: Option<f64>,
    pub scan_budget: Option<u64>,
    pub resolution: Option<usize>,
    pub samples_per_axis: Option<usize>,
    pub space: Option<Space>,
    /// Samples for the Monte-Carlo check of the sweep volume.
    pub mc_samples: Option<usize>,
    pub discrepancy_budget: Option<usize>,
    /// Output directory used when `--out` is absent.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Batch {
    pub runs: Vec<ExperimentConfig>,
}

pub enum Loaded {
    Single(Box<ExperimentConfig>),
    Batch(Batch),
}

fn parse<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{what}: field `{path}`: {}", e.inner()))
    })
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: malformed JSON: {e}", path.display())))
}

/// Reads a config; relative surface file paths resolve against its directory.
pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let value = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let what = path.display().to_string();
    let loaded = if value.get("runs").is_some() {
        let mut b: Batch = parse(value, &what)?;
        for run in &mut b.runs {
            run.rebase(base)?;
        }
        Loaded::Batch(b)
    } else {
        let mut c: ExperimentConfig = parse(value, &what)?;
        c.rebase(base)?;
        Loaded::Single(Box::new(c))
    };
    Ok(loaded)
}

impl ExperimentConfig {
    fn rebase(&mut self, base: &Path) -> Result<(), CliError> {
        if let Some(Value::Object(m)) = &mut self.surface {
            if let Some(Value::String(f)) = m.get("file") {
                let full = base.join(f);
                if !full.exists() {
                    return Err(CliError::Config(format!(
                        "field `surface.file`: {} does not exist",
                        full.display()
                    )));
                }
                m.insert("file".into(), Value::String(full.display().to_string()));
            }
        }
        Ok(())
    }

    pub fn require<'a, T>(field: &str, v: &'a Option<T>) -> Result<&'a T, CliError> {
        v.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing field `{field}`")))
    }

    pub fn surface(&self) -> Result<PolysquareSurface, CliError> {
        let v = Self::require("surface", &self.surface)?;
        surface_from_value(v)
    }

    pub fn step(&self, inputs: &mut Vec<InputRecord>) -> Result<Direction2, CliError> {
        let s = Self::require("step", &self.step)?;
        let (a, ra) = s.v1.resolve("step.v1")?;
        let (b, rb) = s.v2.resolve("step.v2")?;
        inputs.push(ra);
        inputs.push(rb);
        Direction2::new(a, b).map_err(|e| CliError::Config(format!("field `step`: {e}")))
    }

    pub fn real(
        &self,
        field: &str,
        v: &Option<Real>,
        inputs: &mut Vec<InputRecord>,
    ) -> Result<f64, CliError> {
        let (r, rec) = Self::require(field, v)?.resolve(field)?;
        inputs.push(rec);
        Ok(r)
    }

    pub fn start(&self, p: &PolysquareSurface) -> Result<ManifoldPoint, CliError> {
        let s = Self::require("start", &self.start)?;
        let base = SurfacePoint::new(p, s.square, s.x, s.y)
            .map_err(|e| CliError::Config(format!("field `start`: {e}")))?;
        ManifoldPoint::new(base, s.z).map_err(|e| CliError::Config(format!("field `start.z`: {e}")))
    }

    /// Exactly one of `j`, `t` must be present.
    pub fn length_j(&self) -> Result<usize, CliError> {
        match (self.j, self.t) {
            (Some(j), None) => Ok(j),
            (Some(_), Some(_)) => Err(CliError::Config("exactly one of `j` or `t` may be given".into())),
            _ => Err(CliError::Config("missing field `j`".into())),
        }
    }

    pub fn length_t(&self) -> Result<f64, CliError> {
        match (self.j, self.t) {
            (None, Some(t)) if t.is_finite() && t >= 0.0 => Ok(t),
            (None, Some(t)) => Err(CliError::Config(format!("field `t`: invalid time {t}"))),
            (Some(_), Some(_)) => Err(CliError::Config("exactly one of `j` or `t` may be given".into())),
            _ => Err(CliError::Config("missing field `t`".into())),
        }
    }

    pub fn square_boxes(&self, p: &PolysquareSurface) -> Result<Option<Vec<SquareBox>>, CliError> {
        let Some(sets) = &self.test_sets else {
            return Ok(None);
        };
        sets.iter()
            .enumerate()
            .map(|(i, b)| {
                let sb = SquareBox::new(p, b.square, (b.x[0], b.x[1]), (b.y[0], b.y[1]))
                    .map_err(|e| CliError::Config(format!("field `test_sets[{i}]`: {e}")))?;
                if sb.area() <= 0.0 {
                    return Err(CliError::Config(format!(
                        "field `test_sets[{i}]`: zero-measure set"
                    )));
                }
                Ok(sb)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn cube_boxes(&self, p: &PolysquareSurface) -> Result<Option<Vec<CubeBox>>, CliError> {
        let Some(bases) = self.square_boxes(p)? else {
            return Ok(None);
        };
        let sets = self.test_sets.as_ref().expect("checked above");
        bases
            .into_iter()
            .zip(sets)
            .enumerate()
            .map(|(i, (b, c))| {
                let z = c.z.unwrap_or([0.0, 1.0]);
                let cb = CubeBox::new(b, (z[0], z[1]))
                    .map_err(|e| CliError::Config(format!("field `test_sets[{i}].z`: {e}")))?;
                if cb.volume() <= 0.0 {
                    return Err(CliError::Config(format!(
                        "field `test_sets[{i}]`: zero-measure set"
                    )));
                }
                Ok(cb)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

pub fn surface_from_value(v: &Value) -> Result<PolysquareSurface, CliError> {
    match v {
        Value::String(name) => match name.as_str() {
            "torus" => Ok(torus()),
            "l" | "L" => Ok(l_surface()),
            "2x1" => Ok(two_by_one()),
            other => Err(CliError::Config(format!(
                "field `surface`: unknown surface name `{other}`"
            ))),
        },
        Value::Object(m) if m.contains_key("file") => {
            let Some(Value::String(f)) = m.get("file") else {
                return Err(CliError::Config("field `surface.file` must be a path".into()));
            };
            if m.len() > 1 {
                return Err(CliError::Config(
                    "field `surface`: `file` cannot be combined with other fields".into(),
                ));
            }
            let spec = read_json(Path::new(f))?;
            surface_from_value(&spec)
        }
        _ => SurfaceSpec::from_json(v)
            .and_then(|s| s.build())
            .map_err(|e| CliError::Config(format!("field `surface`: {e}"))),
    }
}
