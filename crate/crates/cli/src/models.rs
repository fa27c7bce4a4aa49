use std::path::{Path, PathBuf};

use latent_manifold::{load_model, AnalyticSurface, ChartInverse, DifferentiableMap, MlpModel, Result};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// A generator read from disk or one of the built-in surfaces.
#[derive(Debug, Clone)]
pub enum Generator {
    Mlp(MlpModel),
    Surface(AnalyticSurface),
}

#[derive(Debug, Clone)]
pub enum Encoder {
    Mlp(MlpModel),
    Chart(ChartInverse),
}

macro_rules! delegate_map {
    ($ty:ident, $a:ident, $b:ident) => {
        impl DifferentiableMap for $ty {
            fn input_dim(&self) -> usize {
                match self {
                    $ty::$a(m) => m.input_dim(),
                    $ty::$b(m) => m.input_dim(),
                }
            }

            fn output_dim(&self) -> usize {
                match self {
                    $ty::$a(m) => m.output_dim(),
                    $ty::$b(m) => m.output_dim(),
                }
            }

            fn evaluate(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
                match self {
                    $ty::$a(m) => m.evaluate(z),
                    $ty::$b(m) => m.evaluate(z),
                }
            }

            fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
                match self {
                    $ty::$a(m) => m.jacobian(z),
                    $ty::$b(m) => m.jacobian(z),
                }
            }
        }
    };
}

delegate_map!(Generator, Mlp, Surface);
delegate_map!(Encoder, Mlp, Chart);

/// Parses `paraboloid`, `sphere` or `sphere:RADIUS`.
pub fn parse_surface(name: &str) -> CliResult<AnalyticSurface> {
    match name.split_once(':') {
        None if name == "paraboloid" => Ok(AnalyticSurface::HyperbolicParaboloid),
        None if name == "sphere" => Ok(AnalyticSurface::sphere(1.0)?),
        Some(("sphere", r)) => {
            let radius: f64 = r.parse().map_err(|_| CliError::Argument(format!("bad sphere radius `{r}`")))?;
            Ok(AnalyticSurface::sphere(radius)?)
        }
        _ => Err(CliError::Argument(format!(
            "unknown surface `{name}`; use paraboloid or sphere[:RADIUS]"
        ))),
    }
}

fn load(path: &Path) -> CliResult<MlpModel> {
    load_model(path).map_err(|e| match e {
        latent_manifold::Error::Io(io) => CliError::input(path.display(), io.to_string()),
        other => CliError::Core(other),
    })
}

/// Resolves `--model`/`--surface` and `--encoder` into a generator and an
/// optional encoder. Surfaces default to their coordinate chart inverse.
pub fn resolve(model: Option<&PathBuf>, surface: Option<&str>, encoder: Option<&PathBuf>) -> CliResult<(Generator, Option<Encoder>)> {
    let generator = match (model, surface) {
        (Some(p), None) => Generator::Mlp(load(p)?),
        (None, Some(s)) => Generator::Surface(parse_surface(s)?),
        _ => return Err(CliError::Argument("give exactly one of --model or --surface".into())),
    };
    let enc = match (encoder, &generator) {
        (Some(p), _) => Some(Encoder::Mlp(load(p)?)),
        (None, Generator::Surface(s)) => Some(Encoder::Chart(s.chart_inverse())),
        (None, Generator::Mlp(_)) => None,
    };
    if let Some(e) = &enc {
        if e.input_dim() != generator.output_dim() || e.output_dim() != generator.input_dim() {
            return Err(CliError::Core(latent_manifold::Error::DimensionMismatch {
                context: "encoder against generator",
                expected: generator.output_dim(),
                found: e.input_dim(),
            }));
        }
    }
    Ok((generator, enc))
}
