use std::path::Path;

use latent_manifold::{
    classical_mds, discrete_arc_length, discrete_energy, distance_matrix, frechet_mean, geodesic_analogy, geodesic_path, geodesic_shoot,
    initial_velocity, linear_analogy, parallel_translate, r2_score, sample_paraboloid, save_model, train_vae, AmbientPoint,
    DifferentiableMap, DiscretePath, DistanceMatrix, DistanceMode, Error, FrechetConfig, GeodesicConfig, GradientMode, MlpModel,
    ShootOptions, TrainConfig,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{parse_vector, read_matrix, read_path, read_points, write_column, write_json, write_matrix, write_path, write_points};
use crate::manifest::Recorder;
use crate::models::{resolve, Encoder, Generator};
use crate::{Command, DistanceArg, GeodesicArgs, ModeArg, ModelArgs, PresetArg};

fn vector(flag: &str, text: &str) -> CliResult<DVector<f64>> {
    parse_vector(text).map_err(|m| CliError::Argument(format!("--{flag}: {m}")))
}

fn geodesic_config(args: &GeodesicArgs) -> CliResult<GeodesicConfig> {
    let config = GeodesicConfig {
        steps: args.steps,
        step_size: args.step_size,
        tolerance: args.tolerance,
        max_iters: args.max_iters,
        gradient_mode: match args.gradient_mode {
            ModeArg::Exact => GradientMode::Exact,
            ModeArg::Encoder => GradientMode::Encoder,
        },
        backtracking: !args.no_backtracking,
    };
    config.validate()?;
    Ok(config)
}

fn models(args: &ModelArgs, rec: &mut Recorder) -> CliResult<(Generator, Option<Encoder>)> {
    for p in [&args.model, &args.encoder].into_iter().flatten() {
        rec.input(p);
    }
    resolve(args.model.as_ref(), args.surface.as_deref(), args.encoder.as_ref())
}

fn require(encoder: &Option<Encoder>) -> CliResult<&Encoder> {
    encoder.as_ref().ok_or(CliError::Core(Error::EncoderRequired))
}

/// Encodes ambient inputs when `--project` is set.
fn latent(project: bool, encoder: &Option<Encoder>, x: DVector<f64>) -> CliResult<DVector<f64>> {
    if project {
        Ok(require(encoder)?.evaluate(&x)?)
    } else {
        Ok(x)
    }
}

fn slice(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn run(command: &Command, rec: &mut Recorder) -> CliResult<()> {
    match command {
        Command::SampleParaboloid { n, common } => {
            let points: Vec<_> = sample_paraboloid(*n, common.seed)
                .into_iter()
                .map(AmbientPoint::into_vector)
                .collect();
            write_points(&rec.output("points.csv"), &points, None)?;
            rec.diagnostics(json!({ "count": n }));
        }
        Command::TrainVae {
            data,
            preset,
            iterations,
            learning_rate,
            batch_size,
            variance,
            clip,
            lr_decay,
            hidden,
            latent_dim,
            common,
        } => {
            rec.input(data);
            let set = read_points(data)?;
            let base = match preset {
                PresetArg::Desk => TrainConfig::desk(),
                PresetArg::Paper => TrainConfig::paper(),
            };
            let config = TrainConfig {
                batch_size: batch_size.unwrap_or(base.batch_size),
                learning_rate: learning_rate.unwrap_or(base.learning_rate),
                iterations: iterations.unwrap_or(base.iterations),
                seed: common.seed,
                likelihood_variance: variance.unwrap_or(base.likelihood_variance),
                hidden_units: hidden.unwrap_or(base.hidden_units),
                latent_dim: latent_dim.unwrap_or(base.latent_dim),
                gradient_clip: match clip {
                    Some(c) if *c == 0.0 => None,
                    Some(c) => Some(*c),
                    None => base.gradient_clip,
                },
                linear_decay: lr_decay.unwrap_or(base.linear_decay),
            };
            let (model, log) = train_vae(&set.points, &config)?;
            save_model(&model.encoder(), rec.output("encoder.json"))?;
            save_model(model.decoder(), rec.output("decoder.json"))?;
            write_column(&rec.output("losses.csv"), "loss", &log.losses)?;
            let tail = log.losses.len().min(100);
            let final_loss = log.losses[log.losses.len() - tail..].iter().sum::<f64>() / tail as f64;
            if !log.decoder_immersion.all_ok() {
                rec.warn();
            }
            rec.diagnostics(json!({
                "resolved_config": {
                    "batch_size": config.batch_size,
                    "learning_rate": config.learning_rate,
                    "iterations": config.iterations,
                    "likelihood_variance": config.likelihood_variance,
                    "hidden_units": config.hidden_units,
                    "latent_dim": config.latent_dim,
                    "gradient_clip": config.gradient_clip,
                    "linear_decay": config.linear_decay,
                },
                "final_loss_mean_last_100": final_loss,
                "decoder_immersion": {
                    "weight_rank_ok": log.decoder_immersion.weight_rank_ok,
                    "jacobian_rank_ok": log.decoder_immersion.jacobian_rank_ok,
                },
            }));
        }
        Command::Geodesic {
            model,
            geodesic,
            from,
            to,
            project,
            ..
        } => {
            let (g, h) = models(model, rec)?;
            let config = geodesic_config(geodesic)?;
            let start = latent(*project, &h, vector("from", from)?)?;
            let end = latent(*project, &h, vector("to", to)?)?;
            let sol = geodesic_path(&g, h.as_ref(), &start, &end, &config)?;
            let linear = DiscretePath::linear(&start, &end, config.steps)?;
            write_path(&rec.output("path.csv"), sol.path.points())?;
            let d = &sol.diagnostics;
            if !d.converged {
                rec.warn();
            }
            let report = json!({
                "converged": d.converged,
                "iterations": d.iterations,
                "gradient_norm_sq": d.gradient_norm_sq,
                "final_step_size": d.final_step_size,
                "energy": discrete_energy(&g, &sol.path)?,
                "arc_length": discrete_arc_length(&g, &sol.path)?,
                "linear_energy": discrete_energy(&g, &linear)?,
                "linear_arc_length": discrete_arc_length(&g, &linear)?,
                "energy_history": d.energy_history,
            });
            write_json(&rec.output("diagnostics.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::Shoot {
            model,
            path,
            from,
            velocity,
            latent_velocity,
            steps,
            max_round_trip,
            project,
            ..
        } => {
            let (g, h) = models(model, rec)?;
            let (z0, u0) = if let Some(p) = path {
                rec.input(p);
                let walk = DiscretePath::new(read_path(p)?)?;
                (walk.start().clone(), initial_velocity(&g, &walk)?)
            } else {
                let from = from
                    .as_ref()
                    .ok_or_else(|| CliError::Argument("give --path or --from with a velocity".into()))?;
                let z0 = latent(*project, &h, vector("from", from)?)?;
                let u0 = match (velocity, latent_velocity) {
                    (Some(u), None) => vector("velocity", u)?,
                    (None, Some(v)) => g.jacobian(&z0)? * vector("latent-velocity", v)?,
                    _ => return Err(CliError::Argument("give one of --velocity or --latent-velocity".into())),
                };
                (z0, u0)
            };
            let options = ShootOptions {
                steps: *steps,
                max_round_trip: *max_round_trip,
            };
            let shot = geodesic_shoot(&g, require(&h)?, &z0, &u0, &options)?;
            write_path(&rec.output("path.csv"), shot.path.points())?;
            let report = json!({
                "end": slice(shot.path.end()),
                "end_ambient": slice(&g.evaluate(shot.path.end())?),
                "arc_length": discrete_arc_length(&g, &shot.path)?,
                "speed": shot.velocities[0].norm(),
                "max_round_trip": shot.max_round_trip,
            });
            write_json(&rec.output("diagnostics.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::Translate {
            model, path, vector: v, ..
        } => {
            let (g, h) = models(model, rec)?;
            rec.input(path);
            let walk = DiscretePath::new(read_path(path)?)?;
            let t = parallel_translate(&g, h.as_ref(), &walk, &vector("vector", v)?)?;
            let report = json!({
                "latent": slice(&t.latent),
                "ambient": slice(&t.ambient),
                "ambient_steps": t.ambient_steps.iter().map(slice).collect::<Vec<_>>(),
                "latent_from": if h.is_some() { "encoder" } else { "pseudo_inverse" },
            });
            write_json(&rec.output("translation.json"), &report)?;
            rec.diagnostics(json!({ "latent": slice(&t.latent), "norm": t.ambient.norm() }));
        }
        Command::Analogy {
            model,
            geodesic,
            a,
            b,
            c,
            project,
            ..
        } => {
            let (g, h) = models(model, rec)?;
            let config = geodesic_config(geodesic)?;
            let a = latent(*project, &h, vector("a", a)?)?;
            let b = latent(*project, &h, vector("b", b)?)?;
            let c = latent(*project, &h, vector("c", c)?)?;
            let result = geodesic_analogy(&g, require(&h)?, &a, &b, &c, &config)?;
            let linear = linear_analogy(&a, &b, &c)?;
            if !result.converged {
                rec.warn();
            }
            let report = json!({
                "answer": slice(&result.answer),
                "answer_ambient": slice(&g.evaluate(&result.answer)?),
                "linear_answer": slice(&linear),
                "linear_answer_ambient": slice(&g.evaluate(&linear)?),
                "ab_arc_length": result.ab_length,
                "shoot_arc_length": result.shoot_length,
                "converged": result.converged,
            });
            write_path(&rec.output("shoot_path.csv"), result.shoot_path.points())?;
            write_json(&rec.output("analogy.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::FrechetMean {
            model,
            geodesic,
            points,
            mean_step,
            mean_iters,
            mean_tolerance,
            project,
            ..
        } => {
            let (g, h) = models(model, rec)?;
            rec.input(points);
            let pts = read_points(points)?
                .points
                .into_iter()
                .map(|x| latent(*project, &h, x))
                .collect::<CliResult<Vec<_>>>()?;
            let config = FrechetConfig {
                geodesic: geodesic_config(geodesic)?,
                step_size: *mean_step,
                max_iters: *mean_iters,
                tolerance: *mean_tolerance,
            };
            let res = frechet_mean(&g, h.as_ref(), &pts, &config)?;
            if !res.converged {
                rec.warn();
            }
            let report = json!({
                "mean": slice(&res.mean),
                "mean_ambient": slice(&g.evaluate(&res.mean)?),
                "linear_mean": slice(&latent_manifold::linear_mean(&pts)?),
                "iterations": res.iterations,
                "converged": res.converged,
                "objective_history": res.objective_history,
            });
            write_json(&rec.output("mean.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::DistanceMatrix {
            model,
            geodesic,
            points,
            mode,
            jobs,
            project,
            ..
        } => {
            let (g, h) = models(model, rec)?;
            rec.input(points);
            let pts = read_points(points)?
                .points
                .into_iter()
                .map(|x| latent(*project, &h, x))
                .collect::<CliResult<Vec<_>>>()?;
            let mode = match mode {
                DistanceArg::Linear => DistanceMode::Linear,
                DistanceArg::Geodesic => DistanceMode::Geodesic,
            };
            let d = distance_matrix(&g, h.as_ref(), &pts, mode, &geodesic_config(geodesic)?, (*jobs).max(1))?;
            write_matrix(&rec.output("distances.csv"), d.values())?;
            rec.diagnostics(json!({ "count": d.len(), "max": d.values().max() }));
        }
        Command::R2 { distances, labels, .. } => {
            rec.input(distances);
            rec.input(labels);
            let d = load_distances(distances)?;
            let labels = read_points(labels)?
                .labels
                .ok_or_else(|| CliError::input(labels.display(), "no label column"))?;
            let r2 = r2_score(&d, &labels)?;
            let report = json!({ "r2": r2 });
            write_json(&rec.output("r2.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::Mds {
            distances, dim, labels, ..
        } => {
            rec.input(distances);
            let d = load_distances(distances)?;
            let labels = match labels {
                Some(p) => {
                    rec.input(p);
                    Some(
                        read_points(p)?
                            .labels
                            .ok_or_else(|| CliError::input(p.display(), "no label column"))?,
                    )
                }
                None => None,
            };
            let mds = classical_mds(&d, *dim)?;
            write_column(&rec.output("eigenvalues.csv"), "eigenvalue", mds.eigenvalues.as_slice())?;
            let rows: Vec<DVector<f64>> = (0..mds.embedding.nrows()).map(|i| mds.embedding.row(i).transpose()).collect();
            write_points(&rec.output("embedding.csv"), &rows, labels.as_deref())?;
            if mds.truncated {
                rec.warn();
            }
            let report = json!({
                "positive": mds.positive_count(),
                "zero": mds.zero_count(),
                "negative": mds.negative_count(),
                "negative_mass_ratio": mds.negative_mass_ratio(),
                "truncated": mds.truncated,
            });
            write_json(&rec.output("mds.json"), &report)?;
            rec.diagnostics(report);
        }
        Command::CheckImmersion {
            model,
            points,
            samples,
            common,
        } => {
            rec.input(model);
            let m = MlpModel::from_json(&std::fs::read_to_string(model).map_err(|e| CliError::input(model.display(), e.to_string()))?)?;
            let latent_points = match points {
                Some(p) => {
                    rec.input(p);
                    read_points(p)?.points
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
                    (0..*samples)
                        .map(|_| DVector::from_fn(m.input_dim(), |_, _| StandardNormal.sample(&mut rng)))
                        .collect()
                }
            };
            let report = m.check_immersion(&latent_points)?;
            if !report.all_ok() {
                rec.warn();
            }
            let value = json!({
                "all_ok": report.all_ok(),
                "weight_rank_ok": report.weight_rank_ok,
                "jacobian_rank_ok": report.jacobian_rank_ok,
            });
            write_json(&rec.output("immersion.json"), &value)?;
            rec.diagnostics(value);
        }
    }
    print_summary(rec);
    Ok(())
}

fn load_distances(path: &Path) -> CliResult<DistanceMatrix> {
    DistanceMatrix::new(read_matrix(path)?, DistanceMode::Linear).map_err(|e| CliError::input(path.display(), e.to_string()))
}

/// The run's diagnostics on stdout, one JSON document.
fn print_summary(rec: &Recorder) {
    println!("{}", rec.summary());
}
