use std::fs;
use std::path::Path;

use serde::Serialize;
use spgan_core::io::write_atomic;
use spgan_core::{porosity, SpganConfig, SpganModel, TrainRecord, VoxelVolume};

use crate::analysis::{load, load_dir};
use crate::error::{CliError, CliResult, Context, Kind};
use crate::output::Run;
use crate::{print_resolved, GenerateArgs, TrainArgs};

fn read_config(a: &TrainArgs) -> CliResult<SpganConfig> {
    let text = fs::read_to_string(&a.config).context(format!("reading {}", a.config.display()))?;
    let mut config: SpganConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::new(Kind::Config, e).with_context(format!("parsing {}", a.config.display()))
    })?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate().context("invalid training config")?;
    Ok(config)
}

/// Rows of an earlier `train_log.csv` that precede `iteration`.
fn previous_rows(path: &Path, iteration: u64) -> CliResult<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|t| t.parse::<u64>().ok())
                .is_some_and(|t| t < iteration)
        })
        .map(str::to_string)
        .collect())
}

fn log_csv(rows: &[String]) -> String {
    let mut out = format!("{}\n", TrainRecord::CSV_HEADER);
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

pub fn train(a: &TrainArgs, run: &Run) -> CliResult<()> {
    let config = read_config(a)?;
    print_resolved(
        "train",
        &serde_json::json!({ "args": a, "config": &config }),
    );
    let run = run.with_seed(config.seed);
    let corpus: Vec<VoxelVolume> = load_dir(&a.corpus)?.into_iter().map(|(_, v)| v).collect();
    let ckpt = a.out.join("checkpoint");
    let log_path = a.out.join("train_log.csv");

    let (mut model, mut rows) = if a.resume {
        let mut model =
            SpganModel::load(&ckpt).context(format!("resuming from {}", ckpt.display()))?;
        let mut expected = model.config.clone();
        expected.iterations = config.iterations;
        if expected != config {
            return Err(CliError::config(
                "--config differs from the checkpoint in more than `iterations`",
            ));
        }
        model.config.iterations = config.iterations;
        let rows = previous_rows(&log_path, model.iteration)?;
        (model, rows)
    } else {
        (SpganModel::new(config.clone())?, Vec::new())
    };
    fs::create_dir_all(&a.out).context(format!("creating {}", a.out.display()))?;
    eprintln!(
        "training {} parameters from iteration {} to {}",
        model.num_parameters(),
        model.iteration,
        config.iterations
    );

    let every = a.checkpoint_every;
    let log_every = a.log_every;
    model
        .train_until(&corpus, config.iterations, |m, rec| {
            rows.push(rec.csv_row());
            if log_every > 0 && m.iteration % log_every == 0 {
                eprintln!(
                    "iter {:>6}  ae {:.5}  d {:.5}  g {:.5}  D(x) {:.3}  D(G) {:.3}",
                    rec.iteration + 1,
                    rec.ae_loss,
                    rec.d_loss,
                    rec.g_loss,
                    rec.d_real,
                    rec.d_fake
                );
            }
            if !rec.is_finite() {
                return Err(spgan_core::Error::invalid(format!(
                    "non-finite loss at iteration {}",
                    rec.iteration
                )));
            }
            if every > 0 && m.iteration % every == 0 && m.iteration < config.iterations {
                m.save(&ckpt)?;
                write_atomic(&log_path, log_csv(&rows).as_bytes())?;
            }
            Ok(())
        })
        .map_err(|e| CliError::new(Kind::Validation, e).with_context("training failed"))?;

    model
        .save(&ckpt)
        .context(format!("writing {}", ckpt.display()))?;
    run.stamp_dir(&ckpt)?;
    run.write(&log_path, log_csv(&rows).as_bytes())?;
    run.write_json(&a.out.join("config.json"), &model.config)?;
    println!(
        "trained to iteration {}; checkpoint in {}",
        model.iteration,
        ckpt.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    file: String,
    porosity: f64,
    mismatch_fraction: f64,
    l2_distance: f64,
}

#[derive(Serialize)]
struct GenerateReport {
    checkpoint_iteration: u64,
    seed: u64,
    slice_porosity: f64,
    mean_mismatch_fraction: f64,
    samples: Vec<SampleReport>,
}

pub fn generate(a: &GenerateArgs, run: &Run) -> CliResult<()> {
    if a.count == 0 {
        return Err(CliError::config("--count must be at least 1"));
    }
    let model =
        SpganModel::load(&a.checkpoint).context(format!("loading {}", a.checkpoint.display()))?;
    let slice = match (&a.slice, &a.slice_from) {
        (Some(p), _) => {
            let v = load(p)?;
            if v.dims()[2] != 1 {
                return Err(CliError::new(
                    Kind::Validation,
                    anyhow::anyhow!(
                        "{} is not a single-plane slice (nz = {})",
                        p.display(),
                        v.dims()[2]
                    ),
                ));
            }
            v.plane_z(0)
        }
        (None, Some(p)) => load(p)?.central_slice(),
        (None, None) => unreachable!("clap requires one slice source"),
    };
    let generated = model
        .synthesize(&slice, a.count, a.seed)
        .context("generating volumes")?;

    run.save_volume(&slice.to_volume(), &a.out.join("conditioning_slice"))?;
    let mut csv = String::from("sample,porosity,mismatch_fraction,l2_distance\n");
    let mut samples = Vec::new();
    for (i, g) in generated.iter().enumerate() {
        let name = format!("sample_{i:03}");
        run.save_volume(&g.volume, &a.out.join(&name))?;
        let p = porosity(&g.volume);
        csv.push_str(&format!(
            "{name},{p},{},{}\n",
            g.mismatch_fraction, g.l2_distance
        ));
        samples.push(SampleReport {
            file: format!("{name}.json"),
            porosity: p,
            mismatch_fraction: g.mismatch_fraction,
            l2_distance: g.l2_distance,
        });
    }
    let mean = samples.iter().map(|s| s.mismatch_fraction).sum::<f64>() / samples.len() as f64;
    run.write(&a.out.join("report.csv"), csv.as_bytes())?;
    run.write_json(
        &a.out.join("report.json"),
        &GenerateReport {
            checkpoint_iteration: model.iteration,
            seed: a.seed,
            slice_porosity: slice.porosity(),
            mean_mismatch_fraction: mean,
            samples,
        },
    )?;
    println!(
        "{} volumes in {}; mean central-slice mismatch {:.4}",
        a.count,
        a.out.display(),
        mean
    );
    Ok(())
}
