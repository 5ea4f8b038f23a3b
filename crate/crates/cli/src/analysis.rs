use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spgan_core::stats::{boxplot_csv, Metric};
use spgan_core::volume::list_pgv1;
use spgan_core::{
    bernoulli_volume, compare_populations, determine_rev, gaussian_field_volume, rev_curve,
    two_point_correlation, ComparisonReport, Estimator, FieldSpec, MorphologyReport, Phase,
    RevParams, VoxelVolume,
};

use crate::error::{CliError, CliResult, Context, Kind};
use crate::output::Run;
use crate::{AnalyzeArgs, CompareArgs, EstimatorArg, FieldKind, RevArgs, SynthArgs, TpcArgs};

pub fn load(path: &Path) -> CliResult<VoxelVolume> {
    VoxelVolume::load(path).context(format!("loading {}", path.display()))
}

pub fn synth(a: &SynthArgs, run: &Run) -> CliResult<()> {
    if a.count == 0 {
        return Err(CliError::config("--count must be at least 1"));
    }
    if !(a.voxel_size > 0.0) {
        return Err(CliError::config("--voxel-size must be positive"));
    }
    for i in 0..a.count {
        let seed = a.seed.wrapping_add(i as u64);
        let vol = match a.kind {
            FieldKind::Gaussian => gaussian_field_volume(&FieldSpec {
                size: a.size,
                correlation_length: a.correlation_length,
                target_porosity: a.porosity,
                seed,
            })?,
            FieldKind::Bernoulli => bernoulli_volume(a.size, a.porosity, seed)?,
        }
        .with_voxel_size(a.voxel_size);
        let path = a.out.join(format!("{}_{i:03}", a.prefix));
        run.with_seed(seed).save_volume(&vol, &path)?;
        println!(
            "{}: porosity {:.6}",
            path.display(),
            spgan_core::porosity(&vol)
        );
    }
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs, run: &Run) -> CliResult<()> {
    let vol = load(&a.volume)?;
    let report = MorphologyReport::analyze(&vol, a.phase.into());
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.out {
        Some(out) if out.extension().is_some_and(|e| e == "csv") => {
            let csv = format!("{}\n{}\n", MorphologyReport::CSV_HEADER, report.csv_row());
            run.write(out, csv.as_bytes())?;
        }
        Some(out) => run.write_json(out, &report)?,
        None => {}
    }
    println!("{json}");
    Ok(())
}

pub fn tpc(a: &TpcArgs, run: &Run) -> CliResult<()> {
    let vol = load(&a.volume)?;
    let estimator = match a.estimator {
        EstimatorArg::Exhaustive => Estimator::Exhaustive,
        EstimatorArg::MonteCarlo => Estimator::MonteCarlo {
            n_pairs: a.pairs,
            seed: a.seed,
        },
    };
    let curve = two_point_correlation(&vol, a.phase.into(), a.max_r, estimator)?;
    run.write(&a.out, curve.to_csv().as_bytes())?;
    println!("wrote {} radii to {}", curve.radii.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RevSummary {
    rev_size: Option<usize>,
    tolerance: f64,
    sizes: Vec<usize>,
    spreads: Vec<f64>,
}

pub fn rev(a: &RevArgs, run: &Run) -> CliResult<()> {
    let vol = load(&a.volume)?;
    let start = a
        .start
        .unwrap_or_else(|| *vol.dims().iter().min().expect("three dims"));
    if !(a.tolerance > 0.0) {
        return Err(CliError::config("--tolerance must be positive"));
    }
    let params = RevParams {
        start_size: start,
        step: a.step,
        min_size: a.min_size,
        samples_per_size: a.samples,
        seed: a.seed,
    };
    let curve = rev_curve(&vol, &params)?;
    let rev_size = match determine_rev(&curve, a.tolerance) {
        Ok(s) => Some(s),
        Err(spgan_core::Error::RevNotReached { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let summary = RevSummary {
        rev_size,
        tolerance: a.tolerance,
        sizes: curve.sizes(),
        spreads: curve.entries.iter().map(|e| e.spread()).collect(),
    };
    run.write(&a.out.join("rev_curve.csv"), curve.to_csv().as_bytes())?;
    run.write_json(&a.out.join("rev.json"), &summary)?;
    match rev_size {
        Some(s) => println!("REV size: {s}"),
        None => println!("REV not reached at tolerance {}", a.tolerance),
    }
    Ok(())
}

pub fn load_dir(dir: &Path) -> CliResult<Vec<(PathBuf, VoxelVolume)>> {
    let files = list_pgv1(dir).context(format!("listing {}", dir.display()))?;
    if files.is_empty() {
        return Err(CliError::new(
            Kind::Validation,
            anyhow::anyhow!("no PGV1 volumes in {}", dir.display()),
        ));
    }
    files
        .into_iter()
        .map(|p| {
            let v = load(&p)?;
            Ok((p, v))
        })
        .collect()
}

/// Morphology of `samples` random subvolumes, cycling through the volumes.
fn population(
    vols: &[(PathBuf, VoxelVolume)],
    samples: usize,
    size: usize,
    phase: Phase,
    seed: u64,
) -> CliResult<Vec<MorphologyReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|i| {
            let (path, v) = &vols[i % vols.len()];
            let sub = v
                .sample_subvolumes_with(size, 1, &mut rng)
                .context(format!("sampling {}", path.display()))?
                .remove(0);
            Ok(MorphologyReport::analyze(&sub, phase))
        })
        .collect()
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    samples: usize,
    size: usize,
    phase: Phase,
    real_volumes: usize,
    synthetic_volumes: usize,
    #[serde(flatten)]
    report: &'a ComparisonReport,
}

pub fn compare(a: &CompareArgs, run: &Run) -> CliResult<()> {
    if a.samples == 0 {
        return Err(CliError::config("--samples must be at least 1"));
    }
    let real = load_dir(&a.real)?;
    let synth = load_dir(&a.synthetic)?;
    let smallest = real
        .iter()
        .chain(&synth)
        .flat_map(|(_, v)| v.dims())
        .min()
        .expect("nonempty");
    let size = a.size.unwrap_or(smallest);
    if size == 0 || size > smallest {
        return Err(CliError::config(format!(
            "--size {size} must lie in 1..={smallest} (smallest volume edge)"
        )));
    }
    let phase: Phase = a.phase.into();
    let r = population(&real, a.samples, size, phase, a.seed)?;
    let s = population(&synth, a.samples, size, phase, a.seed)?;
    let report = compare_populations(&r, &s)?;
    run.write_json(
        &a.out.join("comparison.json"),
        &CompareOutput {
            samples: a.samples,
            size,
            phase,
            real_volumes: real.len(),
            synthetic_volumes: synth.len(),
            report: &report,
        },
    )?;
    run.write(&a.out.join("comparison.csv"), report.to_csv().as_bytes())?;
    for m in Metric::ALL {
        let rv: Vec<f64> = r.iter().map(|x| m.of(x)).collect();
        let sv: Vec<f64> = s.iter().map(|x| m.of(x)).collect();
        run.write(
            &a.out.join(format!("boxplot_{}.csv", m.name())),
            boxplot_csv(&rv, &sv).as_bytes(),
        )?;
    }
    for c in &report.metrics {
        println!(
            "{:<9} median real {:>12.6} synthetic {:>12.6}  rel. diff {:.4}  IQR overlap {:.3}",
            c.metric.name(),
            c.real.median,
            c.synthetic.median,
            c.relative_median_difference,
            c.iqr_overlap
        );
    }
    Ok(())
}
