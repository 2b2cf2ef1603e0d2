//! Prints the accuracy trends and de-noising figures on a synthetic run.
//!
//! `cargo run --release -p csi-humidity --example trends [scenario.toml]`

use std::time::Instant;

use csi_humidity::classify::Algorithm;
use csi_humidity::denoise::{denoise_pipeline, denoise_stages, DenoiseConfig};
use csi_humidity::eval::{evaluate, EvalConfig};
use csi_humidity::features::build_dataset;
use csi_humidity::labels::Resolution;
use csi_humidity::stats::pearson;
use csi_humidity::synth::{generate_series, ScenarioConfig};

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let start = Instant::now();
    let run = generate_series(&cfg)?;
    let dn = DenoiseConfig::default();
    println!(
        "frames {} generated in {:?}",
        run.noisy.len(),
        start.elapsed()
    );
    println!(
        "corr(mean clean amp, humidity) = {:.4}",
        pearson(&run.clean.mean_trace(), run.clean.humidity().unwrap())
    );

    let stages = denoise_stages(&run.noisy, &dn)?;
    let hit = run
        .log
        .affected_blocks(run.noisy.len(), dn.downsample_window, 0.5);
    let (mut flagged, mut total) = (0usize, 0usize);
    for (b, &h) in hit.iter().enumerate() {
        if h {
            total += stages.replaced.ncols();
            flagged += stages.replaced.row(b).iter().filter(|&&r| r).count();
        }
    }
    let clean_ds = csi_humidity::denoise::downsample(&run.clean, dn.downsample_window)?;
    let raw_rmse = rmse(&run.noisy.mean_trace(), &run.clean.mean_trace());
    let post_rmse = rmse(&stages.smoothed.mean_trace(), &clean_ds.mean_trace());
    println!(
        "PR samples replaced {flagged}/{total} = {:.4}; rmse raw {raw_rmse:.3} post {post_rmse:.3} ratio {:.4}",
        flagged as f64 / total as f64,
        post_rmse / raw_rmse
    );

    let data = build_dataset(&denoise_pipeline(&run.noisy, &dn)?)?;
    let raw = build_dataset(&run.noisy.decimate(dn.downsample_window))?;
    println!("rows {} (raw {})", data.len(), raw.len());
    let resolutions: &[u32] = if std::env::var_os("TRENDS_QUICK").is_some() {
        &[5]
    } else {
        &[2, 5, 10]
    };
    for &n in resolutions {
        for algo in Algorithm::ALL {
            let t = Instant::now();
            let rep = evaluate(&data, &EvalConfig::new(algo, Resolution::new(n).unwrap()))?;
            println!(
                "n={n:2} {:5} mean {:.4} pooled {:.4} span {:.3}..{:.3} ({:?})",
                algo.name(),
                rep.mean_accuracy,
                rep.pooled_accuracy,
                rep.accuracy_span.0,
                rep.accuracy_span.1,
                t.elapsed()
            );
        }
    }
    let rep = evaluate(
        &raw,
        &EvalConfig::new(Algorithm::Knn, Resolution::new(5).unwrap()),
    )?;
    println!("no de-noising: knn n=5 mean {:.4}", rep.mean_accuracy);
    println!("total {:?}", start.elapsed());
    Ok(())
}
