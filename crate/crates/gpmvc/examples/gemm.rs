// Imputation-quality probe with configurable batch size.
use gpmvc::clustering::{assign_clusters, init_centroids, metrics, soft_assign};
use gpmvc::dataio::{make_partial_split, mean_impute};
use gpmvc::synth;
use gpmvc::trainer::{AblationMode, TrainConfig, TrainRun};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let batch: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let ds = synth::hw_like(7).generate().unwrap();
    let ratio = 0.5;
    let seed = 1;
    let split = make_partial_split(&ds, ratio, seed).unwrap();

    let fill_err = |views: &[ndarray::Array2<f64>]| -> f64 {
        let mut err = 0.0;
        let mut cnt = 0usize;
        for (&j, &r) in split.unpaired.iter() {
            for v in 0..ds.num_views() {
                if v != r {
                    let d = &views[v].row(j) - &ds.views[v].row(j);
                    err += d.mapv(|x| x * x).sum() / ds.views[v].ncols() as f64;
                    cnt += 1;
                }
            }
        }
        err / cnt as f64
    };

    let filled = mean_impute(&ds, &split).unwrap();
    println!("batch {batch}: mean-impute MSE {:.5}", fill_err(&filled.views));

    for mode in [AblationMode::AeAt] {
        let t0 = Instant::now();
        let config = TrainConfig {
            ablation_mode: mode,
            seed,
            batch_size: batch,
            ..TrainConfig::default()
        };
        let mut run = TrainRun::new(&ds, &split, &config).unwrap();
        run.step1().unwrap();
        run.step2().unwrap();
        let completed = run.completed_views().unwrap().to_vec();
        let all: Vec<usize> = (0..ds.num_samples()).collect();
        let z = run.fused_latent_rows(&completed, &all).unwrap();
        let mu = init_centroids(z.view(), ds.k, 0).unwrap();
        let q = soft_assign(z.view(), &mu, 1.0).unwrap();
        let acc = metrics::clustering_accuracy(&assign_clusters(&q), &ds.labels).unwrap();
        let cyc = run
            .log()
            .iter()
            .filter(|r| r.step == 2)
            .last()
            .map(|r| r.l_cyc)
            .unwrap_or(0.0);
        println!(
            "{:?} batch {batch}: MSE {:.5} acc {:.4} last-cyc {:.2} ({:.0}s)",
            mode,
            fill_err(&completed),
            acc,
            cyc,
            t0.elapsed().as_secs_f64()
        );
    }
}
