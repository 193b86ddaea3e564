use std::sync::Mutex;
use std::time::Instant;

use gpmvc::dataio::make_partial_split;
use gpmvc::synth;
use gpmvc::trainer::{
    run_mean_impute_baseline, run_pipeline, AblationMode, TrainConfig,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let ds = synth::hw_like(7).generate().unwrap();
    let config = TrainConfig::default();

    #[derive(Clone, Copy)]
    enum Task {
        Pipe(AblationMode, f64),
        Baseline(f64),
    }
    let tasks = vec![
        Task::Pipe(AblationMode::All, 0.1),
        Task::Pipe(AblationMode::All, 0.3),
        Task::Pipe(AblationMode::All, 0.5),
        Task::Pipe(AblationMode::All, 0.7),
        Task::Pipe(AblationMode::All, 0.9),
        Task::Pipe(AblationMode::Ae, 0.5),
        Task::Pipe(AblationMode::AeAt, 0.5),
        Task::Baseline(0.3),
    ];
    let queue = Mutex::new(tasks);
    let t0 = Instant::now();
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| loop {
                let task = match queue.lock().unwrap().pop() {
                    Some(t) => t,
                    None => break,
                };
                match task {
                    Task::Pipe(mode, ratio) => {
                        let config = TrainConfig {
                            ablation_mode: mode,
                            ..config.clone()
                        };
                        let out = run_pipeline(&ds, ratio, seed, &config, None).unwrap();
                        println!(
                            "[{:6.1}s] {:5} r={ratio}: acc {:.4} nmi {:.4} pur {:.4}",
                            t0.elapsed().as_secs_f64(),
                            out.result.mode,
                            out.result.acc,
                            out.result.nmi,
                            out.result.purity
                        );
                    }
                    Task::Baseline(ratio) => {
                        let split = make_partial_split(&ds, ratio, seed).unwrap();
                        let mut config = config.clone();
                        config.seed = seed;
                        let r = run_mean_impute_baseline(&ds, &split, &config).unwrap();
                        println!(
                            "[{:6.1}s] BASE  r={ratio}: acc {:.4} nmi {:.4} pur {:.4}",
                            t0.elapsed().as_secs_f64(),
                            r.acc,
                            r.nmi,
                            r.purity
                        );
                    }
                }
            });
        }
    });
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
