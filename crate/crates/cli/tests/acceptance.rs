//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use courtlift::dataio::rebalance;
use courtlift::experiment::{noise_sweep, run_experiment, ExperimentConfig, Method};
use courtlift::predictors::{PredictorKind, PredictorSpec};
use courtlift::reconstruct::reconstruct_from_height;
use courtlift::rng::{self, domain};
use courtlift::synth::{
    generate_dataset, sample_ball, ArenaSpec, BallSample, HeightDistSpec, HIGH_BALL_M,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn dataset(
    seed: u64,
    n: usize,
    arena: &ArenaSpec,
    dist: &HeightDistSpec,
    n_arenas: u32,
) -> Vec<BallSample> {
    generate_dataset(seed, n, arena, dist, n_arenas).unwrap()
}

fn oracle_metrics(samples: &[BallSample]) -> (f64, f64) {
    let cfg = ExperimentConfig::new(Method::Height, PredictorSpec::oracle(), 1);
    let (_, agg) = run_experiment(samples, &cfg).unwrap();
    (agg.ma3de_m.mean, agg.mape_m.mean)
}

fn master_round_trip() -> Outcome {
    let start = Instant::now();
    let (ma3de, mape) = single_threaded(|| {
        let samples =
            dataset(101, 10_000, &ArenaSpec::default(), &HeightDistSpec::uniform(6.0), 12);
        oracle_metrics(&samples)
    });
    let elapsed = start.elapsed();

    let distorted =
        ArenaSpec { k1_range: [-0.3, 0.3], k2_range: [-0.05, 0.05], ..ArenaSpec::default() };
    let samples = dataset(102, 10_000, &distorted, &HeightDistSpec::uniform(6.0), 12);
    let (ma3de_dist, _) = oracle_metrics(&samples);

    outcome(
        ma3de < 1e-6 && mape < 1e-6 && elapsed < Duration::from_secs(5) && ma3de_dist < 1e-4,
        format!(
            "MA3DE {ma3de:.2e} m, MAPE {mape:.2e} m in {:.2} s on 1 thread; with |k1|<=0.3 MA3DE {ma3de_dist:.2e} m",
            elapsed.as_secs_f64()
        ),
    )
}

fn scale_invariance() -> Outcome {
    let samples = dataset(201, 1000, &ArenaSpec::default(), &HeightDistSpec::deepsport_like(), 10);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for s in &samples {
        let base = reconstruct_from_height(&s.cal, &s.ball_px, s.h_true).unwrap();
        for scale in [1.0, 0.5, 0.25, 0.125] {
            let cal = s.cal.scaled(scale).unwrap();
            match reconstruct_from_height(&cal, &(s.ball_px * scale), s.h_true * scale) {
                Ok(r) => worst = worst.max((r.ball_3d - base.ball_3d).norm()),
                Err(_) => failures += 1,
            }
        }
    }
    outcome(
        worst < 1e-9 && failures == 0,
        format!("max deviation {worst:.2e} m over 1000 samples x 4 scales, {failures} failures"),
    )
}

fn noise_monotonicity() -> Outcome {
    let samples = dataset(301, 5000, &ArenaSpec::default(), &HeightDistSpec::deepsport_like(), 15);
    let grid = [0.0, 5.0, 10.0, 20.0, 40.0];
    let rows =
        noise_sweep(&samples, Method::Height, PredictorKind::Gaussian, 3.0, &grid, 1, 3).unwrap();
    let mape: Vec<f64> = rows.iter().map(|r| r.report.mape_m.mean).collect();
    let steps_ok = mape.windows(2).all(|w| w[1] >= w[0]);
    let total = mape[mape.len() - 1] - mape[0];
    outcome(
        steps_ok && total > 0.0,
        format!(
            "MAPE over {grid:?} px: [{}]",
            mape.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Many arenas, so the estimate reflects the arena distribution rather than
/// a handful of camera draws.
fn wide_arena_set() -> Vec<BallSample> {
    dataset(401, 10_000, &ArenaSpec::default(), &HeightDistSpec::deepsport_like(), 100)
}

fn realistic_noise_band(samples: &[BallSample]) -> Outcome {
    let cfg = ExperimentConfig::new(Method::Height, PredictorSpec::gaussian_mae(34.0, 4), 1);
    let (_, agg) = run_experiment(samples, &cfg).unwrap();
    let (mape, mdnape) = (agg.mape_m.mean, agg.mdnape_m.mean);
    outcome(
        (0.5..=2.5).contains(&mape) && mdnape < mape,
        format!("MAE {:.1} px -> MAPE {mape:.3} m, MdnAPE {mdnape:.3} m", agg.mae_px.unwrap().mean),
    )
}

fn baseline_inferiority(samples: &[BallSample]) -> Outcome {
    let height = ExperimentConfig::new(Method::Height, PredictorSpec::gaussian_mae(34.0, 5), 1);
    let diameter = ExperimentConfig::new(Method::Diameter, PredictorSpec::gaussian_mae(0.10, 5), 1);
    let (_, h) = run_experiment(samples, &height).unwrap();
    let (_, d) = run_experiment(samples, &diameter).unwrap();
    outcome(
        d.mape_m.mean > h.mape_m.mean,
        format!(
            "diameter (10% rel.) MAPE {:.3} m vs height (34 px) MAPE {:.3} m",
            d.mape_m.mean, h.mape_m.mean
        ),
    )
}

fn above_fraction(dist: &HeightDistSpec, seed: u64) -> f64 {
    let arena = ArenaSpec::default();
    let n = 100_000;
    let mut rng = rng::stream(seed, domain::BALL, 0);
    let above = (0..n).filter(|_| sample_ball(&mut rng, &arena, dist).z >= HIGH_BALL_M).count();
    above as f64 / n as f64
}

fn height_anchors() -> Outcome {
    let deep = above_fraction(&HeightDistSpec::deepsport_like(), 601);
    let ball = above_fraction(&HeightDistSpec::ballistic_like(), 602);
    let samples = dataset(603, 2000, &ArenaSpec::default(), &HeightDistSpec::deepsport_like(), 15);
    let balanced = rebalance(&samples, 2.0, 604).unwrap();
    let above = balanced.iter().filter(|s| s.ball_3d.z > 2.0).count();
    let below = balanced.len() - above;
    outcome(
        (deep - 0.075).abs() <= 0.01 && (ball - 0.438).abs() <= 0.015 && above == below,
        format!(
            "above 3 m: deepsport_like {:.2}%, ballistic_like {:.2}%; after rebalance at 2 m {above} above / {below} below",
            100.0 * deep,
            100.0 * ball
        ),
    )
}

fn repeat_aggregation() -> Outcome {
    let samples = dataset(701, 2000, &ArenaSpec::default(), &HeightDistSpec::deepsport_like(), 15);
    let noisy = ExperimentConfig::new(Method::Height, PredictorSpec::gaussian_mae(34.0, 7), 8);
    let oracle = ExperimentConfig::new(Method::Height, PredictorSpec::oracle(), 8);
    let (_, n) = run_experiment(&samples, &noisy).unwrap();
    let (_, o) = run_experiment(&samples, &oracle).unwrap();
    let noisy_ok = n.k == 8 && n.rows().iter().all(|(_, m)| m.std > 0.0);
    let oracle_ok = o.k == 8 && o.rows().iter().all(|(_, m)| m.std == 0.0);
    outcome(
        noisy_ok && oracle_ok,
        format!(
            "k=8 noisy MAPE {:.3} +- {:.3} m; oracle MAPE std {:e}",
            n.mape_m.mean, n.mape_m.std, o.mape_m.std
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, prefix: &str| {
        let out = dir.path().join(prefix);
        let status = Command::new(env!("CARGO_BIN_EXE_courtlift"))
            .args(["evaluate", "--synth", "3000", "--seed", "11", "--kind", "heavy-tailed"])
            .args(["--target-mae", "34", "--repeats", "4", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        ["json", "csv"].map(|ext| std::fs::read(out.with_extension(ext)).unwrap())
    };
    let one = run("1", "one");
    let four = run("4", "four");
    let same = one == four;
    outcome(
        same,
        format!(
            "--threads 1 vs 4: report.json {} bytes, report.csv {} bytes, {}",
            one[0].len(),
            one[1].len(),
            if same { "identical" } else { "different" }
        ),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let wide_set = wide_arena_set();
    let criteria: Vec<(&str, Check)> = vec![
        ("master round trip", Box::new(master_round_trip)),
        ("scale invariance", Box::new(scale_invariance)),
        ("noise monotonicity", Box::new(noise_monotonicity)),
        ("realistic noise sanity band", Box::new(|| realistic_noise_band(&wide_set))),
        ("baseline inferiority", Box::new(|| baseline_inferiority(&wide_set))),
        ("height-distribution anchors", Box::new(height_anchors)),
        ("repeat aggregation", Box::new(repeat_aggregation)),
        ("determinism across thread counts", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
