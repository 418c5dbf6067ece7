//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bandit_uplink::codec::{bit_budget, published_bit_bound, LatticeBall, UplinkCodec};
use bandit_uplink::env::{ContextModel, ContextSet, Environment, EnvironmentSpec, NoiseModel, SupportPoint};
use bandit_uplink::harness::{self, ExperimentConfig};
use bandit_uplink::known::{estimate_xstar, exact_xstar};
use bandit_uplink::quantizer::{grid_resolution, quantize_context, StochasticQuantizer};
use bandit_uplink::rng::{stream, Stream};
use bandit_uplink::unknown::{agent_round_unknown, LearnerConfig, QuantizedLeastSquares};
use bandit_uplink::RewardMap;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")).join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// A criterion body returns a one-line detail string or panics.
type Criterion = fn() -> String;

fn within(limit: Duration, elapsed: Duration) {
    assert!(elapsed <= limit, "took {elapsed:.2?}, limit {limit:.0?}");
}

// C(n, k) by the multiplicative formula, independent of the codec tables.
fn binomial_oracle(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u8);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn bit_budget_exact() -> String {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=64usize {
        let size = binomial_oracle(3 * d as u64, d as u64);
        // ceil(log2 n) = bit length of n - 1
        let rank_bits = (size.clone() - 1u8).bits();
        let expected = 1 + 2 * d as u64 + rank_bits;
        assert_eq!(bit_budget(d), expected, "d={d}");
        assert!(expected as f64 <= published_bit_bound(d), "d={d}: {expected} above bound");

        let codec = UplinkCodec::new(d).unwrap();
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= n.max(1.0));
        let spec = EnvironmentSpec {
            dim: d,
            num_actions: 1,
            theta_star: vec![0.0; d],
            contexts: ContextModel::Custom { supports: vec![vec![SupportPoint { x: x.clone(), p: 1.0 }]] },
            noise: NoiseModel::Bernoulli,
        };
        let mut env = Environment::new(spec, 0).unwrap();
        let step = agent_round_unknown(&codec, &vec![0.0; d], &ContextSet(vec![x]), &mut env, &mut rng).unwrap();
        assert_eq!(step.message.len() as u64, expected, "d={d}: emitted message");
    }
    within(Duration::from_secs(1), start.elapsed());
    format!("d=1..64 exact, d=64 uses {} bits (bound {:.1})", bit_budget(64), published_bit_bound(64))
}

fn known_uplink_one_bit() -> String {
    let mut rounds = 0;
    for name in ["two_arm_known.toml", "counterexample_known.toml", "misspecified_eps02.toml"] {
        let mut cfg = config(name);
        cfg.horizon = 2000;
        for trace in harness::simulate(&cfg).unwrap() {
            for r in &trace.rounds {
                assert_eq!(r.bits, 1, "{name} seed {}", trace.seed);
            }
            rounds += trace.len();
        }
    }
    format!("{rounds} simulated rounds, all 1 bit")
}

fn codec_bijection() -> String {
    let start = Instant::now();
    for d in 1..=5 {
        let ball = LatticeBall::new(d).unwrap();
        let n: u64 = ball.size().try_into().unwrap();
        let mut prev: Option<Vec<u32>> = None;
        for r in 0..n {
            let x = ball.unrank(&BigUint::from(r)).unwrap();
            assert!(x.iter().map(|&v| v as usize).sum::<usize>() <= 2 * d);
            assert_eq!(ball.rank(&x).unwrap(), BigUint::from(r));
            if let Some(p) = &prev {
                assert!(*p < x, "d={d}: unrank not strictly increasing");
            }
            prev = Some(x);
        }
        if d == 5 {
            assert_eq!(n, 3003);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in [16usize, 64] {
        let ball = LatticeBall::new(d).unwrap();
        let bits = ball.rank_bits() as u64;
        let mut done = 0;
        while done < 100_000 {
            let words: Vec<u32> = (0..bits.div_ceil(32)).map(|_| rng.random()).collect();
            let r = BigUint::from_slice(&words) & ((BigUint::from(1u8) << bits) - 1u8);
            if r >= *ball.size() {
                continue;
            }
            let x = ball.unrank(&r).unwrap();
            assert_eq!(ball.rank(&x).unwrap(), r, "d={d}");
            done += 1;
        }
    }
    within(Duration::from_secs(10), start.elapsed());
    "exhaustive d<=5 (3003 at d=5), 1e5 random at d=16 and d=64".to_string()
}

fn quantizer_laws() -> String {
    let start = Instant::now();
    let mut rng = stream(4, Stream::Quantizer);
    let mut violations = 0usize;
    for _ in 0..1_000_000 {
        let levels = rng.random_range(1..=16u32);
        let lower = rng.random_range(-5.0..5.0);
        let upper = lower + rng.random_range(0.01..10.0);
        let q = StochasticQuantizer::with_range(levels, lower, upper).unwrap();
        let x = rng.random_range(lower..=upper);
        let v = q.decode(q.encode(x, &mut rng).unwrap()).unwrap();
        if (v - x).abs() > (upper - lower) / levels as f64 + 1e-12 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);

    let n = 100_000;
    let cases = [(3, 0.0, 3.0, 1.25), (1, -1.0, 1.0, 0.3), (1, -1.0, 1.0, 0.0), (7, 0.0, 7.0, 6.9), (3, -2.0, 4.0, 0.1)];
    let mut worst = 0.0f64;
    for (levels, lower, upper, x) in cases {
        let q = StochasticQuantizer::with_range(levels, lower, upper).unwrap();
        let m = mean((0..n).map(|_| q.decode(q.encode(x, &mut rng).unwrap()).unwrap()));
        let tol = 4.0 * (upper - lower) / (levels as f64 * (n as f64).sqrt());
        assert!((m - x).abs() <= tol, "SQ_{levels}[{lower},{upper}] at {x}: mean {m}");
        worst = worst.max((m - x).abs() / tol);
    }

    for d in [1usize, 5, 25] {
        let m = grid_resolution(d) as f64;
        for _ in 0..100_000 {
            let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
            x.iter_mut().for_each(|v| *v *= r / norm);
            let qc = quantize_context(&x, &mut rng).unwrap();
            assert!(qc.in_q());
            let (xhat, _) = qc.reconstruct();
            for (a, b) in x.iter().zip(&xhat) {
                assert!((a * a - b * b).abs() <= 3.0 / m + 1e-12, "d={d}");
            }
        }
    }
    within(Duration::from_secs(30), start.elapsed());
    format!("0 bound violations in 1e6 draws, worst bias {:.2} of tolerance", worst)
}

fn xstar_golden() -> String {
    let start = Instant::now();
    let grid = [0.25, 0.5, 0.75];
    let mut worst = 0.0f64;
    let mut rng = stream(5, Stream::Offline);
    for &p in &grid {
        for &q in &grid {
            let spec = EnvironmentSpec {
                dim: 1,
                num_actions: 2,
                theta_star: vec![1.0],
                contexts: ContextModel::BinarySupport { p_minus: vec![p, q] },
                noise: NoiseModel::Bernoulli,
            };
            let up = 1.0 - 2.0 * p * q;
            let down = -1.0 + 2.0 * (1.0 - p) * (1.0 - q);
            assert!((exact_xstar(&spec, &[1.0]).unwrap()[0] - up).abs() < 1e-12);
            assert!((exact_xstar(&spec, &[-1.0]).unwrap()[0] - down).abs() < 1e-12);
            for (theta, truth) in [(1.0, up), (-1.0, down)] {
                let est = estimate_xstar(&spec, &[theta], 100_000, &mut rng).unwrap()[0];
                assert!((est - truth).abs() <= 0.01, "p={p} q={q} theta={theta}: {est} vs {truth}");
                worst = worst.max((est - truth).abs());
            }
        }
    }
    within(Duration::from_secs(10), start.elapsed());
    format!("closed form exact on 9 (p,q) pairs, worst Monte-Carlo error {worst:.4}")
}

fn naive_counterexample() -> String {
    let start = Instant::now();
    let naive = harness::simulate(&config("counterexample_naive.toml")).unwrap();
    let known = harness::simulate(&config("counterexample_known.toml")).unwrap();
    assert_eq!(naive.len(), 20);
    assert_eq!(known.len(), 20);
    assert!(naive.iter().chain(&known).all(|t| t.len() == 10_000));
    let naive_rate = mean(naive.iter().map(|t| t.cumulative() / 1e4));
    assert!(naive_rate >= 0.2, "naive per-round regret {naive_rate}");
    let late = mean(known.iter().map(|t| t.cumulative_at(10_000) / 1e4));
    let early = mean(known.iter().map(|t| t.cumulative_at(1_000) / 1e3));
    // zero regret at both horizons is the degenerate best case
    assert!(late < 0.5 * early || (late == 0.0 && early == 0.0), "R/T {late} vs {early}");
    within(Duration::from_secs(120), start.elapsed());
    format!("naive {naive_rate:.4}/round; X* reduction R/T {early:.5} at 1e3 -> {late:.5} at 1e4")
}

fn quantized_regret() -> String {
    let start = Instant::now();
    let quant = harness::simulate(&config("gaussian_unknown.toml")).unwrap();
    let full = harness::simulate(&config("gaussian_full_precision.toml")).unwrap();
    assert_eq!(quant.len(), 20);
    assert_eq!(quant.iter().map(|t| t.seed).collect::<Vec<_>>(), full.iter().map(|t| t.seed).collect::<Vec<_>>());
    let rq = mean(quant.iter().map(|t| t.cumulative_at(20_000)));
    let rf = mean(full.iter().map(|t| t.cumulative_at(20_000)));
    assert!(rq <= 3.0 * rf, "quantized {rq} vs full precision {rf}");
    let late = rq / 2e4;
    let early = mean(quant.iter().map(|t| t.cumulative_at(2_000))) / 2e3;
    assert!(late <= 0.5 * early, "R/T {late} vs {early}");
    assert!(quant.iter().all(|t| t.rounds.iter().all(|r| r.bits == 23)));
    within(Duration::from_secs(300), start.elapsed());
    format!("R_T {rq:.1} vs full precision {rf:.1} (ratio {:.2}); R/T {early:.4} -> {late:.4}", rq / rf)
}

// Minimum-norm least squares on the stacked design, via SVD of the t x d
// matrix rather than the d x d accumulator.
fn stacked_least_squares(rows: &[Vec<f64>], targets: &[f64]) -> DVector<f64> {
    let d = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(targets);
    let svd = a.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    svd.solve(&y, tol).unwrap()
}

fn least_squares_equivalence() -> String {
    let start = Instant::now();
    let d = 4;
    // every coordinate in {0, +-1/2}: m = 2 makes all magnitudes integral
    let mut points = Vec::new();
    for code in 0..81u32 {
        let x: Vec<f64> = (0..d).map(|i| [0.0, 0.5, -0.5][(code / 3u32.pow(i as u32) % 3) as usize]).collect();
        points.push(SupportPoint { x, p: 1.0 / 81.0 });
    }
    let spec = EnvironmentSpec {
        dim: d,
        num_actions: 3,
        theta_star: vec![0.5, -0.3, 0.2, 0.4],
        contexts: ContextModel::Custom { supports: vec![points; 3] },
        noise: NoiseModel::Bernoulli,
    };
    let mut env = Environment::new(spec, 8).unwrap();
    let mut quant_rng = stream(8, Stream::Quantizer);
    let config = LearnerConfig { warmup: d, reward_map: RewardMap::Centered };
    let mut learner = QuantizedLeastSquares::new(d, config).unwrap();
    let codec = learner.codec().clone();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut worst = 0.0f64;
    for t in 1..=1000 {
        let ctx = env.next_context().unwrap();
        let step = agent_round_unknown(&codec, learner.theta_hat(), &ctx, &mut env, &mut quant_rng).unwrap();
        let report = codec.decode(&step.message).unwrap();
        let (xhat, _) = codec.quantized(&report).unwrap().reconstruct();
        let played = &ctx.0[step.action];
        assert_eq!(&xhat, played, "quantization was not exact");
        let diag: Vec<f64> = played.iter().map(|v| v * v).collect();
        learner.update_decoded(report.reward_bit as u8 as f64, &xhat, &diag).unwrap();
        rows.push(xhat);
        targets.push(2.0 * report.reward_bit as u8 as f64 - 1.0);
        let theta = DVector::from_column_slice(learner.theta_hat());
        if t < d {
            assert!(theta.iter().all(|&v| v == 0.0));
            continue;
        }
        let oracle = stacked_least_squares(&rows, &targets);
        let err = (theta - oracle).amax();
        assert!(err <= 1e-9, "t={t}: deviation {err}");
        worst = worst.max(err);
    }
    within(Duration::from_secs(10), start.elapsed());
    format!("1000 rounds, max |theta - LS| = {worst:.2e}")
}

fn misspecification_trend() -> String {
    let start = Instant::now();
    let means: Vec<f64> = ["misspecified_eps0.toml", "misspecified_eps01.toml", "misspecified_eps02.toml"]
        .iter()
        .map(|name| {
            let traces = harness::simulate(&config(name)).unwrap();
            assert_eq!(traces.len(), 20);
            mean(traces.iter().map(|t| t.cumulative()))
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "means {means:?}");
    within(Duration::from_secs(120), start.elapsed());
    format!("mean R_T at eps 0, 0.1, 0.2: {:.1}, {:.1}, {:.1}", means[0], means[1], means[2])
}

fn reproducibility() -> String {
    let mut files = 0;
    for name in ["two_arm_known.toml", "gaussian_unknown.toml", "counterexample_naive.toml", "gaussian_full_precision.toml"] {
        let mut cfg = config(name);
        cfg.horizon = cfg.horizon.min(3000);
        cfg.seeds.truncate(4);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out_a = harness::run_experiment(&cfg, a.path()).unwrap();
        harness::run_experiment(&cfg, b.path()).unwrap();
        let mut names: Vec<_> = out_a.trace_files.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        names.push("summary.csv".into());
        names.push("manifest.toml".into());
        for f in names {
            let x = std::fs::read(a.path().join(&f)).unwrap();
            let y = std::fs::read(b.path().join(&f)).unwrap();
            assert!(!x.is_empty());
            assert_eq!(x, y, "{name}: {f:?} differs");
            files += 1;
        }
    }
    format!("{files} output files byte-identical across repeated runs")
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("bit budget", bit_budget_exact),
        ("known-distribution uplink is 1 bit", known_uplink_one_bit),
        ("codec bijection", codec_bijection),
        ("quantizer laws", quantizer_laws),
        ("X* golden values", xstar_golden),
        ("naive reduction counterexample", naive_counterexample),
        ("quantized regret vs full precision", quantized_regret),
        ("least-squares equivalence", least_squares_equivalence),
        ("misspecification trend", misspecification_trend),
        ("reproducibility", reproducibility),
    ];
    // keep panic messages for the report line only
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, body)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(body));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail} [{secs:.2}s]", i + 1),
            Err(panic) => {
                failed += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL  {:>2}. {name}: {msg} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
