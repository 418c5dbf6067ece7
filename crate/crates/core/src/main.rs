use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_bigint::BigUint;
use rand::Rng;

use bandit_uplink::codec::{bit_budget, published_bit_bound, UplinkCodec};
use bandit_uplink::harness::{self, ExperimentConfig, HarnessError};
use bandit_uplink::known::XStarSource;
use bandit_uplink::linalg::norm2;
use bandit_uplink::quantizer::quantize_context;
use bandit_uplink::rng::{stream, Stream};

#[derive(Parser)]
#[command(name = "bandit-uplink", version, about = "Contextual linear bandits over a bit-limited uplink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; writes per-seed traces, summary.csv and manifest.toml.
    Run {
        config: PathBuf,
        /// Override the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize trace CSVs matching a glob at the T/100, T/10, T/2, T checkpoints.
    Summarize {
        pattern: String,
        /// Glob of baseline traces; adds a ratio column.
        #[arg(long)]
        baseline: Option<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check bit budgets and encode/decode round trips for a range of dimensions.
    CodecSelftest {
        #[arg(long, default_value_t = 1)]
        min_d: usize,
        #[arg(long, default_value_t = 64)]
        max_d: usize,
        /// Random round trips per dimension when |Q| is too large to enumerate.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump the X* table of a known-distribution config as CSV.
    Xstar {
        config: PathBuf,
        /// Use a Monte-Carlo estimate with this many samples instead of the configured source.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Run { config, out } => run(config, out),
        Command::Summarize { pattern, baseline, out } => summarize(&pattern, baseline.as_deref(), out),
        Command::CodecSelftest { min_d, max_d, samples, seed } => codec_selftest(min_d, max_d, samples, seed),
        Command::Xstar { config, samples } => xstar(config, samples),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(path: PathBuf, out: Option<PathBuf>) -> Result<bool, HarnessError> {
    let config = ExperimentConfig::load(&path)?;
    let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
    let output = harness::run_experiment(&config, &out_dir)?;
    let last = output.summary.rows.last();
    println!(
        "{}: {} seeds x {} rounds -> {}",
        config.name,
        config.seeds.len(),
        config.horizon,
        out_dir.display()
    );
    if let Some(row) = last {
        println!(
            "R_T mean {:.3} (95% CI {:.3}..{:.3}), {:.2} bits/round",
            row.mean_regret, row.ci_low, row.ci_high, row.bits_per_round
        );
    }
    Ok(true)
}

fn summarize(pattern: &str, baseline: Option<&str>, out: Option<PathBuf>) -> Result<bool, HarnessError> {
    let mut summary = harness::summarize(&harness::read_traces(pattern)?)?;
    if let Some(b) = baseline {
        summary = summary.with_baseline(&harness::summarize(&harness::read_traces(b)?)?)?;
    }
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).expect("writing to memory");
    match out {
        Some(path) => std::fs::write(&path, buf).map_err(|source| HarnessError::Io { path, source })?,
        None => print!("{}", String::from_utf8(buf).expect("ascii csv")),
    }
    Ok(true)
}

/// Largest |Q| enumerated exhaustively by the self-test.
const EXHAUSTIVE_LIMIT: u64 = 200_000;

fn codec_selftest(min_d: usize, max_d: usize, samples: usize, seed: u64) -> Result<bool, HarnessError> {
    if min_d == 0 || min_d > max_d {
        return Err(HarnessError::Invalid(vec![format!("bad dimension range {min_d}..={max_d}")]));
    }
    let mut rng = stream(seed, Stream::Offline);
    let mut all_ok = true;
    for d in min_d..=max_d {
        let codec = UplinkCodec::new(d).map_err(|e| HarnessError::Invalid(vec![e.to_string()]))?;
        let ball = codec.ball();
        let budget = bit_budget(d);
        let mut failures = Vec::new();
        if codec.message_bits() as u64 != budget || budget as f64 > published_bit_bound(d) {
            failures.push(format!("budget {budget} vs bound {:.2}", published_bit_bound(d)));
        }

        let exhaustive = *ball.size() <= BigUint::from(EXHAUSTIVE_LIMIT);
        let ranks: Vec<BigUint> = if exhaustive {
            let n: u64 = ball.size().try_into().expect("below limit");
            (0..n).map(BigUint::from).collect()
        } else {
            let bits = ball.rank_bits() as u64;
            let mut out = Vec::with_capacity(samples);
            while out.len() < samples {
                let words: Vec<u32> = (0..bits.div_ceil(32)).map(|_| rng.random()).collect();
                let mut r = BigUint::from_slice(&words);
                r &= (BigUint::from(1u8) << bits) - 1u8;
                if r < *ball.size() {
                    out.push(r);
                }
            }
            out
        };
        for r in &ranks {
            let ok = ball.unrank(r).and_then(|x| ball.rank(&x)).map(|back| back == *r).unwrap_or(false);
            if !ok {
                failures.push(format!("rank {r} does not round-trip"));
                break;
            }
        }

        // full messages from random unit-ball contexts
        for _ in 0..samples.min(2000) {
            let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = norm2(&x);
            if n > 1.0 {
                x.iter_mut().for_each(|v| *v /= n);
            }
            let qc = match quantize_context(&x, &mut rng) {
                Ok(qc) => qc,
                Err(e) => {
                    failures.push(e.to_string());
                    break;
                }
            };
            let report = codec.report(rng.random(), &qc);
            let ok = report.as_ref().ok().and_then(|rep| {
                let buf = codec.encode(rep).ok()?;
                let back = codec.decode(&buf).ok()?;
                Some(buf.len() as u64 == budget && back == *rep && codec.quantized(&back).ok()? == qc)
            });
            if ok != Some(true) {
                failures.push("message round trip failed".to_string());
                break;
            }
        }

        let mode = if exhaustive { "exhaustive" } else { "sampled" };
        if failures.is_empty() {
            println!("d={d:<3} bits={budget:<4} bound={:<8.2} {} ranks ({mode}) ok", published_bit_bound(d), ranks.len());
        } else {
            all_ok = false;
            println!("d={d:<3} FAIL: {}", failures.join("; "));
        }
    }
    Ok(all_ok)
}

fn xstar(path: PathBuf, samples: Option<usize>) -> Result<bool, HarnessError> {
    let mut config = ExperimentConfig::load(&path)?;
    if let (Some(n), bandit_uplink::harness::AlgorithmConfig::Known { xstar, .. }) = (samples, &mut config.algorithm) {
        *xstar = XStarSource::MonteCarlo { samples: n };
    }
    config.validate()?;
    let map = harness::action_map_for(&config)?;
    let d = map.dim();
    let theta_cols: Vec<String> = (0..d).map(|i| format!("theta_{i}")).collect();
    let x_cols: Vec<String> = (0..d).map(|i| format!("xstar_{i}")).collect();
    println!("index,canonical,{},{}", theta_cols.join(","), x_cols.join(","));
    for i in 0..map.len() {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        println!("{i},{},{},{}", map.canonical_index(i), join(&map.theta_grid()[i]), join(&map.table()[i]));
    }
    Ok(true)
}
