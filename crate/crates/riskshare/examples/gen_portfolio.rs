//! Generates a synthetic policy portfolio CSV at known parameters, for
//! exercising the `fit` pipeline end to end.
//!
//! Usage: gen_portfolio [N_POLICIES] [RATE] [SHAPE] [SCALE] [SEED] [OUT.csv]

use riskshare::fitting::{synthetic_portfolio, write_policy_csv};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.into());
    let n: usize = get(1, "10000").parse().expect("N_POLICIES");
    let rate: f64 = get(2, "0.52").parse().expect("RATE");
    let shape: f64 = get(3, "0.58").parse().expect("SHAPE");
    let scale: f64 = get(4, "654.98").parse().expect("SCALE");
    let seed: u64 = get(5, "1").parse().expect("SEED");
    let out = get(6, "portfolio.csv");

    let records = synthetic_portfolio(n, rate, shape, scale, seed).expect("generation failed");
    write_policy_csv(&out, &records).expect("write failed");
    let claims: u64 = records.iter().map(|r| r.n_claims).sum();
    println!("wrote {out}: {n} policies, {claims} claims (rate {rate}, shape {shape}, scale {scale}, seed {seed})");
}
