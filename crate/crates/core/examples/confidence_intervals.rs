//! Confidence intervals for a few event counts, including the zero-event
//! case where the normal approximation is replaced by the one-sided bound.
//!
//!     cargo run --example confidence_intervals

use splitpf::stats::{ci_binary, ConfLevel, SMALL_SAMPLE};

fn main() {
    println!("{:>6} {:>7} {:>8}  {:>22}  {:>22}", "events", "n", "p", "95%", "99%");
    for (k, n) in [(0, 100), (0, 1000), (3, 1000), (60, 4000), (577, 4000), (5000, 10_000)] {
        let fmt = |level| {
            let ci = ci_binary(k, n, level).unwrap();
            format!("[{:.5}, {:.5}]{}", ci.lower, ci.upper, if ci.small_sample() { "*" } else { " " })
        };
        println!("{k:>6} {n:>7} {:>8.5}  {:>22}  {:>22}", k as f64 / n as f64, fmt(ConfLevel::CL95), fmt(ConfLevel::CL99));
    }
    println!("* fewer than {SMALL_SAMPLE} samples: treat the interval with care");
}
