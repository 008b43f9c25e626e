//! Decode time grows no faster than N log2 N.

use std::time::Instant;

use pqkd_core::channel::ChannelModel;
use pqkd_core::construction::{CodeMetadata, PolarCode, TABLE_FORMAT_VERSION};
use pqkd_core::polar_core::{FixedArithmetic, ScDecoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best-of-`reps` seconds per decode for a random rate-0.85 code.
fn time_decode(n: u8, reps: usize) -> f64 {
    let len = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(n));
    let mask: Vec<bool> = (0..len).map(|_| rng.random_bool(0.15)).collect();
    let code = PolarCode::new(
        n,
        mask,
        CodeMetadata {
            channel: ChannelModel::Bsc { p: 0.02 },
            target_fer: 0.1,
            quantization_bins: 2048,
            format_version: TABLE_FORMAT_VERSION,
            fer_bound: None,
        },
    )
    .unwrap();
    let llrs: Vec<i16> = (0..len).map(|_| if rng.random_bool(0.02) { -996 } else { 996 }).collect();
    let frozen = vec![0u8; code.frozen_count()];
    let mut dec = ScDecoder::new(FixedArithmetic::default());
    dec.decode(&code, &llrs, &frozen).unwrap();
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(dec.decode(&code, &llrs, &frozen).unwrap());
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn decode_time_scales_as_n_log_n() {
    let points: Vec<(u8, f64)> = [(14u8, 80), (16, 30), (18, 12), (20, 8)]
        .iter()
        .map(|&(n, reps)| {
            let per_op = time_decode(n, reps) / ((1u64 << n) as f64 * f64::from(n));
            (n, per_op)
        })
        .collect();
    let base = points[0].1;
    for &(n, per_op) in &points {
        println!("n={n}: {:.3} ns per N log N, ratio {:.3}", per_op * 1e9, per_op / base);
    }
    for &(n, per_op) in &points[1..] {
        assert!(per_op <= 1.25 * base, "n={n}: {per_op:e} s vs {base:e} s at n=14");
    }
}
