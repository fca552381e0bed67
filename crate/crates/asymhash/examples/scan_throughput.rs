//! Measures brute-force scan throughput over database size and code length.
//! The scan cost should scale linearly in n and in ceil(k/64); this prints
//! the measurements, it does not assert them.
//!
//! Run with: cargo run --release -p asymhash --example scan_throughput

use std::time::Instant;

use asymhash::bitcode::{pack, PackedCodeMatrix};
use asymhash::retrieval::CodeDatabase;
use asymhash::seed_stream;
use rand::Rng;

fn build_db(n: usize, k: usize, seed: u64) -> CodeDatabase {
    let mut rng = seed_stream(seed, "bench/db");
    let cols: Vec<Vec<i8>> = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| if rng.random::<bool>() { 1i8 } else { -1 })
                .collect()
        })
        .collect();
    let codes = PackedCodeMatrix::from_columns(k, &cols).unwrap();
    let ids = (0..n).map(|i| format!("{i:08}")).collect();
    CodeDatabase::new(codes, ids).unwrap()
}

fn main() {
    let queries = 200;
    println!(
        "{:>9} {:>6} {:>7} {:>12} {:>14}",
        "n", "k", "words", "scan_us", "Mcodes/s"
    );
    for &k in &[64usize, 128, 256, 512] {
        for &n in &[10_000usize, 20_000, 40_000] {
            let db = build_db(n, k, 1);
            let mut rng = seed_stream(2, "bench/queries");
            let packed_queries: Vec<Vec<u64>> = (0..queries)
                .map(|_| {
                    let q: Vec<i8> = (0..k)
                        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                        .collect();
                    pack(&q).unwrap()
                })
                .collect();
            let start = Instant::now();
            let mut sink = 0u64;
            for q in &packed_queries {
                let hits = db.scan_top(q, 10).unwrap();
                sink = sink.wrapping_add(hits[0].distance as u64);
            }
            let elapsed = start.elapsed();
            let per_query_us = elapsed.as_secs_f64() * 1e6 / queries as f64;
            let mcodes = n as f64 / per_query_us;
            println!(
                "{n:>9} {k:>6} {:>7} {per_query_us:>12.1} {mcodes:>14.1}",
                k.div_ceil(64)
            );
            std::hint::black_box(sink);
        }
    }
}
