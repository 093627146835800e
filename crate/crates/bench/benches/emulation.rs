use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use scaledown_core::covergen;
use scaledown_core::{assemble, decode, InputScript, Kernel, KernelConfig, ProgramImage, RunPredicate};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bench_image(name: &str) -> ProgramImage {
    let src = std::fs::read_to_string(root().join("bench").join(format!("{name}.s"))).unwrap();
    assemble(&src).unwrap()
}

fn kernel_throughput(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    g.sample_size(20);
    for name in ["loaduse", "stream", "hello"] {
        let img = bench_image(name);
        for interval in [1u64, 100] {
            let cfg = KernelConfig { sample_interval: Some(interval), lockstep: true, ..Default::default() };
            let cycles = {
                let mut k = Kernel::new(&img, &InputScript::default(), cfg.clone()).unwrap();
                k.run_until(RunPredicate::Halted).unwrap();
                k.dut_cycle()
            };
            g.throughput(Throughput::Elements(cycles));
            g.bench_with_input(BenchmarkId::new(name, interval), &cfg, |b, cfg| {
                b.iter(|| {
                    let mut k = Kernel::new(&img, &InputScript::default(), cfg.clone()).unwrap();
                    black_box(k.run_until(RunPredicate::Halted).unwrap())
                })
            });
        }
    }
    g.finish();
}

fn decode_words(c: &mut Criterion) {
    let img = bench_image("branchy");
    let words: Vec<u32> = img.words.values().copied().collect();
    let mut g = c.benchmark_group("decode");
    g.throughput(Throughput::Elements(words.len() as u64));
    g.bench_function("image", |b| b.iter(|| words.iter().map(|&w| decode(black_box(w))).count()));
    g.finish();
}

fn covergen_parse(c: &mut Criterion) {
    let src = std::fs::read_to_string(root().join("sv/scaledown_pipeline.sv")).unwrap();
    let mut g = c.benchmark_group("covergen");
    g.throughput(Throughput::Bytes(src.len() as u64));
    g.bench_function("parse_extract", |b| {
        b.iter(|| {
            let ast = covergen::parse(black_box(&src)).unwrap();
            covergen::extract("scaledown_pipeline.sv", &ast).len()
        })
    });
    g.finish();
}

criterion_group!(benches, kernel_throughput, decode_words, covergen_parse);
criterion_main!(benches);
