use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cochannel_bench::{factor_fixture, preset_input};
use cochannel_core::coding::{turbo_decode, turbo_encode};
use cochannel_core::detectors::{
    incoming_moments, partition_by_power, spa_factor_message_approx, spa_factor_message_exact,
};
use cochannel_core::{BitLlr, DetectorKind, DetectorSettings, Modulation, OpCounter};

fn factor_messages(c: &mut Criterion) {
    let mut g = c.benchmark_group("factor_message");
    for (modulation, k) in [(Modulation::Bpsk, 8), (Modulation::Bpsk, 10), (Modulation::Qpsk, 8)] {
        let f = factor_fixture(k, modulation, 3);
        let label = format!("{modulation:?}_K{k}");
        g.bench_with_input(BenchmarkId::new("exact_all_neighbours", &label), &f, |b, f| {
            b.iter(|| {
                let mut counter = OpCounter::default();
                spa_factor_message_exact(
                    black_box(f.y),
                    &f.coeffs,
                    &f.incoming,
                    0,
                    f.noise_var,
                    &f.constellation,
                    &mut counter,
                )
                .unwrap()
            })
        });
        let moments = incoming_moments(&f.incoming, &f.constellation);
        for a in [0, 3] {
            let part = partition_by_power(&f.coeffs, Some(0), a).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("approx_a{a}"), &label), &f, |b, f| {
                b.iter(|| {
                    let mut counter = OpCounter::default();
                    spa_factor_message_approx(
                        black_box(f.y),
                        &f.coeffs,
                        &f.incoming,
                        &moments,
                        0,
                        &part,
                        f.noise_var,
                        &f.constellation,
                        &mut counter,
                    )
                    .unwrap()
                })
            });
        }
    }
    g.finish();
}

fn detectors(c: &mut Criterion) {
    let mut g = c.benchmark_group("detector_pass");
    g.sample_size(10);
    for (preset, snr) in [("fig6", 2.0), ("fig8", 10.0)] {
        let (_, input) = preset_input(preset, snr);
        for kind in DetectorKind::ALL {
            if preset == "fig8" && matches!(kind, DetectorKind::SsmJoint | DetectorKind::FgExact) {
                continue;
            }
            let settings = DetectorSettings::new(kind, if kind == DetectorKind::FgApprox { 3 } else { 0 });
            g.bench_function(BenchmarkId::new(kind.name(), preset), |b| {
                b.iter(|| {
                    let mut d = settings.build();
                    d.detect(black_box(&input), &mut OpCounter::default()).unwrap()
                })
            });
        }
    }
    g.finish();
}

fn turbo(c: &mut Criterion) {
    let (s, _) = preset_input("fig6", 2.0);
    let info: Vec<u8> = (0..s.turbo.n_info).map(|i| (i * 7 % 3 == 0) as u8).collect();
    let coded = turbo_encode(&info, &s.turbo).unwrap();
    let llrs: Vec<BitLlr> = coded
        .iter()
        .map(|&b| BitLlr::new(if b == 0 { 1.5 } else { -1.5 }))
        .collect();
    c.bench_function("turbo_decode_fig6", |b| {
        b.iter(|| turbo_decode(black_box(&llrs), &s.turbo, None).unwrap())
    });
}

criterion_group!(benches, factor_messages, detectors, turbo);
criterion_main!(benches);
