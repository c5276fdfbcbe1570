use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ferret_bench::{noise_batch, noise_image};
use ferret_core::model::{FerretConfig, FerretNet, FerretVariant};
use ferret_core::nn::{Conv2d, ConvSpec, Layer, Mode};
use ferret_core::{lpd_map, CenterStrategy, NeighborhoodSpec, Statistic};

fn lpd(c: &mut Criterion) {
    let image = noise_image(3, 256, 256, 1);
    let mut group = c.benchmark_group("lpd_map_256");
    group.throughput(Throughput::Elements(256 * 256));
    for n in [3, 5, 7] {
        for stat in [Statistic::Median, Statistic::Avg] {
            let spec = NeighborhoodSpec::new(n, CenterStrategy::Mask, stat).unwrap();
            group.bench_with_input(BenchmarkId::from_parameter(&spec), &spec, |b, spec| {
                b.iter(|| lpd_map(&image, spec).unwrap())
            });
        }
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = noise_batch(4, 96, 64, 64, 2);
    let cases = [
        ("dense3x3", ConvSpec::new(96, 96, 3).padding(1)),
        ("pointwise", ConvSpec::new(96, 96, 1)),
        ("depthwise_dilated", ConvSpec::depthwise(96, 3).dilation(2).padding(2)),
    ];
    let mut group = c.benchmark_group("conv2d_4x96x64x64");
    for (name, spec) in cases {
        let mut layer = Conv2d::<f32>::new(name, spec, false, &mut rng).unwrap();
        group.bench_function(format!("{name}/forward"), |b| b.iter(|| layer.infer(&x).unwrap()));
        let y = layer.forward(&x, Mode::Train).unwrap();
        group.bench_function(format!("{name}/backward"), |b| {
            b.iter(|| {
                layer.forward(&x, Mode::Train).unwrap();
                layer.backward(&y).unwrap()
            })
        });
    }
    group.finish();
}

fn ferretnet(c: &mut Criterion) {
    let mut group = c.benchmark_group("ferretnet_infer");
    group.sample_size(10);
    for (label, variant, side) in [("s", FerretVariant::small(), 128), ("b", FerretVariant::base(), 256)] {
        let model = FerretNet::<f32>::new(FerretConfig::new(variant), 0).unwrap();
        let x = noise_batch(4, 3, side, side, 3);
        group.throughput(Throughput::Elements(4));
        group.bench_function(format!("{label}/4x{side}"), |b| b.iter(|| model.infer(&x).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, lpd, conv, ferretnet);
criterion_main!(benches);
