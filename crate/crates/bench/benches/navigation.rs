use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use navform::Field;
use navform_bench::reference_scenario;

fn navigation(c: &mut Criterion) {
    let s = reference_scenario();
    let q = s.initial_positions();
    let field = Field::new(&s.formation, s.obstacles.points(), &s.params);

    c.bench_function("evaluate_agent", |b| b.iter(|| field.evaluate(black_box(2), black_box(&q))));
    c.bench_function("phi_all_agents", |b| {
        b.iter(|| (0..q.len()).map(|i| field.phi(i, black_box(&q)).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, navigation);
criterion_main!(benches);
