use vmcis_bench::Fixture;

#[test]
fn fixture_batch_stays_in_the_starting_sector() {
    let fx = Fixture::heisenberg_4x4(4);
    let batch = fx.batch(64, 1.5);
    assert_eq!(batch.len(), 64);
    let n_up = batch.configs()[0].n_up();
    assert!(batch.configs().iter().all(|x| x.n_up() == n_up));
    assert!(batch.log_amps().iter().all(|l| l.re.is_finite()));
}
