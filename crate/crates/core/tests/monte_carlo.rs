use twrn::optimizer::{optimal_rate, McBudget, MetricSource, Objective, RateGrid, Spacing, SweepSpec};
use twrn::simulator::{run_replications, SimOptions, StderrMethod};
use twrn::{Mode, NetworkConfig};

#[test]
fn mc_and_analytic_optimal_rates_agree() {
    let cfg = NetworkConfig::reference(10.0);
    let grid = RateGrid::new(0.05, 12.0, 60, Spacing::Log).unwrap();
    let step_at = |r: f64| {
        let rates = grid.rates();
        let i = rates.iter().position(|&g| g >= r).unwrap().clamp(1, rates.len() - 1);
        rates[i] - rates[i - 1]
    };
    let analytic = SweepSpec::analytic(Mode::Af, grid.clone(), vec![]);
    let mc = SweepSpec {
        source: MetricSource::MonteCarlo(McBudget {
            per_rep: 1_000_000,
            reps: 1,
            seed: 42,
            workers: None,
        }),
        refine_tol: 1e-3,
        ..analytic.clone()
    };
    let a = &optimal_rate(&cfg, &analytic, Objective::MaxGoodput).unwrap()[0];
    let m = &optimal_rate(&cfg, &mc, Objective::MaxGoodput).unwrap()[0];
    assert!((a.rate - m.rate).abs() <= step_at(a.rate), "{} vs {}", a.rate, m.rate);
}

#[test]
fn replication_and_batch_errors_are_consistent() {
    let cfg = NetworkConfig::reference(10.0);
    let opts = SimOptions::default();
    let reps = run_replications(&cfg, Mode::Df, 4.0, 100_000, 16, 7, &opts).unwrap();
    let single = run_replications(&cfg, Mode::Df, 4.0, 1_600_000, 1, 7, &opts).unwrap();
    assert_eq!(reps.stderr_method, StderrMethod::BetweenReplication);
    assert_eq!(single.stderr_method, StderrMethod::BatchMeans);
    // With 16 replications the SE estimate itself has ~18% relative spread.
    for (r, s) in [
        (reps.empirical_goodput.stderr, single.empirical_goodput.stderr),
        (reps.empirical_eb.stderr, single.empirical_eb.stderr),
    ] {
        let ratio = r / s;
        assert!((0.5..2.0).contains(&ratio), "{ratio}");
    }
}
