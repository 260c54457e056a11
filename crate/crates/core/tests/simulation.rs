use netlqg::model::{validate, ChannelSpec, ExperimentConfig, SystemParams, ValidatedConfig};
use netlqg::presets::Preset;
use netlqg::riccati;
use netlqg::sim::{self, monte_carlo, Sweep, SweepRecord};

fn cfg(c: ExperimentConfig) -> ValidatedConfig {
    validate(c).unwrap()
}

fn mean_se(r: &SweepRecord) -> (f64, f64) {
    (r.sim_cost_mean.unwrap(), r.sim_cost_stderr.unwrap())
}

fn assert_dominates_bound(s: &Sweep) {
    for r in &s.records {
        if let (Some(m), Some(se), Some(b)) = (r.sim_cost_mean, r.sim_cost_stderr, r.bound_cost) {
            assert!(m + 3.0 * se >= b, "{r:?}");
        }
    }
}

#[test]
fn perfect_channel_recovers_b_min_in_both_modes() {
    for params in [
        SystemParams::fully_observed(2.0),
        SystemParams::partially_observed(2.0, 1.0),
    ] {
        let c = cfg(ExperimentConfig {
            params,
            ..ExperimentConfig::default()
        });
        let s = monte_carlo(&c).unwrap();
        let b = riccati::b_min(&params).unwrap();
        assert!((s.mean - b).abs() <= 3.0 * s.stderr, "{s:?} vs {b}");
        assert!(s.stderr < 0.02 * s.mean);
        assert_eq!(s.diverged_fraction, 0.0);
        assert_eq!(s.entropy_bits, None);
    }
}

#[test]
fn burn_in_doubling_is_immaterial() {
    let base = ExperimentConfig::default();
    let one = monte_carlo(&cfg(base.clone())).unwrap();
    let two = monte_carlo(&cfg(ExperimentConfig {
        burn_in: base.burn_in * 2,
        ..base
    }))
    .unwrap();
    assert!((one.mean - two.mean).abs() < one.stderr, "{one:?} {two:?}");
}

#[test]
fn awgn_simulation_tracks_computed_cost() {
    let c = cfg(ExperimentConfig {
        channel: ChannelSpec::awgn(5.0),
        ..ExperimentConfig::default()
    });
    let s = sim::snr_sweep(&c, &[5.0, 10.0, 20.0, 50.0]).unwrap();
    for r in &s.records {
        let (m, se) = mean_se(r);
        let j = r.computed_cost.unwrap();
        assert!((m - j).abs() <= (3.0 * se).max(0.05 * j), "{r:?}");
    }
    assert_dominates_bound(&s);
}

#[test]
fn awgn_limits() {
    let c = cfg(ExperimentConfig {
        channel: ChannelSpec::awgn(5.0),
        ..ExperimentConfig::default()
    });
    let b = riccati::b_min(&c.params).unwrap();
    let s = sim::snr_sweep(&c, &[1e9, 3.1]).unwrap();
    let (m, se) = mean_se(&s.records[0]);
    assert!((m - b).abs() <= 3.0 * se);
    assert!((s.records[0].bound_cost.unwrap() - b).abs() < 1e-3);
    assert_eq!(s.records[1].diverged_fraction, 0.0);

    let short = cfg(ExperimentConfig {
        channel: ChannelSpec::awgn(3.0),
        horizon: 10_000,
        burn_in: 1_000,
        trials: 50,
        ..ExperimentConfig::default()
    });
    let s = sim::snr_sweep(&short, &[3.0]).unwrap();
    assert!(s.records[0].fully_diverged());
    assert_eq!(s.records[0].diverged_fraction, 1.0);
    assert!(s.all_diverged());
    assert!(s.records[0].bound_cost.is_none());
}

#[test]
fn fine_quantization_reaches_b_min() {
    let c = cfg(Preset::Fig3.config());
    let s = sim::rate_sweep(&c, &[1e-3]).unwrap();
    let r = &s.records[0];
    let b = riccati::b_min(&c.params).unwrap();
    assert!((r.sim_cost_mean.unwrap() - b).abs() <= 0.02 * b, "{r:?}");
    assert!(r.info_bits > 8.0);
    assert!(r.computed_cost.is_none());
}

#[test]
fn coarse_quantization_costs_more_but_keeps_above_data_rate() {
    // An unbounded lattice is never silent: once |y| passes half a step the
    // controller sees it. The loop holds at a huge cost and the measured
    // entropy stays above log2|A| = 1 bit, as any stabilizing code must.
    let c = cfg(Preset::Fig3.config());
    let s = sim::rate_sweep(&c, &[1e3]).unwrap();
    let r = &s.records[0];
    let b = riccati::b_min(&c.params).unwrap();
    assert_eq!(r.diverged_fraction, 0.0);
    assert!(r.info_bits > 1.0);
    assert!(r.sim_cost_mean.unwrap() > 1e3 * b);
    assert!(r.sim_cost_mean.unwrap() >= r.bound_cost.unwrap());
}

#[test]
fn cost_falls_as_step_shrinks() {
    let c = cfg(Preset::Fig3.config());
    let s = sim::rate_sweep(&c, &[1.0, 0.5, 0.1, 0.01]).unwrap();
    for w in s.records.windows(2) {
        let (m0, se0) = mean_se(&w[0]);
        let (m1, se1) = mean_se(&w[1]);
        assert!(m1 <= m0 + 3.0 * (se0 + se1), "{:?}", w);
        assert!(w[1].info_bits > w[0].info_bits);
    }
}

#[test]
fn quantized_points_sit_on_or_above_bound() {
    for preset in [Preset::Fig3, Preset::Fig4] {
        let c = cfg(preset.config());
        let s = sim::rate_sweep(&c, &preset.grid()).unwrap();
        assert_dominates_bound(&s);
        let b = riccati::b_min(&c.params).unwrap();
        let last = s.records.last().unwrap();
        assert!(
            (last.sim_cost_mean.unwrap() - b).abs() <= 0.02 * b,
            "{preset}: {last:?}"
        );

        let h = |step: f64| {
            s.records
                .iter()
                .find(|r| r.control_var == step)
                .unwrap()
                .info_bits
        };
        let halving = h(0.25) - h(0.5);
        let per_decade = (h(0.01) - h(0.1)) / 10f64.log2();
        assert!((0.9..=1.1).contains(&halving), "{preset}: {halving}");
        assert!((0.9..=1.1).contains(&per_decade), "{preset}: {per_decade}");
    }
}

#[test]
fn sweeps_are_identical_across_thread_counts() {
    let c = cfg(ExperimentConfig {
        horizon: 20_000,
        burn_in: 2_000,
        trials: 8,
        ..Preset::Fig5.config()
    });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sim::uncertain_a_sweep(&c, &[0.5, 0.1]).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn zero_spread_matches_fixed_gain_sweep_bitwise() {
    let mut fixed = Preset::Fig3.config();
    fixed.trials = 6;
    let mut random = fixed.clone();
    random.uncertain_a = netlqg::model::UncertainA::gaussian(2.0, 0.0);
    let grid = [1.0, 0.1];
    let a = sim::rate_sweep(&cfg(fixed), &grid).unwrap();
    let b = sim::uncertain_a_sweep(&cfg(random), &grid).unwrap();
    assert_eq!(a.records, b.records);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(
            x.sim_cost_mean.unwrap().to_bits(),
            y.sim_cost_mean.unwrap().to_bits()
        );
        assert_eq!(x.info_bits.to_bits(), y.info_bits.to_bits());
    }
    assert!(b.warnings[0].contains("reference"));
}

#[test]
fn random_gain_costs_more_with_paired_seeds() {
    let spread = cfg(Preset::Fig5.config());
    let mut flat = Preset::Fig5.config();
    flat.uncertain_a.spread = 0.0;
    let r1 = &sim::uncertain_a_sweep(&spread, &[0.1]).unwrap().records[0];
    let r0 = &sim::uncertain_a_sweep(&cfg(flat), &[0.1]).unwrap().records[0];
    let (m1, se1) = mean_se(r1);
    let (m0, se0) = mean_se(r0);
    assert!(m1 + 3.0 * se1 >= m0 - 3.0 * se0);
    assert!(m1 > m0, "{m1} vs {m0}");
}

/// Finds a uniform step whose measured entropy is within 0.1 bit of
/// `target` by secant steps on log2(step).
fn uniform_at_entropy(base: &ExperimentConfig, target: f64) -> SweepRecord {
    let mut c = base.clone();
    let mut step = 0.3;
    for _ in 0..8 {
        c.channel = ChannelSpec::uniform(step);
        let r = sim::uncertain_a_sweep(&cfg(c.clone()), &[step])
            .unwrap()
            .records
            .remove(0);
        if (r.info_bits - target).abs() <= 0.05 {
            return r;
        }
        step *= 2f64.powf(r.info_bits - target);
    }
    panic!("no uniform step within 0.05 bit of {target}");
}

#[test]
fn lloyd_max_no_worse_than_uniform_at_matched_entropy() {
    let mut c = Preset::Fig5.config();
    c.channel = ChannelSpec::lloyd_max(16);
    let lm = sim::uncertain_a_sweep(&cfg(c.clone()), &[16.0])
        .unwrap()
        .records
        .remove(0);
    assert_eq!(lm.diverged_fraction, 0.0);
    let uni = uniform_at_entropy(&c, lm.info_bits);
    assert!((uni.info_bits - lm.info_bits).abs() <= 0.1);
    let (ml, sl) = mean_se(&lm);
    let (mu, su) = mean_se(&uni);
    assert!(
        ml <= mu + 3.0 * (sl * sl + su * su).sqrt(),
        "{lm:?} vs {uni:?}"
    );
}

#[test]
fn laplace_awgn_preset_shape() {
    let c = cfg(Preset::Fig2.config());
    let s = sim::snr_sweep(&c, &Preset::Fig2.grid()).unwrap();
    assert_dominates_bound(&s);
    for w in s.records.windows(2) {
        assert!(mean_se(&w[1]).0 <= mean_se(&w[0]).0);
    }
    for r in s.records.iter().filter(|r| r.control_var >= 5.0) {
        let j = r.computed_cost.unwrap();
        assert!((mean_se(r).0 - j).abs() <= 0.05 * j, "{r:?}");
    }
}
