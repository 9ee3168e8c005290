//! The built-in recipes, run end to end (with reduced grids where the
//! physics allows) and checked for the qualitative shapes they exist to
//! demonstrate.

use levopt::harness::{find_recipe, run_config, RunConfig, SweepOutcome};

/// Load a recipe and clamp every sweep to at most `max_points`.
fn run_recipe(name: &str, max_points: usize) -> Vec<SweepOutcome> {
    let recipe = find_recipe(name).expect("recipe exists");
    let mut cfg = RunConfig::from_toml_str(recipe.toml).unwrap();
    for sweep in &mut cfg.sweeps {
        sweep.points = sweep.points.min(max_points);
    }
    run_config(&cfg).unwrap()
}

fn s_curve(outcome: &SweepOutcome) -> Vec<f64> {
    outcome
        .rows
        .iter()
        .map(|r| r.s_db.expect("point evaluated"))
        .collect()
}

#[test]
fn reheat_sweep_decays_with_ensemble_bars_and_nonsecular_check() {
    let outcomes = run_recipe("reheat-sweep", 9);
    assert_eq!(outcomes.len(), 2);
    let (rwa, beyond) = (&outcomes[0], &outcomes[1]);
    assert!(!rwa.any_error() && !beyond.any_error());

    let s = s_curve(rwa);
    assert!(s[0] > 0.0, "no squeezing at the quiet end: {} dB", s[0]);
    for w in s.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "S rose with reheating: {w:?}");
    }
    for row in &rwa.rows {
        let std = row.std.expect("ensemble ran");
        assert!(std > 0.0, "degenerate ensemble at {}", row.value);
        assert!(row.mean.is_some());
    }

    // Without the secular approximation the quiet-end squeezing may only
    // come out slightly ahead at this sideband ratio.
    let s_beyond = s_curve(beyond);
    assert!(
        s_beyond[0] >= s[0] - 0.05,
        "non-secular curve fell behind: {} vs {}",
        s_beyond[0],
        s[0]
    );
}

#[test]
fn coupling_sweep_tracks_the_adiabatic_model_then_splits() {
    let outcomes = run_recipe("coupling-sweep", 7);
    assert_eq!(outcomes.len(), 2);
    let (dynamics, adiabatic) = (&outcomes[0], &outcomes[1]);
    assert!(!dynamics.any_error() && !adiabatic.any_error());

    let (d, a) = (s_curve(dynamics), s_curve(adiabatic));
    // Stronger drive squeezes more in both models.
    assert!(d.last().unwrap() > d.first().unwrap());
    assert!(a.last().unwrap() > a.first().unwrap());
    // Agreement at the weak end, growing separation toward the strong end.
    let gap_first = (d[0] - a[0]).abs();
    let gap_last = (d[d.len() - 1] - a[a.len() - 1]).abs();
    assert!(gap_first < 0.3, "weak-coupling gap {gap_first} dB");
    assert!(
        gap_last > gap_first,
        "no split at strong coupling: {gap_first} vs {gap_last}"
    );
}

#[test]
fn loss_budget_orders_efficiencies_and_bipartitions() {
    let outcomes = run_recipe("loss-budget", 7);
    assert_eq!(outcomes.len(), 3);
    let (pp80, pp40, pm80) = (&outcomes[0], &outcomes[1], &outcomes[2]);
    for o in [pp80, pp40, pm80] {
        assert!(!o.any_error(), "{} errored", o.name);
    }
    let (s_pp80, s_pp40, s_pm80) = (s_curve(pp80), s_curve(pp40), s_curve(pm80));
    // Reading the mechanics out optically can only lose correlations.
    for (pp, pm) in s_pp80.iter().zip(&s_pm80) {
        assert!(pp <= &(pm + 1e-9), "S_pp {pp} > S_pm {pm}");
    }
    // More detection loss, less squeezing, at the quiet end where both
    // states still squeeze.
    assert!(
        s_pp40[0] < s_pp80[0],
        "eta ordering broken: {} !< {}",
        s_pp40[0],
        s_pp80[0]
    );
    assert!(s_pp80[0] > 0.0, "all-optical squeezing lost: {}", s_pp80[0]);
}

#[test]
fn angle_scan_recipe_resolves_the_occupation_dependent_windows() {
    // Full grid: the hot window is a handful of millirad wide and must
    // stay resolved.
    let outcomes = run_recipe("angle-scan", usize::MAX);
    assert_eq!(outcomes.len(), 2);
    let (cold, hot) = (&outcomes[0], &outcomes[1]);
    assert!(!cold.any_error() && !hot.any_error());

    let count_positive = |o: &SweepOutcome| {
        o.rows
            .iter()
            .filter(|r| r.s_db.is_some_and(|s| s > 0.0))
            .count()
    };
    let peak = |o: &SweepOutcome| {
        o.rows
            .iter()
            .filter_map(|r| r.s_db)
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let (n_cold, n_hot) = (count_positive(cold), count_positive(hot));
    assert!(n_hot >= 1, "hot window unresolved");
    assert!(
        n_cold > n_hot,
        "window ordering broken: {n_cold} !> {n_hot} points"
    );
    assert!(
        (peak(cold) - peak(hot)).abs() < 0.1,
        "peaks differ: {} dB vs {} dB",
        peak(cold),
        peak(hot)
    );
}
