use proptest::prelude::*;

use tfmlab::scenarios::{
    agrees_to_sig_figs, check_lb2_construction, run_tightness, suite_rows, Metric, Realized,
    Scenario, Setting, Tag, Target,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lb2_probabilities_are_refinement_stable(cells in 50usize..3000) {
        let a = check_lb2_construction(cells);
        let b = check_lb2_construction(2 * cells);
        let pairs = [
            (a.pr_v1_below, b.pr_v1_below),
            (a.pr_v2_below, b.pr_v2_below),
            (a.win_probability_cap, b.win_probability_cap),
        ];
        for (x, y) in pairs {
            prop_assert!((x - y).abs() < 2.0 * a.grid_step, "{} vs {} at step {}", x, y, a.grid_step);
        }
        prop_assert!(a.step_a_holds && a.win_bound_holds && a.step_b_holds);
    }

    #[test]
    fn sig_fig_agreement_is_half_a_unit(value in 1e-4f64..1e3, offset in -0.49f64..0.49) {
        let unit = 10f64.powi(value.log10().floor() as i32 - 3);
        prop_assert!(agrees_to_sig_figs(value + offset * unit, value, 4));
        prop_assert!(!agrees_to_sig_figs(value + 0.51 * unit, value, 4));
        prop_assert!(!agrees_to_sig_figs(value - 0.51 * unit, value, 4));
    }

    #[test]
    fn tightness_is_reproducible(seed in any::<u64>()) {
        prop_assert_eq!(run_tightness(2000, seed), run_tightness(2000, seed));
    }
}

#[test]
fn every_row_carries_a_tag_and_tolerance() {
    let metrics = vec![Metric::new(
        "x",
        Tag::Derived,
        Target::Approx { value: 1.0, tolerance: 0.1 },
        Realized::Float(1.05),
    )];
    let s = Scenario {
        name: "probe".into(),
        structure: None,
        setting: Setting::Described { text: String::new() },
        tfm: None,
        strategies: String::new(),
        metrics,
    };
    let rows = suite_rows(&[s]);
    assert_eq!(rows[0].tag, Tag::Derived);
    assert_eq!(rows[0].tolerance, "0.1");
    assert!(rows[0].pass);
}
