//! Property tests over randomized small scenarios and report batches.

use proptest::prelude::*;

mod common;

use common::props::{self, report, windows};
use common::{scenario, CASES};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn at_most_one_decision_per_vehicle_and_event(input in (scenario(), any::<u64>())) {
        props::at_most_one_decision_per_vehicle_and_event(input)?;
    }

    #[test]
    fn recorded_messages_stay_inside_the_policy_window(input in (scenario(), any::<u64>())) {
        props::recorded_messages_stay_inside_the_policy_window(input)?;
    }

    #[test]
    fn blacklisting_is_absorbing_in_runs(input in (scenario(), any::<u64>())) {
        props::blacklisting_is_absorbing_in_runs(input)?;
    }

    #[test]
    fn gt_stays_bounded_and_moves_with_the_scores(input in (0.01..0.6f64, windows(8))) {
        props::gt_stays_bounded_and_moves_with_the_scores(input)?;
    }

    #[test]
    fn superseded_initial_reports_have_no_effect(input in (proptest::collection::vec(report(), 1..30), any::<prop::sample::Index>(), any::<bool>())) {
        props::superseded_initial_reports_have_no_effect(input)?;
    }

    #[test]
    fn blacklist_is_absorbing_at_the_cdu(input in windows(10)) {
        props::blacklist_is_absorbing_at_the_cdu(input)?;
    }

    #[test]
    fn logs_are_byte_identical_for_a_seed(input in (scenario(), any::<u64>())) {
        props::logs_are_byte_identical_for_a_seed(input)?;
    }

    #[test]
    fn policy_does_not_touch_the_world(input in (scenario(), any::<u64>())) {
        props::policy_does_not_touch_the_world(input)?;
    }
}
