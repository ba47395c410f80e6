mod common;

use codeq::channel::{
    joint_error_distribution, occupancy_distribution, ChannelModel, BAD, GOOD,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn ge_channel() -> impl Strategy<Value = ChannelModel> {
    (0.001f64..0.999, 0.001f64..0.999, 0.0f64..0.3, 0.0f64..0.7)
        .prop_map(|(a, b, g, e)| ChannelModel::gilbert_elliott(a, b, g, e).unwrap())
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_rows_sum_to_one(model in ge_channel(), n in 1usize..80) {
        let joint = joint_error_distribution(&model, n).unwrap();
        for c in 0..2 {
            let total: f64 = joint.error_marginal(c).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(joint.error_marginal(c).iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn end_states_follow_matrix_power(model in ge_channel(), n in 1usize..60) {
        let joint = joint_error_distribution(&model, n).unwrap();
        let power = model.transition_matrix().pow(n as u32);
        prop_assert!((joint.end_state_matrix() - power).amax() < 1e-12);
    }

    #[test]
    fn chapman_kolmogorov(model in ge_channel(), n1 in 1usize..25, n2 in 1usize..25) {
        let j1 = joint_error_distribution(&model, n1).unwrap();
        let j2 = joint_error_distribution(&model, n2).unwrap();
        let j = joint_error_distribution(&model, n1 + n2).unwrap();
        for c in 0..2 {
            for f in 0..2 {
                for e in 0..=n1 + n2 {
                    let mut want = 0.0;
                    for d in 0..2 {
                        for e1 in e.saturating_sub(n2)..=e.min(n1) {
                            want += j1.prob(c, d, e1) * j2.prob(d, f, e - e1);
                        }
                    }
                    prop_assert!((j.prob(c, f, e) - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn equal_crossovers_give_binomial_errors(
        a in 0.01f64..0.99, b in 0.01f64..0.99, p in 0.0f64..0.5, n in 1usize..100,
    ) {
        let model = ChannelModel::gilbert_elliott(a, b, p, p).unwrap();
        let joint = joint_error_distribution(&model, n).unwrap();
        for c in 0..2 {
            for (e, v) in joint.error_marginal(c).iter().enumerate() {
                prop_assert!((v - binomial_pmf(n, e, p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn occupancy_mean_matches_visit_sum(model in ge_channel(), n in 1usize..60) {
        let occ = occupancy_distribution(&model, n).unwrap();
        let p = model.transition_matrix();
        let mut step = DMatrix::identity(2, 2);
        let mut expected = [0.0; 2];
        for _ in 0..n {
            for c in 0..2 {
                expected[c] += step[(c, GOOD)];
            }
            step = &step * &p;
        }
        for c in 0..2 {
            let mut mass = 0.0;
            let mut mean = 0.0;
            for d in 0..2 {
                for (k, v) in occ.visits(c, d).iter().enumerate() {
                    mass += v;
                    mean += k as f64 * v;
                }
                prop_assert!((occ.visits(c, d).iter().sum::<f64>() - step[(c, d)]).abs() < 1e-12);
            }
            prop_assert!((mass - 1.0).abs() < 1e-12);
            prop_assert!((mean - expected[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_is_invariant(model in ge_channel()) {
        let pi = model.stationary();
        let p = model.transition_matrix();
        for d in 0..2 {
            let next: f64 = (0..2).map(|c| pi[c] * p[(c, d)]).sum();
            prop_assert!((next - pi[d]).abs() < 1e-14);
        }
    }
}

#[test]
fn small_blocks_match_enumeration() {
    let model = ChannelModel::gilbert_elliott(0.3, 0.1, 0.02, 0.4).unwrap();
    let tables = common::enumerate_joint(&model, 8);
    for n in 1..=8 {
        let joint = joint_error_distribution(&model, n).unwrap();
        let occ = occupancy_distribution(&model, n).unwrap();
        let occ_ref = common::enumerate_occupancy(&model, n);
        for c in [BAD, GOOD] {
            for d in [BAD, GOOD] {
                for k in 0..=n {
                    assert!((joint.prob(c, d, k) - tables[n][c][d][k]).abs() < 1e-12);
                    assert!((occ.prob(c, d, k) - occ_ref[c][d][k]).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn bsc_joint_is_binomial_and_occupancy_unsupported() {
    let model = ChannelModel::bsc(0.1).unwrap();
    let joint = joint_error_distribution(&model, 30).unwrap();
    for e in 0..=30 {
        assert!((joint.prob(0, 0, e) - binomial_pmf(30, e, 0.1)).abs() < 1e-14);
    }
    assert!(occupancy_distribution(&model, 30).is_err());
}
