use codeq::channel::ChannelModel;
use codeq::coding::{
    bch_failure, bch_undetected_weights, bsc_random_failure, bsc_random_undetected,
    gec_ball_volume, profile, CodeSpec, Scheme, WeightModel, WeightTable,
};
use codeq::math::LogFactorials;
use proptest::prelude::*;

// All codewords of the cyclic code generated by `g` (bit i = coefficient of x^i).
fn cyclic_codewords(n: usize, k: usize, g: u32) -> Vec<u32> {
    (0u32..1 << k)
        .map(|msg| {
            let mut word = 0u32;
            for i in 0..k {
                if msg >> i & 1 == 1 {
                    word ^= g << i;
                }
            }
            debug_assert!(word < 1 << n);
            word
        })
        .collect()
}

fn weight_table(n: usize, words: &[u32]) -> String {
    let mut counts = vec![0u32; n + 1];
    for w in words {
        counts[w.count_ones() as usize] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(l, c)| format!("{l} {c}\n"))
        .collect()
}

// Fraction of weight-e error patterns within distance `radius` of a
// nonzero codeword.
fn coset_fractions(n: usize, words: &[u32], radius: u32) -> Vec<f64> {
    let mut hits = vec![0u64; n + 1];
    let mut totals = vec![0u64; n + 1];
    for pattern in 0u32..1 << n {
        let e = pattern.count_ones() as usize;
        totals[e] += 1;
        if words.iter().any(|&c| c != 0 && (c ^ pattern).count_ones() <= radius) {
            hits[e] += 1;
        }
    }
    hits.iter().zip(&totals).map(|(h, t)| *h as f64 / *t as f64).collect()
}

fn check_exact_weights(n: usize, k: usize, g: u32, t: usize) {
    let words = cyclic_codewords(n, k, g);
    let table = WeightTable::parse(&weight_table(n, &words), n).unwrap();
    for nu in 0..=t {
        let code = CodeSpec::bch(n, k, nu).unwrap();
        let got = bch_undetected_weights(&code, &WeightModel::Table(table.clone())).unwrap();
        let want = coset_fractions(n, &words, (t - nu) as u32);
        for e in 0..=n {
            // Patterns inside the correction sphere plus margin are never
            // counted as undetected.
            let want = if e <= t + nu { 0.0 } else { want[e] };
            assert!((got[e] - want).abs() < 1e-12, "({n},{k}) nu={nu} e={e}: {} vs {want}", got[e]);
        }
    }
}

#[test]
fn hamming_7_4_undetected_weights_match_cosets() {
    check_exact_weights(7, 4, 0b1011, 1);
}

#[test]
fn bch_15_7_undetected_weights_match_cosets() {
    check_exact_weights(15, 7, 0b1_1101_0001, 2);
}

#[test]
fn bch_15_7_weight_enumerator() {
    let words = cyclic_codewords(15, 7, 0b1_1101_0001);
    let table = WeightTable::parse(&weight_table(15, &words), 15).unwrap();
    let mut want = vec![0.0; 16];
    for (l, a) in [(0, 1.0), (5, 18.0), (6, 30.0), (7, 15.0), (8, 15.0), (9, 30.0), (10, 18.0), (15, 1.0)] {
        want[l] = a;
    }
    assert_eq!(table.counts, want);
}

#[test]
fn weight_table_rejects_bad_lines() {
    assert!(WeightTable::parse("0 1\n3 seven\n", 7).is_err());
    assert!(WeightTable::parse("9 1\n", 7).is_err());
    assert!(WeightTable::parse("1 2 3\n", 7).is_err());
    let t = WeightTable::parse("# comment\n0 1 # zero word\n\n7 1\n", 7).unwrap();
    assert_eq!(t.counts[0], 1.0);
    assert_eq!(t.counts[7], 1.0);
}

#[test]
fn bch_failure_is_a_step_at_the_reduced_radius() {
    let code = CodeSpec::bch(63, 36, 2).unwrap();
    for e in 0..=63 {
        assert_eq!(bch_failure(&code, e).unwrap(), if e > 3 { 1.0 } else { 0.0 });
    }
}

#[test]
fn exact_mode_requires_a_table() {
    assert!(WeightModel::exact(None).is_err());
}

fn ln_binomial_sum(n: usize, d: usize) -> f64 {
    let table = LogFactorials::new(n);
    let terms: Vec<f64> = (0..=d.min(n)).map(|j| table.ln_choose(n, j)).collect();
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_weight_volume_is_vandermonde(n_g in 0usize..150, n_b in 0usize..150, frac in 0.0f64..1.0) {
        let d = (frac * (n_g + n_b) as f64).floor() as usize;
        let got = gec_ball_volume(n_g, n_b, d as f64, 1.0);
        prop_assert!((got - ln_binomial_sum(n_g + n_b, d)).abs() < 1e-10);
    }

    #[test]
    fn weighted_volume_grows_with_radius(n_g in 1usize..80, n_b in 1usize..80, gamma in 0.1f64..5.0, d in 0.0f64..40.0) {
        prop_assert!(gec_ball_volume(n_g, n_b, d, gamma) <= gec_ball_volume(n_g, n_b, d + 0.5, gamma) + 1e-12);
    }

    #[test]
    fn bsc_terms_are_ordered(n in 10usize..200, rate in 0.05f64..0.9, nu in 0usize..4) {
        // Above K = 50 the union-bound branch below q = 2^-60 can exceed the
        // exact value just above it, so monotonicity in e is only checked here.
        let k = ((rate * n as f64) as usize).clamp(1, 50);
        let code = CodeSpec::random(Scheme::RandomMl, n, k, nu).unwrap();
        let mut prev = 0.0;
        for e in 0..=n {
            let f = bsc_random_failure(&code, e);
            let u = bsc_random_undetected(&code, e);
            prop_assert!(f >= prev - 1e-15);
            prop_assert!(u <= f + 1e-15);
            prop_assert!((0.0..=1.0).contains(&f) && (0.0..=1.0).contains(&u));
            prev = f;
        }
    }

    #[test]
    fn profiles_are_ordered(
        a in 0.01f64..0.9, b in 0.01f64..0.9, g in 0.0f64..0.05, e in 0.1f64..0.5,
        pick in 0usize..4,
    ) {
        let model = ChannelModel::gilbert_elliott(a, b, g, e).unwrap();
        let code = match pick {
            0 => CodeSpec::bch(63, 36, 1),
            1 => CodeSpec::bch(31, 16, 0),
            2 => CodeSpec::random(Scheme::RandomMl, 40, 15, 1),
            _ => CodeSpec::random(Scheme::RandomMd, 40, 15, 2),
        }.unwrap();
        let p = profile(&model, &code, &WeightModel::Approximate).unwrap();
        for c in 0..2 {
            for d in 0..2 {
                prop_assert!(p.cond_undetected[(c, d)] <= p.cond_failure[(c, d)] + 1e-12);
                prop_assert!(p.cond_failure[(c, d)] <= p.end_state[(c, d)] + 1e-12);
            }
        }
        prop_assert!(p.avg_undetected <= p.avg_failure + 1e-12);
    }
}

#[test]
fn approximate_and_binomial_like_weights_agree_in_scale() {
    let model = ChannelModel::gilbert_elliott(0.3938, 0.0202, 0.0097, 0.3713).unwrap();
    let code = CodeSpec::bch(63, 36, 1).unwrap();
    let approx = profile(&model, &code, &WeightModel::Approximate).unwrap().avg_undetected;
    let exact = profile(&model, &code, &WeightModel::BinomialLike).unwrap().avg_undetected;
    assert!(exact > 0.0 && (exact / approx).ln().abs() < 1.0, "{approx} vs {exact}");
}
