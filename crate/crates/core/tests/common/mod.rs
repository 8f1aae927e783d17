//! Strategies and property checks shared by the property suite and the
//! acceptance runner.
#![allow(dead_code)]

use imbtrust::dataio::{
    gen_synthetic, stratified_split, stratified_split_indices, SplitSpec, SynthConfig,
};
use imbtrust::losses::{
    aucm_objective, pairwise_sq_hinge, pesg_dual_step, AucMarginState, LossKind,
};
use imbtrust::report::{evaluate, ReportContext};
use imbtrust::scorer::Architecture;
use imbtrust::training::{train, TrainConfig};
use imbtrust::trust::{qa_trust, TrustConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

/// Scores paired with labels that contain both classes.
pub fn scored_labels(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(0u8..=1, n),
            )
        })
        .prop_map(|(s, mut y)| {
            y[0] = 1;
            y[1] = 0;
            (s, y)
        })
}

/// Like [`scored_labels`] but scores on a coarse lattice so ties are common.
pub fn tied_scores(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    scored_labels(max_n).prop_map(|(s, y)| (s.iter().map(|v| v.round()).collect(), y))
}

pub fn pairwise_shift(s: &[f64], y: &[u8], c: f64) -> Check {
    let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
    let (a, _) = pairwise_sq_hinge(s, y, 1.0).unwrap();
    let (b, _) = pairwise_sq_hinge(&shifted, y, 1.0).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    Ok(())
}

pub fn aucm_shift(s: &[f64], y: &[u8], a: f64, b: f64, alpha: f64, c: f64) -> Check {
    let f0 = aucm_objective(s, y, &AucMarginState::at(a, b, alpha, 1.0)).unwrap();
    let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
    let f1 = aucm_objective(&shifted, y, &AucMarginState::at(a + c, b + c, alpha, 1.0)).unwrap();
    prop_assert!((f0 - f1).abs() <= 1e-9 * (1.0 + f0.abs()), "{f0} vs {f1}");
    Ok(())
}

pub fn alpha_stays_nonnegative(s: &[f64], y: &[u8], alpha: f64, lr: f64, steps: usize) -> Check {
    let mut st = AucMarginState::at(0.0, 0.0, alpha, 1.0);
    for _ in 0..steps {
        pesg_dual_step(s, y, &mut st, lr, lr).unwrap();
        prop_assert!(st.alpha_dual >= 0.0);
    }
    Ok(())
}

pub fn q_range(p: f64, z: u8, alpha: f64, beta: f64) -> Check {
    let r = qa_trust(0, p, z, &TrustConfig::new(alpha, beta).unwrap());
    prop_assert!((0.0..=1.0).contains(&r.qa_trust));
    if r.qa_trust == 1.0 {
        prop_assert!(r.pred == z && r.confidence == 1.0);
    }
    if r.qa_trust == 0.0 {
        prop_assert!(r.pred != z && r.confidence == 1.0);
    }
    Ok(())
}

pub fn q_monotone(p1: f64, p2: f64, z: u8) -> Check {
    let cfg = TrustConfig::default();
    let (r1, r2) = (qa_trust(0, p1, z, &cfg), qa_trust(1, p2, z, &cfg));
    if r1.pred != r2.pred || r1.confidence > r2.confidence {
        return Ok(());
    }
    if r1.pred == z {
        prop_assert!(r1.qa_trust <= r2.qa_trust);
    } else {
        prop_assert!(r1.qa_trust >= r2.qa_trust);
    }
    Ok(())
}

/// Both one-sided limits of Q at `p̂ = 0.5` equal 0.5, for either label.
pub fn q_continuous_at_half() -> Check {
    let cfg = TrustConfig::default();
    for z in [0u8, 1] {
        prop_assert_eq!(qa_trust(0, 0.5, z, &cfg).qa_trust, 0.5);
        for eps in [1e-6, 1e-9, 1e-12] {
            let below = qa_trust(0, 0.5 - eps, z, &cfg).qa_trust;
            let above = qa_trust(0, 0.5 + eps, z, &cfg).qa_trust;
            prop_assert!((below - 0.5).abs() <= 2.0 * eps, "z={} below={}", z, below);
            prop_assert!((above - 0.5).abs() <= 2.0 * eps, "z={} above={}", z, above);
        }
    }
    Ok(())
}

pub fn split_stratified(n_pos: usize, n_neg: usize, seed: u64) -> Check {
    let mut labels = vec![1u8; n_pos];
    labels.extend(std::iter::repeat_n(0u8, n_neg));
    let spec = SplitSpec {
        train_frac: 0.6,
        val_frac: 0.2,
        test_frac: 0.2,
        seed,
    };
    let Ok(idx) = stratified_split_indices(&labels, &spec) else {
        // a class too small for three splits is reported, never split badly
        for n in [n_pos, n_neg] {
            if spec.class_allocation(n).contains(&0) {
                return Ok(());
            }
        }
        return Err(TestCaseError::fail("split rejected a feasible allocation"));
    };
    let mut all: Vec<usize> = idx
        .train
        .iter()
        .chain(&idx.val)
        .chain(&idx.test)
        .copied()
        .collect();
    all.sort_unstable();
    prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
    let full = n_pos as f64 / labels.len() as f64;
    for part in [&idx.train, &idx.val, &idx.test] {
        prop_assert!(!part.is_empty());
        let frac = part.iter().filter(|&&i| labels[i] == 1).count() as f64 / part.len() as f64;
        prop_assert!((frac - full).abs() <= 1.0 / part.len() as f64 + 1e-12);
    }
    Ok(())
}

/// Generate, split, train and evaluate twice; the report JSON must match byte for byte.
pub fn end_to_end_deterministic(seed: u64, loss: LossKind) -> Check {
    let run = || {
        let ds = gen_synthetic(&SynthConfig {
            n_total: 200,
            imbalance_ratio: 4.0,
            dim: 3,
            class_separation: 1.5,
            seed,
        })
        .unwrap();
        let (tr, va, te) = stratified_split(
            &ds,
            &SplitSpec {
                seed,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            loss,
            epochs: 3,
            batch_size: 16,
            lr_primal: 0.05,
            lr_dual: 0.05,
            seed,
        };
        let arch = Architecture::Mlp {
            d: 3,
            hidden: vec![4],
        };
        let out = train(&tr, &va, &arch, &cfg).unwrap();
        let ctx = ReportContext {
            seed,
            train: Some(&tr),
            training: Some(&cfg),
            history: Some(&out.history),
        };
        evaluate(&out.best_model, &va, &te, &TrustConfig::default(), &ctx)
            .unwrap()
            .to_json()
            .unwrap()
    };
    prop_assert_eq!(run(), run());
    Ok(())
}

pub fn any_loss() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::Ce),
        Just(LossKind::Pairwise { margin: 1.0 }),
        Just(LossKind::Aucm { margin: 1.0 }),
    ]
}
