use proptest::prelude::*;

use swapprune::analytics::{decoding_flops, decoding_flops_summed, prefill_flops, CostParams};
use swapprune::detect::count_rvis_events;
use swapprune::engine::{run_batch, EngineConfig, RunSpec};
use swapprune::kernel::{cosine_similarity, farthest_point_select, shannon_entropy, softmax, top_k, AttentionWeights, Embedding};
use swapprune::prefill::{attention_topk_prune, PruneState};
use swapprune::scenario::{ScenarioConfig, VisualTokenBank};
use swapprune::swap::{reevaluate_importance, select_new_set, union_swap, ImportanceMode};
use swapprune::trace::{read_jsonl, to_jsonl_string};

/// Strict local minima below `tau`, found by scanning outward from every index.
pub fn brute_force_minima(s: &[f64], tau: f64) -> Vec<usize> {
    let n = s.len();
    let mut out = Vec::new();
    for i in 0..n {
        let v = s[i];
        if v >= tau {
            continue;
        }
        // only the first index of a plateau can be reported
        if i > 0 && s[i - 1] == v {
            continue;
        }
        let mut j = i;
        while j + 1 < n && s[j + 1] == v {
            j += 1;
        }
        if i == 0 && j == n - 1 {
            continue;
        }
        let left = i == 0 || s[i - 1] > v;
        let right = j == n - 1 || s[j + 1] > v;
        if left && right {
            out.push(i);
        }
    }
    out
}

fn bank_from(rows: &[Vec<f64>]) -> Option<VisualTokenBank> {
    let emb: Vec<Embedding> = rows.iter().map(|r| Embedding::new(r.clone()).ok()).collect::<Option<_>>()?;
    VisualTokenBank::from_raw(emb).ok()
}

fn rows(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
        .prop_filter("non-zero rows", |rs| rs.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-6))
}

// quantized values make plateaus and ties common
fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..8).prop_map(|x| x as f64 / 8.0), 1..30)
}

proptest! {
    #[test]
    fn softmax_shift_invariant_and_normalized(
        logits in prop::collection::vec(-30.0f64..30.0, 1..50),
        c in -100.0f64..100.0,
    ) {
        let a = softmax(&logits).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
        let b = softmax(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(a.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn cosine_symmetric_scale_invariant_bounded(
        a in prop::collection::vec(0.0f64..10.0, 2..20),
        b in prop::collection::vec(0.0f64..10.0, 20),
        scale in 0.01f64..100.0,
    ) {
        let b = &b[..a.len()];
        prop_assume!(a.iter().any(|&x| x > 1e-3) && b.iter().any(|&x| x > 1e-3));
        let ab = cosine_similarity(&a, b).unwrap();
        let ba = cosine_similarity(b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
        prop_assert!((cosine_similarity(&scaled, b).unwrap() - ab).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn top_k_matches_sort(values in prop::collection::vec((0u8..20).prop_map(f64::from), 1..40), k in 1usize..40) {
        let k = k.min(values.len());
        let got = top_k(&values, k).unwrap();
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap().then(i.cmp(&j)));
        let mut want = order[..k].to_vec();
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn entropy_bounds(logits in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let w = AttentionWeights::softmax(&logits, (0..logits.len()).collect()).unwrap();
        let h = shannon_entropy(&w);
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (logits.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn rvis_counter_matches_brute_force(s in series(), tau in 0.0f64..1.1) {
        let got: Vec<usize> = count_rvis_events(&s, tau).unwrap().iter().map(|e| e.step).collect();
        prop_assert_eq!(got, brute_force_minima(&s, tau));
    }

    #[test]
    fn rvis_events_grow_with_tau(s in series(), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let lo: Vec<usize> = count_rvis_events(&s, t1).unwrap().iter().map(|e| e.step).collect();
        let hi: Vec<usize> = count_rvis_events(&s, t1 + dt).unwrap().iter().map(|e| e.step).collect();
        prop_assert!(lo.iter().all(|i| hi.contains(i)));
    }

    #[test]
    fn monotone_series_has_at_most_one_event(mut s in prop::collection::vec(0.0f64..1.0, 1..30), up in any::<bool>()) {
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if !up {
            s.reverse();
        }
        prop_assert!(count_rvis_events(&s, 2.0).unwrap().len() <= 1);
    }

    #[test]
    fn partition_and_union_bound(
        rs in rows(4..=24, 5),
        q in prop::collection::vec(-3.0f64..3.0, 5),
        k in 1usize..24,
        k_dec in 1usize..24,
    ) {
        let Some(bank) = bank_from(&rs) else { return Ok(()); };
        let n = bank.len();
        let k = k.min(n);
        let k_dec = k_dec.min(k);
        let q = Embedding::new(q).unwrap();
        let state = attention_topk_prune(&bank, &q, k).unwrap();

        let mut all: Vec<usize> = state.pruned().iter().chain(state.reserved()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(state.pruned().iter().all(|i| state.reserved().binary_search(i).is_err()));

        for mode in [ImportanceMode::Joint, ImportanceMode::Concat] {
            let imp = reevaluate_importance(&q, &state, &bank, mode).unwrap();
            let new = select_new_set(&imp, k_dec).unwrap();
            let active = union_swap(&state, &new).unwrap();
            prop_assert!(active.k_star() >= k && active.k_star() <= k + k_dec && active.k_star() <= 2 * k);
            prop_assert!(state.pruned().iter().all(|&i| active.contains(i)));
        }
    }

    #[test]
    fn joint_importance_is_full_softmax(rs in rows(2..=20, 6), q in prop::collection::vec(-4.0f64..4.0, 6), k in 1usize..20) {
        let Some(bank) = bank_from(&rs) else { return Ok(()); };
        let k = k.min(bank.len());
        let q = Embedding::new(q).unwrap();
        let state = attention_topk_prune(&bank, &q, k).unwrap();
        let imp = reevaluate_importance(&q, &state, &bank, ImportanceMode::Joint).unwrap();

        let d = 6f64.sqrt();
        let logits: Vec<f64> = bank.keys().iter().map(|key| q.as_slice().iter().zip(key.as_slice()).map(|(a, b)| a * b).sum::<f64>() / d).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for (id, w) in imp.index_map().iter().zip(imp.weights()) {
            prop_assert!((w - (logits[*id] - m).exp() / z).abs() <= 1e-12);
        }
        prop_assert_eq!(imp.len(), bank.len());
    }

    #[test]
    fn concat_importance_keeps_within_group_order(rs in rows(3..=20, 4), q in prop::collection::vec(-4.0f64..4.0, 4), k in 1usize..19) {
        let Some(bank) = bank_from(&rs) else { return Ok(()); };
        let k = k.min(bank.len() - 1);
        let q = Embedding::new(q).unwrap();
        let state = attention_topk_prune(&bank, &q, k).unwrap();
        let imp = reevaluate_importance(&q, &state, &bank, ImportanceMode::Concat).unwrap();
        let logits = bank.logits(&q, &bank.all_ids()).unwrap();
        let w = imp.weights();
        let ids = imp.index_map();
        prop_assert!((w[..k].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((w[k..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for group in [0..k, k..ids.len()] {
            for a in group.clone() {
                for b in group.clone() {
                    if logits[ids[a]] > logits[ids[b]] {
                        prop_assert!(w[a] >= w[b]);
                    }
                }
            }
        }
    }

    #[test]
    fn flops_loop_equals_closed_form_and_grows(
        l in 1u64..64, d in 1u64..4096, m in 1u64..16384, n in 0u64..4096, o in 0u64..300,
    ) {
        let p = CostParams { layers: l, hidden: d, intermediate: m, input_tokens: n, generated: o };
        prop_assert_eq!(decoding_flops(&p), decoding_flops_summed(&p));
        if n > 0 {
            let base = prefill_flops(&p);
            let bumped = [
                CostParams { input_tokens: n + 1, ..p },
                CostParams { hidden: d + 1, ..p },
                CostParams { intermediate: m + 1, ..p },
                CostParams { layers: l + 1, ..p },
            ];
            for b in bumped {
                prop_assert!(prefill_flops(&b) > base);
            }
        }
    }
}

#[test]
fn farthest_point_is_within_half_of_random_subsets() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let min_dist = |e: &[Embedding], ids: &[usize]| {
        let mut best = f64::INFINITY;
        for (x, &i) in ids.iter().enumerate() {
            for &j in &ids[x + 1..] {
                best = best.min(1.0 - cosine_similarity(e[i].as_slice(), e[j].as_slice()).unwrap());
            }
        }
        best
    };
    for _ in 0..10 {
        let emb: Vec<Embedding> = (0..30)
            .map(|_| Embedding::new((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let k = 5;
        let greedy = min_dist(&emb, &farthest_point_select(&emb, k).unwrap());
        for _ in 0..100 {
            let subset = rand::seq::index::sample(&mut rng, emb.len(), k).into_vec();
            assert!(greedy >= 0.5 * min_dist(&emb, &subset) - 1e-12);
        }
    }
}

#[test]
fn traces_are_identical_across_worker_counts_and_round_trip() {
    let specs = vec![
        RunSpec::pruned("a", ScenarioConfig { steps: 50, ..ScenarioConfig::with_episodes("e", &[(10, 6), (30, 3)]) }, EngineConfig::default())
            .with_attention(),
        RunSpec::vanilla("v", ScenarioConfig { steps: 50, ..ScenarioConfig::static_default() }),
    ];
    let seeds: Vec<u64> = (0..6).collect();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_batch(&specs, &seeds)).unwrap();
    let b = four.install(|| run_batch(&specs, &seeds)).unwrap();
    for (x, y) in a.traces.iter().zip(&b.traces) {
        let sx = to_jsonl_string(x).unwrap();
        assert_eq!(sx, to_jsonl_string(y).unwrap());
        assert_eq!(&read_jsonl(sx.as_bytes(), std::path::Path::new("mem")).unwrap(), x);
    }
}

#[test]
fn prune_state_rejects_bad_selection() {
    let bank = bank_from(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let q = Embedding::new(vec![1.0, 0.0]).unwrap();
    assert!(PruneState::from_selection(&bank, &q, vec![0, 0]).is_err());
    assert!(PruneState::from_selection(&bank, &q, vec![3]).is_err());
    assert!(PruneState::from_selection(&bank, &q, vec![]).is_err());
}
