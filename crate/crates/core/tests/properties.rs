mod common;

use common::*;
use cpes::harness::{ci95_half_width, selection_recall};
use cpes::scorer::{query_scores, HeadParams, OptimizerConfig};
use cpes::selection::similarity_sequence;
use cpes::{
    episode_loss_and_grads, evaluate, export_masks, generate_synthetic, optimizer_step, read_store,
    represent, sample_episode, score_matrix, select_top, sweep_distance, sweep_m, train, write_store,
    DistanceKind, EmbeddingRecord, EmbeddingStore, MlpHead, Rng64, RunConfig, SyntheticConfig,
};
use proptest::prelude::*;

fn cos(u: &[f64], v: &[f64]) -> f64 {
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    d / (nu * nv)
}

#[test]
fn synthetic_class_embedding_leans_toward_signal() {
    let store = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let gt = store.ground_truth().unwrap();
    let (mut sig, mut dis) = (Vec::new(), Vec::new());
    for (r, truth) in store.records().iter().zip(gt) {
        for (i, p) in r.patches().enumerate() {
            let c = cos(&r.class_embedding, p);
            if truth.contains(&(i as u16)) {
                sig.push(c);
            } else {
                dis.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&sig) - 0.511_239_796_935_359).abs() < 1e-12);
    assert!((mean(&dis) - 0.37136823256591206).abs() < 1e-12);
}

#[test]
fn head_forward_matches_oracle() {
    // all-ones input, unit weights and zero biases: relu(sum x) summed once
    let mut params = HeadParams::zeros(4, 1);
    params.w1.as_mut_slice().fill(0.25);
    params.w2[0] = 1.0;
    let head = MlpHead::from_params(params);
    let x = [1.0; 4];
    assert_eq!(head.forward_flat(&x).unwrap(), 1.0);
    assert_eq!(oracle_forward(&head, &x), 1.0);

    let head = MlpHead::new(9, 16, 3);
    let mut rng = Rng64::new(8);
    for _ in 0..50 {
        let x: Vec<f64> = (0..9).map(|_| rng.next_f64()).collect();
        let (a, b) = (head.forward_flat(&x).unwrap(), oracle_forward(&head, &x));
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn score_matrix_matches_brute_force() {
    let (_, store) = trend_stores();
    for (i, pair) in store.records().windows(2).take(40).enumerate() {
        let m = i % 6;
        let q = represent(&pair[0], DistanceKind::Cos, m).unwrap();
        let p = represent(&pair[1], DistanceKind::Cos, m).unwrap();
        let s = score_matrix(&q, &p).unwrap();
        let got = s.flatten();
        for (a, b) in got.iter().zip(oracle_scores(&q, &p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_falls_while_fitting_one_episode() {
    let (train_store, _) = trend_stores();
    let cfg = RunConfig::default();
    let ep = sample_episode(&train_store, &cfg.episode_spec(3, 0)).unwrap();
    let m = 4;
    let protos: Vec<_> = ep.prototypes.iter().map(|p| represent(p, DistanceKind::Cos, m).unwrap()).collect();
    let queries: Vec<_> = ep.queries.iter().map(|q| represent(q, DistanceKind::Cos, m).unwrap()).collect();
    let mut head = MlpHead::new(m * m, 64, 0);
    let opt = OptimizerConfig { total_steps: 50, ..Default::default() };
    let mut losses = Vec::new();
    for _ in 0..=50 {
        let mut grads = HeadParams::zeros(m * m, 64);
        let mut loss = 0.0;
        for (q, r) in queries.iter().zip(&ep.queries) {
            let o = episode_loss_and_grads(&head, q, &protos, r.label as usize).unwrap();
            grads.add_assign(&o.grads);
            loss += o.loss;
        }
        grads.scale(1.0 / queries.len() as f64);
        losses.push(loss / queries.len() as f64);
        optimizer_step(&mut head, &grads, &opt).unwrap();
    }
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 5, "{rises} rises: {losses:?}");
    assert!(losses[50] < losses[0] - 0.25, "{} -> {}", losses[0], losses[50]);
}

#[test]
fn training_improves_episode_accuracy() {
    let store = generate_synthetic(&SyntheticConfig {
        signal_noise: 0.05,
        distractor_noise: 0.3,
        ..trend_config(20, 5)
    })
    .unwrap();
    let cfg = RunConfig { epochs: 5, episodes_per_epoch: 10, ..RunConfig::default() };
    let log = train(&store, &cfg).unwrap().log;
    assert_eq!(log.epochs.len(), 5);
    assert!(log.epochs[4].mean_accuracy > log.epochs[0].mean_accuracy, "{log:?}");
    assert!(log.epochs[4].mean_loss < log.epochs[0].mean_loss);
}

#[test]
fn zero_epochs_returns_initial_head() {
    let (train_store, _) = trend_stores();
    let cfg = RunConfig { epochs: 0, ..trend_run(4) };
    let out = train(&train_store, &cfg).unwrap();
    assert!(out.log.epochs.is_empty());
    let m = cfg.resolve_m(&train_store).unwrap();
    assert_eq!(out.head, MlpHead::new(RunConfig::input_dim(m), cfg.hidden_dim, cfg.head_seed()));
}

#[test]
fn flat_head_scores_at_chance() {
    let (_, eval_store) = trend_stores();
    // a zero head scores every prototype alike, so argmax always picks 0
    let cfg = trend_run(0);
    let head = MlpHead::from_params(HeadParams::zeros(16, 64));
    let r = evaluate(&head, &eval_store, &cfg).unwrap();
    assert!((r.mean_accuracy - 0.2).abs() < 1e-12);
    assert_eq!(r.per_task_accuracy.len(), 200);
}

fn as_json(r: &cpes::EvalReport) -> serde_json::Value {
    serde_json::to_value(r).unwrap()
}

#[test]
fn sweeps_agree_with_plain_runs() {
    let (train_store, eval_store) = trend_stores();
    let cfg = RunConfig { eval_tasks: 50, ..trend_run(2) };
    let plain_full = {
        let c = RunConfig { m: Some(16), ..cfg.clone() };
        evaluate(&train(&train_store, &c).unwrap().head, &eval_store, &c).unwrap()
    };
    let sweep = sweep_m(&train_store, &eval_store, &cfg, &[16, 0]).unwrap();
    assert_eq!(as_json(sweep.point("16").unwrap()), as_json(&plain_full));
    assert_eq!(sweep.point("0").unwrap().tasks, 50);
    assert!(sweep.to_table().contains("16"));

    let plain = evaluate(&train(&train_store, &cfg).unwrap().head, &eval_store, &cfg).unwrap();
    let by_kind = sweep_distance(&train_store, &eval_store, &cfg, &[DistanceKind::Cos]).unwrap();
    assert_eq!(as_json(by_kind.point("cos").unwrap()), as_json(&plain));

    assert!(sweep_m(&train_store, &eval_store, &cfg, &[4, 4]).is_err());
    assert!(sweep_m(&train_store, &eval_store, &cfg, &[17]).is_err());
}

#[test]
fn cos_and_dot_disagree_once_norms_vary() {
    let (_, store) = trend_stores();
    let mut rng = Rng64::new(21);
    let mut differing = 0;
    for r in store.records() {
        let patches: Vec<Vec<f64>> = r
            .patches()
            .map(|p| {
                let s = rng.uniform(0.8, 1.25);
                p.iter().map(|v| v * s).collect()
            })
            .collect();
        let rec = EmbeddingRecord::new(r.record_id, r.label, r.class_embedding.clone(), &patches).unwrap();
        let a = select_top(&similarity_sequence(&rec, DistanceKind::Cos), 4).unwrap().indices;
        let b = select_top(&similarity_sequence(&rec, DistanceKind::Dot), 4).unwrap().indices;
        differing += usize::from(a != b);

        let top = |score: &dyn Fn(&[f64]) -> f64| {
            let mut order: Vec<usize> = (0..patches.len()).collect();
            order.sort_by(|&i, &j| score(&patches[j]).partial_cmp(&score(&patches[i])).unwrap().then(i.cmp(&j)));
            order.truncate(4);
            order
        };
        assert_eq!(a, top(&|p| cos(&rec.class_embedding, p)));
        assert_eq!(b, top(&|p| p.iter().zip(&rec.class_embedding).map(|(x, y)| x * y).sum()));
    }
    assert_eq!(differing, DIFFERING);
}

/// Records (of 200) whose top-4 sets differ, counted by the sort oracle.
const DIFFERING: usize = 185;

#[test]
fn mask_extremes_and_recall() {
    let store = generate_synthetic(&SyntheticConfig { signal_noise: 0.05, ..SyntheticConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (m, fill) in [(16, "255"), (0, "0")] {
        let cfg = RunConfig { m: Some(m), ..RunConfig::default() };
        let out = export_masks(&store, &cfg, &[0, 7], dir.path().join(m.to_string())).unwrap();
        assert_eq!(out.len(), 2);
        let pgm = std::fs::read_to_string(out[1].pgm_path.as_ref().unwrap()).unwrap();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("4 4"));
        assert_eq!(lines.next(), Some("255"));
        let cells: Vec<&str> = lines.flat_map(str::split_whitespace).collect();
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|c| *c == fill));
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&out[1].json_path).unwrap()).unwrap();
        assert_eq!(json["record_id"], 7);
        assert_eq!(json["m"], m);
    }
    let recall = selection_recall(&store, DistanceKind::Cos, 4).unwrap().unwrap();
    assert!(recall >= 0.5, "{recall}");
    let cfg = RunConfig { m: Some(4), ..RunConfig::default() };
    assert!(export_masks(&store, &cfg, &[10_000], dir.path()).is_err());
}

#[test]
fn scores_ignore_patch_order() {
    let (_, store) = trend_stores();
    let cfg = RunConfig::default();
    let ep = sample_episode(&store, &cfg.episode_spec(1, 1)).unwrap();
    let head = MlpHead::new(16, 32, 2);
    let protos: Vec<_> = ep.prototypes.iter().map(|p| represent(p, DistanceKind::Cos, 4).unwrap()).collect();
    let mut rng = Rng64::new(6);
    for q in ep.queries.iter().take(10) {
        let perm = rng.sample_without_replacement(16, 16);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| q.patch(i).to_vec()).collect();
        let moved = EmbeddingRecord::new(q.record_id, q.label, q.class_embedding.clone(), &shuffled).unwrap();
        let a = query_scores(&head, &represent(q, DistanceKind::Cos, 4).unwrap(), &protos).unwrap();
        let b = query_scores(&head, &represent(&moved, DistanceKind::Cos, 4).unwrap(), &protos).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_classes_stay_out_of_training() {
    let (train_store, eval_store) = trend_stores();
    let ids: std::collections::HashSet<u64> = train_store.records().iter().map(|r| r.record_id).collect();
    // separate stores reuse ids, but every vector differs
    let overlap = eval_store
        .records()
        .iter()
        .filter(|r| ids.contains(&r.record_id))
        .filter(|r| {
            let other = &train_store.records()[train_store.position_of(r.record_id).unwrap()];
            other.class_embedding == r.class_embedding
        })
        .count();
    assert_eq!(overlap, 0);
}

#[test]
fn ci_matches_formula() {
    let acc = [0.6, 0.8, 0.4];
    assert!((ci95_half_width(&acc) - 1.96 * 0.2 / 3f64.sqrt()).abs() < 1e-15);
}

fn arb_store() -> impl Strategy<Value = EmbeddingStore> {
    (1usize..6, 1usize..6, 1usize..4, 1usize..3, any::<u64>()).prop_map(|(dim, m, classes, per, seed)| {
        let mut rng = Rng64::new(seed);
        let records = (0..classes * per)
            .map(|i| {
                let patches: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
                let class = (0..dim).map(|_| rng.normal() * 10.0).collect();
                EmbeddingRecord::new(i as u64 * 3, (i / per) as u32, class, &patches).unwrap()
            })
            .collect();
        EmbeddingStore::new(dim, m, classes, records, None).unwrap()
    })
}

proptest! {
    #[test]
    fn store_round_trip_is_bit_exact(store in arb_store()) {
        let mut bytes = Vec::new();
        write_store(&store, &mut bytes).unwrap();
        let back = read_store(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &store.quantized());
        let mut again = Vec::new();
        write_store(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn selection_is_a_sorted_prefix(sims in prop::collection::vec(-4i32..4, 1..32), m in 0usize..32) {
        let sims: Vec<f64> = sims.into_iter().map(f64::from).collect();
        let m = m.min(sims.len());
        let sel = select_top(&sims, m).unwrap();
        prop_assert_eq!(sel.indices.len(), m);
        for w in sel.indices.windows(2) {
            prop_assert!(sims[w[0]] > sims[w[1]] || (sims[w[0]] == sims[w[1]] && w[0] < w[1]));
        }
        let floor = sel.indices.last().map_or(f64::INFINITY, |&i| sims[i]);
        for (i, s) in sims.iter().enumerate() {
            if !sel.indices.contains(&i) {
                prop_assert!(*s <= floor);
            }
        }
    }
}
