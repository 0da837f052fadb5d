use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::synthetic::{generate_synthetic, toy_movie_graph, SyntheticSpec};

fn small(n: usize, seed: u64) -> crate::synthetic::SyntheticDataset {
    generate_synthetic(&SyntheticSpec {
        n_target: n,
        classes: 3,
        aux_sizes: vec![n / 2, n / 5],
        p_in: 0.15,
        p_out: 0.01,
        feature_noise: 0.3,
        feature_dim: 3,
        seed,
    })
    .unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        hidden_dim: 8,
        attention_dim: 8,
        lr: 5e-3,
        epochs,
        patience: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn presets_carry_published_hyperparameters() {
    let a = TrainConfig::aminer();
    assert_eq!((a.hidden_dim, a.lr, a.tau, a.alpha), (64, 3e-3, 0.6, 0.3));
    let c = TrainConfig::acm();
    assert_eq!((c.hidden_dim, c.lr, c.tau, c.alpha), (128, 5e-4, 0.7, 0.4));
    let f = TrainConfig::freebase();
    assert_eq!((f.hidden_dim, f.lr), (64, 1e-3));
    assert_eq!(TrainConfig::preset("ACM").unwrap(), c);
    assert!(TrainConfig::preset("dblp").is_err());
    let d = TrainConfig::default();
    assert_eq!((d.epochs, d.patience, d.min_delta), (1000, 30, 1e-5));
    assert_eq!(d.global_mode, GlobalMode::Corrupted);
}

#[test]
fn variant_labels_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.label().parse::<Variant>().unwrap(), v);
    }
    assert!("wo_everything".parse::<Variant>().is_err());
    assert_eq!("literal".parse::<GlobalMode>().unwrap(), GlobalMode::Literal);
}

#[test]
fn variants_set_alpha_and_sampling() {
    let base = TrainConfig::default();
    assert_eq!(base.clone().with_variant(Variant::WoGlobal).effective_alpha(), 0.0);
    assert_eq!(base.clone().with_variant(Variant::WoLocal).effective_alpha(), 1.0);
    assert_eq!(base.clone().with_variant(Variant::WoPsamp).sampling(), PositiveSampling::CounterpartOnly);
    assert_eq!(base.sampling(), PositiveSampling::MetaPathNeighbors);
    assert!(!base.clone().with_variant(Variant::WoGlobal).encoder_shape().discriminator);
}

#[test]
fn invalid_configs_are_rejected() {
    let data = small(20, 1);
    for bad in [
        TrainConfig { lr: 0.0, ..quick(1) },
        TrainConfig { epochs: 0, ..quick(1) },
        TrainConfig { tau: 0.0, ..quick(1) },
        TrainConfig { alpha: 1.5, ..quick(1) },
        TrainConfig { hidden_dim: 0, ..quick(1) },
    ] {
        assert!(matches!(train(&data.graph, &data.metapaths, &bad), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn single_metapath_is_rejected() {
    let data = small(20, 1);
    for v in Variant::ALL {
        let err = train(&data.graph, &data.metapaths[..1], &quick(1).with_variant(v));
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn non_finite_features_abort_training() {
    let data = small(20, 2);
    let mut types = data.graph.node_types().to_vec();
    types[0].features.set(3, 1, f64::NAN);
    let g = HeteroGraph::from_parts(types, data.graph.relations().to_vec(), data.graph.target());
    let err = train(&g, &data.metapaths, &quick(3)).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, .. }), "{err:?}");
}

#[test]
fn same_seed_same_run() {
    let data = small(30, 3);
    let a = train(&data.graph, &data.metapaths, &quick(15)).unwrap();
    let b = train(&data.graph, &data.metapaths, &quick(15)).unwrap();
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.embeddings, b.embeddings);
    let c = train(&data.graph, &data.metapaths, &TrainConfig { seed: 1, ..quick(15) }).unwrap();
    assert_ne!(a.loss_curve, c.loss_curve);
}

#[test]
fn loss_trends_down_on_sixty_nodes() {
    let data = small(60, 4);
    let out = train(&data.graph, &data.metapaths, &quick(200)).unwrap();
    assert_eq!(out.loss_curve.len(), 200);
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = avg(&out.loss_curve[..10]);
    let last = avg(&out.loss_curve[190..]);
    assert!(last < first, "moving average went from {first} to {last}");
}

#[test]
fn patience_stops_a_flat_run() {
    let data = small(30, 5);
    let cfg = TrainConfig {
        lr: 1e-12,
        patience: 3,
        min_delta: 1.0,
        ..quick(50)
    };
    let out = train(&data.graph, &data.metapaths, &cfg).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.loss_curve.len(), 4);
}

#[test]
fn embedding_width_follows_variant() {
    let data = small(30, 6);
    for v in Variant::ALL {
        let out = train(&data.graph, &data.metapaths, &quick(2).with_variant(v)).unwrap();
        let width = if v == Variant::WoDirect { 8 } else { 16 };
        assert_eq!(out.embedding().shape(), (30, width), "{v}");
        assert!(out.embedding().is_finite());
    }
}

#[test]
fn counterpart_only_variant_has_single_positives() {
    let data = small(30, 7);
    let problem = Problem::new(&data.graph, &data.metapaths, &quick(1).with_variant(Variant::WoPsamp)).unwrap();
    assert!(problem.masks.iter().all(|m| m.positive_counts.iter().all(|&c| c == 1)));
    let full = Problem::new(&data.graph, &data.metapaths, &quick(1)).unwrap();
    for (m, pm) in full.masks.iter().enumerate() {
        let view = &full.views[pm.pair.0];
        for (i, &c) in pm.positive_counts.iter().enumerate() {
            assert_eq!(c, view.initial.neighbors(i).unwrap().len() + 1, "pair {m} anchor {i}");
        }
    }
}

#[test]
fn without_expanded_changes_first_loss() {
    let data = small(40, 8);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    assert!(views.iter().any(|v| v.expanded.edge_count() > v.initial.edge_count()));
    let full = train(&data.graph, &data.metapaths, &quick(1)).unwrap();
    let wo = train(&data.graph, &data.metapaths, &quick(1).with_variant(Variant::WoExpanded)).unwrap();
    assert_ne!(full.loss_curve[0], wo.loss_curve[0]);
}

fn registry(data: &crate::synthetic::SyntheticDataset, v: Variant) -> Vec<alloc::string::String> {
    let cfg = quick(1).with_variant(v);
    let problem = Problem::new(&data.graph, &data.metapaths, &cfg).unwrap();
    init_params(&problem, &cfg).unwrap().store.names().to_vec()
}

#[test]
fn variants_change_only_their_wiring() {
    let data = small(30, 9);
    let full = registry(&data, Variant::Full);
    let diff = |v| {
        let names = registry(&data, v);
        let removed: Vec<_> = full.iter().filter(|n| !names.contains(n)).cloned().collect();
        let added: Vec<_> = names.iter().filter(|n| !full.contains(n)).cloned().collect();
        (removed, added)
    };
    let (removed, added) = diff(Variant::WoExpanded);
    assert!(added.is_empty());
    assert!(removed.iter().all(|n| n.ends_with(".expanded") || n.starts_with("scale_attention")));
    assert_eq!(removed.len(), 2 + 3);

    let (removed, added) = diff(Variant::WoDirect);
    assert!(added.is_empty());
    assert!(removed.iter().all(|n| n.starts_with("direct.") || n.starts_with("transform.author") || n.starts_with("transform.subject")));
    assert_eq!(removed.len(), 2 + 4);

    let (removed, added) = diff(Variant::WoGlobal);
    assert!(added.is_empty());
    assert_eq!(removed, ["discriminator"]);

    for v in [Variant::WoLocal, Variant::WoPsamp] {
        assert_eq!(registry(&data, v), full, "{v}");
    }
}

#[test]
fn wo_direct_shrinks_downstream_shapes() {
    // semantic attention and discriminator read d-wide views
    let data = small(30, 9);
    let cfg = quick(1).with_variant(Variant::WoDirect);
    let problem = Problem::new(&data.graph, &data.metapaths, &cfg).unwrap();
    let p = init_params(&problem, &cfg).unwrap();
    assert_eq!(p.store.get(p.discriminator.unwrap()).shape(), (8, 8));
    assert_eq!(p.store.get(p.semantic_attention.weight).shape(), (8, 8));
}

#[test]
fn toy_graph_trains_with_three_views() {
    let g = toy_movie_graph();
    let paths: Vec<_> = ["MA", "MD", "MW"]
        .iter()
        .map(|r| MetaPath::symmetric(&g, g.relation_by_name(r).unwrap()).unwrap())
        .collect();
    let out = train(&g, &paths, &quick(5)).unwrap();
    assert_eq!(out.embeddings.semantic_weights.len(), 3);
    let problem = Problem::new(&g, &paths, &quick(5)).unwrap();
    assert_eq!(problem.pair_count(), 6);
}

#[test]
fn normalized_output_has_unit_rows() {
    let data = small(20, 10);
    let cfg = TrainConfig {
        normalize_output: true,
        ..quick(2)
    };
    let out = train(&data.graph, &data.metapaths, &cfg).unwrap();
    for r in 0..20 {
        let n: f64 = out.embedding().row(r).iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn untrained_embeddings_match_initial_parameters() {
    let data = small(20, 11);
    let cfg = quick(1);
    let u = untrained_embeddings(&data.graph, &data.metapaths, &cfg).unwrap();
    let problem = Problem::new(&data.graph, &data.metapaths, &cfg).unwrap();
    let p = init_params(&problem, &cfg).unwrap();
    assert_eq!(u, embed(&data.graph, &problem.views, &p).unwrap());
}
