use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hin::{NodeType, Relation};
use crate::sparse::SparseBool;
use crate::synthetic::{generate_synthetic, toy_movie_graph, SyntheticSpec};

fn shape(d: usize) -> EncoderShape {
    EncoderShape {
        hidden_dim: d,
        attention_dim: 8,
        leaky_slope: 0.2,
        direct: true,
        expanded: true,
        discriminator: true,
    }
}

fn small_dataset(n: usize, seed: u64) -> crate::synthetic::SyntheticDataset {
    generate_synthetic(&SyntheticSpec {
        n_target: n,
        classes: 2,
        aux_sizes: vec![6, 4],
        p_in: 0.4,
        p_out: 0.05,
        feature_noise: 0.3,
        feature_dim: 2,
        seed,
    })
    .unwrap()
}

fn toy_paths(g: &HeteroGraph) -> Vec<MetaPath> {
    ["MA", "MD", "MW"]
        .iter()
        .map(|r| MetaPath::symmetric(g, g.relation_by_name(r).unwrap()).unwrap())
        .collect()
}

struct Run {
    tape: Tape,
    views: Vec<ViewVars>,
    transformed: Vec<Option<Var>>,
}

fn run(graph: &HeteroGraph, views: &[ViewStructure], params: &ModelParams) -> Run {
    let mut tape = Tape::new();
    let bindings = params.store.bind(&mut tape);
    let enc = Encoder {
        graph,
        views,
        params,
        bindings: &bindings,
    };
    let transformed = enc.transform_features(&mut tape, None).unwrap();
    let out = (0..views.len())
        .map(|v| enc.build_view_embedding(&mut tape, v, &transformed).unwrap())
        .collect();
    Run {
        tape,
        views: out,
        transformed,
    }
}

#[test]
fn zero_transform_gives_zero_features() {
    let data = small_dataset(10, 1);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let mut params = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for (w, b) in params.type_transform.clone().into_iter().flatten() {
        params.store.get_mut(w).fill(0.0);
        params.store.get_mut(b).fill(0.0);
    }
    let r = run(&data.graph, &views, &params);
    for h in r.transformed.iter().flatten() {
        assert!(r.tape.value(*h).as_slice().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn identity_transform_keeps_nonnegative_features() {
    let types = vec![
        NodeType {
            name: "paper".to_string(),
            count: 1,
            features: Matrix::from_rows(&[[0.5, 2.0]]).unwrap(),
        },
        NodeType {
            name: "author".to_string(),
            count: 1,
            features: Matrix::from_rows(&[[1.0, 1.0]]).unwrap(),
        },
    ];
    let pa = SparseBool::from_edges(1, 1, [(0, 0)]).unwrap();
    let g = HeteroGraph::new(types, vec![Relation::new("PA", NodeTypeId(0), NodeTypeId(1), pa)], NodeTypeId(0)).unwrap();
    let paths = vec![MetaPath::symmetric(&g, crate::RelationId(0)).unwrap()];
    let views = prepare_views(&g, &paths).unwrap();
    let mut params = ModelParams::init(&g, &views, shape(2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (w, _) = params.type_transform[0].unwrap();
    *params.store.get_mut(w) = Matrix::identity(2);
    let r = run(&g, &views, &params);
    assert_eq!(r.tape.value(r.transformed[0].unwrap()).row(0), &[0.5, 2.0]);
}

#[test]
fn toy_direct_attention() {
    let g = toy_movie_graph();
    let views = prepare_views(&g, &toy_paths(&g)).unwrap();
    let params = ModelParams::init(&g, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let r = run(&g, &views, &params);
    let mam = &r.views[0];
    let zeta = r.tape.value(mam.direct_attention.unwrap());
    // M3 attends over A1 and A3 only
    assert_eq!(zeta.get(2, 1), 0.0);
    assert!(zeta.get(2, 0) > 0.0 && zeta.get(2, 2) > 0.0);
    assert!((zeta.row(2).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // M2 has the single neighbor A2
    assert_eq!(zeta.row(1), &[0.0, 1.0, 0.0]);
    let actors = r.tape.value(r.transformed[1].unwrap());
    let direct = r.tape.value(mam.direct.unwrap());
    for (k, &v) in direct.row(1).iter().enumerate() {
        let h = actors.get(1, k);
        let expected = if h > 0.0 { h } else { libm::expm1(h) };
        assert!((v - expected).abs() < 1e-12);
    }
}

#[test]
fn identical_neighbors_share_attention() {
    let g = toy_movie_graph();
    let mut types = g.node_types().to_vec();
    let a1 = types[1].features.row(0).to_vec();
    types[1].features.row_mut(2).copy_from_slice(&a1);
    let g = HeteroGraph::new(types, g.relations().to_vec(), g.target()).unwrap();
    let views = prepare_views(&g, &toy_paths(&g)).unwrap();
    let params = ModelParams::init(&g, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let r = run(&g, &views, &params);
    let zeta = r.tape.value(r.views[0].direct_attention.unwrap());
    assert!((zeta.get(2, 0) - 0.5).abs() < 1e-12);
    assert!((zeta.get(2, 2) - 0.5).abs() < 1e-12);
}

#[test]
fn node_without_direct_neighbors_gets_zero_row() {
    let g = toy_movie_graph();
    let views = prepare_views(&g, &toy_paths(&g)).unwrap();
    let params = ModelParams::init(&g, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let r = run(&g, &views, &params);
    // M2 has no writer
    let mwm = &r.views[2];
    assert!(r.tape.value(mwm.direct.unwrap()).row(1).iter().all(|&v| v == 0.0));
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        libm::expm1(v)
    }
}

fn gcn(adj: &SparseBool, h: &Matrix, w: &Matrix) -> Matrix {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let wv = tape.constant(w.clone());
    let out = Encoder::gcn_encode(&mut tape, Rc::new(adj.gcn_normalized()), hv, wv).unwrap();
    tape.value(out).clone()
}

#[test]
fn gcn_on_empty_graph_is_elu_hw() {
    let h = Matrix::from_rows(&[[1.0, -2.0], [0.5, 0.25], [-1.0, 3.0]]).unwrap();
    let w = Matrix::from_rows(&[[0.3, -0.7], [1.1, 0.2]]).unwrap();
    let out = gcn(&SparseBool::empty(3, 3), &h, &w);
    assert!(out.max_abs_diff(&h.matmul(&w).unwrap().map(elu)) < 1e-15);
}

#[test]
fn gcn_clique_with_identical_features_gives_identical_rows() {
    let h = Matrix::from_rows(&[[0.4, -1.0], [0.4, -1.0]]).unwrap();
    let w = Matrix::from_rows(&[[0.3, -0.7], [1.1, 0.2]]).unwrap();
    let adj = SparseBool::from_edges(2, 2, [(0, 1), (1, 0)]).unwrap();
    let out = gcn(&adj, &h, &w);
    assert_eq!(out.row(0), out.row(1));
}

#[test]
fn gcn_on_path_graph_matches_hand_computation() {
    // path 0-1-2-3 plus self loops: degrees 2, 3, 3, 2
    let s6 = 1.0 / libm::sqrt(6.0);
    let a_hat = Matrix::from_rows(&[
        [0.5, s6, 0.0, 0.0],
        [s6, 1.0 / 3.0, 1.0 / 3.0, 0.0],
        [0.0, 1.0 / 3.0, 1.0 / 3.0, s6],
        [0.0, 0.0, s6, 0.5],
    ])
    .unwrap();
    let h = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0]]).unwrap();
    let w = Matrix::from_rows(&[[0.5, -1.0], [0.25, 0.75]]).unwrap();
    // HW = [[0.5,-1],[0.25,0.75],[0.75,-0.25],[0,2.5]]
    let hw = Matrix::from_rows(&[[0.5, -1.0], [0.25, 0.75], [0.75, -0.25], [0.0, 2.5]]).unwrap();
    assert_eq!(h.matmul(&w).unwrap(), hw);
    let expected = a_hat.matmul(&hw).unwrap().map(elu);
    let adj = SparseBool::from_edges(4, 4, [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)]).unwrap();
    assert!(gcn(&adj, &h, &w).max_abs_diff(&expected) < 1e-14);
}

fn fuse(params: &ModelParams, graph: &HeteroGraph, views: &[ViewStructure], hi: &Matrix, he: &Matrix) -> (Matrix, Matrix) {
    let mut tape = Tape::new();
    let bindings = params.store.bind(&mut tape);
    let enc = Encoder {
        graph,
        views,
        params,
        bindings: &bindings,
    };
    let a = tape.constant(hi.clone());
    let b = tape.constant(he.clone());
    let (agg, w) = enc.fuse_scales(&mut tape, a, b).unwrap();
    (tape.value(agg).clone(), tape.value(w).clone())
}

#[test]
fn equal_scales_get_equal_weight() {
    let data = small_dataset(8, 2);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let params = ModelParams::init(&data.graph, &views, shape(3), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let h = glorot_init(8, 3, &mut ChaCha8Rng::seed_from_u64(9));
    let (agg, w) = fuse(&params, &data.graph, &views, &h, &h);
    assert_eq!(w.row(0), &[0.5, 0.5]);
    assert!(agg.max_abs_diff(&h) < 1e-15);
}

#[test]
fn scale_weights_sum_to_one() {
    let data = small_dataset(8, 2);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let params = ModelParams::init(&data.graph, &views, shape(3), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for seed in 0..10 {
        let hi = glorot_init(8, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let he = glorot_init(8, 3, &mut ChaCha8Rng::seed_from_u64(seed + 100)).scale(4.0);
        let (_, w) = fuse(&params, &data.graph, &views, &hi, &he);
        assert!((w.get(0, 0) + w.get(0, 1) - 1.0).abs() < 1e-15);
        assert!(w.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn score_shift_leaves_weights_unchanged() {
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::row_vector(&[0.3, -0.4]));
    let b = tape.constant(Matrix::row_vector(&[0.3 + 2.5, -0.4 + 2.5]));
    let wa = tape.row_softmax(a);
    let wb = tape.row_softmax(b);
    assert!(tape.value(wa).max_abs_diff(tape.value(wb)) < 1e-15);
}

#[test]
fn view_width_is_twice_hidden_dim() {
    let data = small_dataset(10, 3);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    for d in [64, 128] {
        let params = ModelParams::init(&data.graph, &views, shape(d), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let emb = embed(&data.graph, &views, &params).unwrap();
        assert_eq!(emb.fused.shape(), (10, 2 * d));
        assert!(emb.views.iter().all(|v| v.shape() == (10, 2 * d)));
        let narrow = EncoderShape {
            direct: false,
            ..shape(d)
        };
        let params = ModelParams::init(&data.graph, &views, narrow, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(embed(&data.graph, &views, &params).unwrap().fused.shape(), (10, d));
    }
}

/// Copies every tensor of `from` whose name exists in `into`.
fn copy_shared(from: &ModelParams, into: &mut ModelParams) {
    for id in into.store.ids().collect::<Vec<_>>() {
        let name = into.store.name(id).to_string();
        let src = from.store.find(&name).unwrap();
        *into.store.get_mut(id) = from.store.get(src).clone();
    }
}

#[test]
fn dropping_direct_half_matches_without_direct_wiring() {
    let data = small_dataset(10, 4);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let d = 4;
    let full = ModelParams::init(&data.graph, &views, shape(d), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let narrow_shape = EncoderShape {
        direct: false,
        ..shape(d)
    };
    let mut narrow = ModelParams::init(&data.graph, &views, narrow_shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    // the semantic attention and discriminator have different input widths
    let keep: Vec<_> = narrow
        .store
        .ids()
        .filter(|&id| !narrow.store.name(id).starts_with("semantic") && narrow.store.name(id) != "discriminator")
        .collect();
    for id in keep {
        let src = full.store.find(narrow.store.name(id)).unwrap();
        *narrow.store.get_mut(id) = full.store.get(src).clone();
    }
    let a = run(&data.graph, &views, &full);
    let b = run(&data.graph, &views, &narrow);
    for (va, vb) in a.views.iter().zip(&b.views) {
        let wide = a.tape.value(va.embedding);
        let only_agg = b.tape.value(vb.embedding);
        for r in 0..10 {
            assert_eq!(&wide.row(r)[d..], only_agg.row(r));
        }
    }
}

#[test]
fn parameter_registry_follows_wiring() {
    let data = small_dataset(10, 5);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let names = |s: EncoderShape| -> Vec<alloc::string::String> {
        ModelParams::init(&data.graph, &views, s, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .store
            .names()
            .to_vec()
    };
    let full = names(shape(4));
    let mut sorted = full.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), full.len(), "names are unique");
    let no_expanded = names(EncoderShape {
        expanded: false,
        ..shape(4)
    });
    let removed: Vec<_> = full.iter().filter(|n| !no_expanded.contains(n)).collect();
    assert_eq!(
        removed,
        [
            "gcn.PAP.expanded",
            "gcn.PSP.expanded",
            "scale_attention.weight",
            "scale_attention.bias",
            "scale_attention.query"
        ]
    );
    assert!(no_expanded.iter().all(|n| full.contains(n)));
}

#[test]
fn single_view_fusion_is_identity() {
    let data = small_dataset(10, 6);
    let views = prepare_views(&data.graph, &data.metapaths[..1]).unwrap();
    let params = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let emb = embed(&data.graph, &views, &params).unwrap();
    assert_eq!(emb.semantic_weights, vec![1.0]);
    assert_eq!(emb.fused, emb.views[0]);
}

#[test]
fn identical_views_get_uniform_semantic_weight() {
    let data = small_dataset(10, 7);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let params = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut tape = Tape::new();
    let bindings = params.store.bind(&mut tape);
    let enc = Encoder {
        graph: &data.graph,
        views: &views,
        params: &params,
        bindings: &bindings,
    };
    let h = tape.constant(glorot_init(10, 8, &mut ChaCha8Rng::seed_from_u64(1)));
    let (z, beta) = enc.fuse_semantic(&mut tape, &[h, h, h]).unwrap();
    for &b in tape.value(beta).as_slice() {
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!(tape.value(z).max_abs_diff(tape.value(h)) < 1e-14);
    assert!(enc.fuse_semantic(&mut tape, &[]).is_err());
}

#[test]
fn three_movie_views_give_three_semantic_weights() {
    let g = toy_movie_graph();
    let views = prepare_views(&g, &toy_paths(&g)).unwrap();
    let params = ModelParams::init(&g, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let emb = embed(&g, &views, &params).unwrap();
    assert_eq!(emb.semantic_weights.len(), 3);
    assert!((emb.semantic_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(emb.scale_weights.len(), 3);
}

/// Relabels target nodes: new node `i` is old node `perm[i]`.
fn permute_targets(g: &HeteroGraph, perm: &[usize]) -> HeteroGraph {
    let t = g.target();
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let mut types = g.node_types().to_vec();
    types[t.0].features = types[t.0].features.select_rows(perm);
    let relations = g
        .relations()
        .iter()
        .map(|r| {
            let map = |idx: usize, ty: NodeTypeId| if ty == t { inverse[idx] } else { idx };
            let edges = r.adjacency().iter().map(|(s, d)| (map(s, r.src), map(d, r.dst)));
            let adj = SparseBool::from_edges(r.adjacency().rows(), r.adjacency().cols(), edges).unwrap();
            Relation::new(r.name.clone(), r.src, r.dst, adj)
        })
        .collect();
    HeteroGraph::new(types, relations, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fused_embedding_is_permutation_equivariant(
        n in 4usize..=20,
        seed in 0u64..1000,
        perm_seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        let data = small_dataset(n, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let permuted = permute_targets(&data.graph, &perm);
        let views = prepare_views(&data.graph, &data.metapaths).unwrap();
        let pviews = prepare_views(&permuted, &data.metapaths).unwrap();
        let params = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let z = embed(&data.graph, &views, &params).unwrap().fused;
        let zp = embed(&permuted, &pviews, &params).unwrap().fused;
        prop_assert!(zp.max_abs_diff(&z.select_rows(&perm)) < 1e-10);
    }
}

#[test]
fn copy_shared_round_trips() {
    let data = small_dataset(6, 8);
    let views = prepare_views(&data.graph, &data.metapaths).unwrap();
    let a = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut b = ModelParams::init(&data.graph, &views, shape(4), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_ne!(a, b);
    copy_shared(&a, &mut b);
    assert_eq!(a, b);
}
