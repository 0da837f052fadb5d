use std::fs;
use std::path::{Path, PathBuf};

use m2hgcl::dataset::{input_hash, resolve_metapath};
use m2hgcl::formats::{write_edges, write_labels, write_matrix_bin, write_matrix_txt};
use m2hgcl::{load_dataset, write_dataset, DataError, DatasetManifest};
use m2hgcl_core::metapath::{expanded_adjacency, metapath_adjacency};
use m2hgcl_core::synthetic::{generate_synthetic, SyntheticSpec};
use m2hgcl_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_target: 60,
        classes: 3,
        aux_sizes: vec![30, 12],
        p_in: 0.2,
        p_out: 0.02,
        feature_noise: 0.3,
        feature_dim: 3,
        seed,
    }
}

/// Writes a dataset with the given type sizes and random edges, one
/// relation per auxiliary type leaving the target.
fn write_typed(dir: &Path, name: &str, types: &[(&str, usize)], rels: &[(&str, &str)], paths: serde_json::Value, classes: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    fs::create_dir_all(dir).unwrap();
    let target = types[0];
    let mut node_types = Vec::new();
    for &(t, count) in types {
        let file = format!("{t}.txt");
        let m = Matrix::from_vec(count, 2, (0..count * 2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        write_matrix_txt(&dir.join(&file), &m).unwrap();
        node_types.push(json!({"name": t, "count": count, "feature_file": file, "feature_dim": 2}));
    }
    let mut relations = Vec::new();
    for &(r, dst) in rels {
        let size = types.iter().find(|t| t.0 == dst).unwrap().1;
        let mut edges: Vec<(usize, usize)> = (0..target.1).map(|i| (i, rng.random_range(0..size))).collect();
        edges.extend((0..target.1).map(|i| (i, rng.random_range(0..size))));
        let file = format!("{r}.tsv");
        write_edges(&dir.join(&file), edges).unwrap();
        relations.push(json!({"name": r, "src": target.0, "dst": dst, "edge_file": file}));
    }
    let labels: Vec<usize> = (0..target.1).map(|i| i % classes).collect();
    write_labels(&dir.join("labels.tsv"), &labels).unwrap();
    let manifest = json!({
        "name": name,
        "node_types": node_types,
        "relations": relations,
        "target_type": target.0,
        "labels_file": "labels.tsv",
        "metapaths": paths,
        "num_classes": classes,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

#[test]
fn written_synthetic_dataset_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&small_spec(4)).unwrap();
    let manifest = write_dataset(dir.path(), "small", &data, 3).unwrap();
    let loaded = load_dataset(&manifest).unwrap();
    assert!(loaded.graph.validate().is_empty());
    assert_eq!(loaded.labels, data.labels);
    assert_eq!(loaded.num_classes, 3);
    let names: Vec<&str> = loaded.metapaths.iter().map(|p| p.name()).collect();
    assert_eq!(names, ["PAP", "PSP"]);
    for (a, b) in loaded.graph.relations().iter().zip(data.graph.relations()) {
        assert_eq!(a.adjacency(), b.adjacency());
    }
    for (a, b) in loaded.metapaths.iter().zip(&data.metapaths) {
        assert_eq!(
            metapath_adjacency(&loaded.graph, a).unwrap().edge_count(),
            metapath_adjacency(&data.graph, b).unwrap().edge_count()
        );
    }
    let features = &loaded.graph.node_types()[0].features;
    let original = &data.graph.node_types()[0].features;
    assert!(features.max_abs_diff(original) < 1e-6);
}

#[test]
fn acm_shaped_manifest_matches_its_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_typed(
        dir.path(),
        "ACM",
        &[("paper", 4019), ("author", 7167), ("subject", 60)],
        &[("PA", "author"), ("PS", "subject")],
        json!([["PA", "AP"], ["PS", "SP"]]),
        3,
    );
    let data = load_dataset(&manifest).unwrap();
    let counts: Vec<usize> = data.graph.node_types().iter().map(|t| t.count).collect();
    assert_eq!(counts, [4019, 7167, 60]);
    let names: Vec<&str> = data.metapaths.iter().map(|p| p.name()).collect();
    assert_eq!(names, ["PAP", "PSP"]);
    assert_eq!(data.num_classes, 3);
}

#[test]
fn freebase_shaped_manifest_resolves_three_metapaths() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_typed(
        dir.path(),
        "Freebase",
        &[("movie", 40), ("actor", 30), ("director", 10), ("writer", 12)],
        &[("MA", "actor"), ("MD", "director"), ("MW", "writer")],
        json!([["MA", "~MA"], ["MD", "DM"], ["MW", "~MW"]]),
        3,
    );
    let data = load_dataset(&manifest).unwrap();
    let names: Vec<&str> = data.metapaths.iter().map(|p| p.name()).collect();
    assert_eq!(names, ["MAM", "MDM", "MWM"]);
    let direct = resolve_metapath(&data.graph, &["MA", "~MA"]).unwrap();
    assert_eq!(direct, data.metapaths[0]);
    assert!(expanded_adjacency(&data.graph, &data.metapaths[0]).is_ok());
}

#[test]
fn corrupted_edge_index_fails_with_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_typed(
        dir.path(),
        "bad",
        &[("paper", 20), ("author", 15), ("subject", 60)],
        &[("PA", "author"), ("PS", "subject")],
        json!([["PA", "AP"], ["PS", "SP"]]),
        2,
    );
    let edges = dir.path().join("PS.tsv");
    let mut text = fs::read_to_string(&edges).unwrap();
    text.push_str("3\t9999\n");
    fs::write(&edges, text).unwrap();
    let err = load_dataset(&manifest).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, DataError::Parse { line: 41, .. }), "{msg}");
    assert!(msg.contains("PS.tsv") && msg.contains("9999"), "{msg}");
}

#[test]
fn manifest_problems_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&small_spec(1)).unwrap();
    let manifest = write_dataset(dir.path(), "small", &data, 3).unwrap();

    let missing = load_dataset(&dir.path().join("nope.json")).unwrap_err();
    assert!(matches!(missing, DataError::Io { .. }));

    let original = fs::read_to_string(&manifest).unwrap();
    let mut m: DatasetManifest = serde_json::from_str(&original).unwrap();
    m.node_types[1].feature_dim = 7;
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let err = load_dataset(&manifest).unwrap_err().to_string();
    assert!(err.contains("author.features.bin") && err.contains("feature dim"), "{err}");

    let mut m: DatasetManifest = serde_json::from_str(&original).unwrap();
    m.metapaths.push(vec!["PA".into(), "PS".into()]);
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    assert!(load_dataset(&manifest).is_err());

    let mut m: DatasetManifest = serde_json::from_str(&original).unwrap();
    m.num_classes = 2;
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    assert!(load_dataset(&manifest).unwrap_err().to_string().contains("labels.tsv"));

    let extra = original.replacen('{', "{\"extra\": 1,", 1);
    fs::write(&manifest, extra).unwrap();
    assert!(matches!(load_dataset(&manifest).unwrap_err(), DataError::Json { .. }));
}

#[test]
fn input_hash_tracks_every_referenced_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&small_spec(2)).unwrap();
    let manifest_path = write_dataset(dir.path(), "small", &data, 3).unwrap();
    let manifest = DatasetManifest::read(&manifest_path).unwrap();
    let before = input_hash(&manifest_path, &manifest).unwrap();
    assert_eq!(before, load_dataset(&manifest_path).unwrap().input_hash);
    assert_eq!(before.len(), 64);

    let features = dir.path().join("subject.features.bin");
    let mut m = m2hgcl::formats::read_matrix(&features).unwrap();
    m.set(0, 0, m.get(0, 0) + 1.0);
    write_matrix_bin(&features, &m).unwrap();
    assert_ne!(before, input_hash(&manifest_path, &manifest).unwrap());
}
