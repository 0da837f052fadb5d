use m2hgcl::formats::{
    decode_matrix_bin, encode_matrix_bin, load_embeddings, read_edges, read_labels, read_matrix, save_embeddings,
    write_matrix_txt,
};
use m2hgcl::DataError;
use m2hgcl_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn f32_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| f64::from(rng.random_range(-3.0f32..3.0))).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn embeddings_round_trip_bit_exact_at_dataset_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.bin");
    let z = f32_matrix(4019, 256, 1);
    save_embeddings(&path, &z).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back, z);
    save_embeddings(&path, &back).unwrap();
    let second = std::fs::read(&path).unwrap();
    assert_eq!(Sha256::digest(&first), Sha256::digest(&second));
    assert_eq!(first.len(), 8 + 4 * 4019 * 256);
}

#[test]
fn f64_values_narrow_to_f32_once() {
    let z = Matrix::from_rows(&[[0.1, 1.0 / 3.0], [1e-40, -2.5]]).unwrap();
    let back = decode_matrix_bin(&encode_matrix_bin(&z).unwrap()).unwrap();
    for (a, b) in z.as_slice().iter().zip(back.as_slice()) {
        assert_eq!(*b, f64::from(*a as f32));
    }
}

#[test]
fn binary_header_mismatch_is_rejected() {
    let mut bytes = encode_matrix_bin(&f32_matrix(3, 2, 2)).unwrap();
    bytes[0] = 4;
    let err = decode_matrix_bin(&bytes).unwrap_err();
    assert!(err.contains("4x2"), "{err}");
    assert!(decode_matrix_bin(&bytes[..5]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, &bytes).unwrap();
    let err = load_embeddings(&path).unwrap_err();
    assert!(matches!(err, DataError::Format { .. }));
    assert!(err.to_string().contains("bad.bin"));
}

#[test]
fn text_matrix_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.txt");
    let m = Matrix::from_rows(&[[0.1, -2.0, 1e-300], [3.5, 0.0, f64::MAX]]).unwrap();
    write_matrix_txt(&path, &m).unwrap();
    assert_eq!(read_matrix(&path).unwrap(), m);

    std::fs::write(&path, "2 2\n1 2\n3\n").unwrap();
    let err = read_matrix(&path).unwrap_err();
    assert!(matches!(err, DataError::Parse { line: 3, .. }), "{err}");
    std::fs::write(&path, "2 2\n1 2\n").unwrap();
    assert!(read_matrix(&path).is_err());
    std::fs::write(&path, "1 2\n1 x\n").unwrap();
    assert!(matches!(read_matrix(&path).unwrap_err(), DataError::Parse { line: 2, .. }));
    assert!(read_matrix(&dir.path().join("x.csv")).is_err());
}

#[test]
fn edge_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("PS.edges.tsv");
    std::fs::write(&path, "0\t3\n1\t9999\n").unwrap();
    let err = read_edges(&path, (5, 60)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("PS.edges.tsv:2"), "{msg}");
    assert!(msg.contains("9999"), "{msg}");
    std::fs::write(&path, "0 3\n").unwrap();
    assert!(read_edges(&path, (5, 60)).is_err());
    std::fs::write(&path, "0\t3\n4\t59\n").unwrap();
    assert_eq!(read_edges(&path, (5, 60)).unwrap(), vec![(0, 3), (4, 59)]);
}

#[test]
fn labels_need_exactly_one_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.tsv");
    std::fs::write(&path, "1\t0\n0\t2\n").unwrap();
    assert_eq!(read_labels(&path, 2, 3).unwrap(), vec![2, 0]);
    assert!(read_labels(&path, 3, 3).is_err());
    assert!(read_labels(&path, 2, 2).is_err());
    std::fs::write(&path, "0\t0\n0\t1\n").unwrap();
    assert!(read_labels(&path, 2, 2).is_err());
}

proptest! {
    #[test]
    fn binary_round_trip_of_f32_values(rows in 0usize..12, cols in 0usize..12, seed in any::<u64>()) {
        let m = f32_matrix(rows, cols, seed);
        let back = decode_matrix_bin(&encode_matrix_bin(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}
