use std::path::{Path, PathBuf};

use ibplab_core::data::{
    check_assumption2, load_idx, load_mnist_task, make_binary_task, mnist_paths, MnistTaskSpec,
};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-2v5")
}

/// Counts labels by reading the raw bytes after the 8-byte header.
fn scan_label_counts(dir: &Path) -> [usize; 10] {
    let bytes = std::fs::read(mnist_paths(dir).1).unwrap();
    assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut counts = [0; 10];
    for &b in &bytes[8..8 + n] {
        counts[b as usize] += 1;
    }
    counts
}

fn check_dir(dir: &Path) {
    let counts = scan_label_counts(dir);
    let raw = load_idx(&mnist_paths(dir).0, &mnist_paths(dir).1).unwrap();
    assert_eq!((raw.height, raw.width), (28, 28));
    let task = make_binary_task(&raw, 2, 5, None).unwrap();
    assert_eq!(task.labels.len(), counts[2] + counts[5]);
    assert_eq!(task.labels.iter().filter(|&&l| l == 1).count(), counts[2]);

    let ds = load_mnist_task(
        dir,
        &MnistTaskSpec {
            epsilon: 0.1,
            ..MnistTaskSpec::default()
        },
    )
    .unwrap();
    let lo = ds
        .x()
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = ds
        .x()
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(lo >= 0.1 && hi <= 1.0);
}

#[test]
fn bundled_fixture_counts_match_raw_scan() {
    let dir = fixture_dir();
    let counts = scan_label_counts(&dir);
    assert_eq!((counts[2], counts[5]), (500, 500));
    check_dir(&dir);
}

#[test]
fn bundled_fixture_prefixes_are_balanced() {
    let ds = load_mnist_task(
        &fixture_dir(),
        &MnistTaskSpec {
            limit: Some(64),
            downsample: Some(8),
            ..MnistTaskSpec::default()
        },
    )
    .unwrap();
    assert_eq!(ds.labels_balanced(), (32, 32));
    assert_eq!(ds.dim(), 64);
    let rep = check_assumption2(&ds, 0.0);
    assert!(rep.min_pairwise_angle > 0.0);
}

/// Full training set, when available: set `IBPLAB_MNIST_DIR` to a directory
/// holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
#[test]
fn full_mnist_counts_match_raw_scan() {
    let Ok(dir) = std::env::var("IBPLAB_MNIST_DIR") else {
        eprintln!("IBPLAB_MNIST_DIR not set; skipping full MNIST check");
        return;
    };
    let dir = PathBuf::from(dir);
    let counts = scan_label_counts(&dir);
    eprintln!("digit 2: {}, digit 5: {}", counts[2], counts[5]);
    check_dir(&dir);
}
