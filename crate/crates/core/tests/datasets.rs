//! Shape of the bundled datasets and the CSV reader's edge cases.

mod common;

use common::data_path;
use figmn::data::{load_csv, read_csv, ClassColumn, DataError};

#[test]
fn bundled_dataset_shapes() {
    // (file, rows, features, classes present)
    let expected = [
        ("iris.csv", 150, 4, 3),
        ("glass.csv", 214, 9, 6),
        ("pima-diabetes.csv", 768, 8, 2),
        ("ionosphere.csv", 351, 34, 2),
        ("two-spirals.csv", 194, 2, 2),
    ];
    for (file, n, d, k) in expected {
        let ds = load_csv(data_path(file), &ClassColumn::Last).unwrap();
        assert_eq!((ds.len(), ds.n_features(), ds.n_classes()), (n, d, k), "{file}");
        assert!(ds.class_counts().iter().all(|&c| c > 0));
    }
}

#[test]
fn class_column_by_name_and_index() {
    let text = "label,x,y\nb,1,2\na,3,4\nb,5,6\n";
    let by_name = read_csv(text.as_bytes(), "t", &"label".parse().unwrap()).unwrap();
    let by_index = read_csv(text.as_bytes(), "t", &"0".parse().unwrap()).unwrap();
    assert_eq!(by_name.labels, vec![0, 1, 0]);
    assert_eq!(by_name.features, by_index.features);
    assert_eq!(by_name.schema.classes, vec!["b", "a"]);
}

#[test]
fn missing_values_drop_the_row() {
    let text = "x,y,c\n1,2,a\n?,3,b\n4,,a\n5,6,b\n";
    let ds = read_csv(text.as_bytes(), "t", &ClassColumn::Last).unwrap();
    assert_eq!(ds.len(), 2);
}

#[test]
fn nominal_features_are_one_hot() {
    let text = "colour,x,c\nred,1,a\nblue,2,b\nred,3,a\n";
    let ds = read_csv(text.as_bytes(), "t", &ClassColumn::Last).unwrap();
    assert_eq!(ds.n_features(), 3);
    assert_eq!(ds.features[1], vec![0.0, 1.0, 2.0]);
}

#[test]
fn mixed_column_is_a_parse_error() {
    let text = "x,c\n1,a\nfoo,b\n";
    match read_csv(text.as_bytes(), "t", &ClassColumn::Last) {
        Err(DataError::Parse { value, .. }) => assert_eq!(value, "foo"),
        other => panic!("{other:?}"),
    }
}
