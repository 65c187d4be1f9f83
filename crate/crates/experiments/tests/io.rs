use std::fs;

use bstt::regression::{relative_error, FitOptions};
use bstt::{Dictionary, SpaceDescriptor};
use bstt_experiments::{
    emit_study, fit_space, ingest_samples, read_samples, run_gaussian_study, run_riccati_study,
    trial_seeds, write_samples_csv, Error, ExperimentConfig, Format,
};
use nalgebra::DMatrix;

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let points = DMatrix::from_row_slice(
        3,
        2,
        &[0.1, -1.0 / 3.0, 1e-300, 0.7, -0.999_999_999_999_999_9, 2.0],
    );
    let y = [1.0 / 7.0, -5e-17, 123456.789];
    write_samples_csv(&path, &points, &y).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x_1,x_2,y\n"));
    let back = read_samples(&path, Format::Csv).unwrap();
    assert_eq!(back.points, points);
    assert_eq!(back.targets, y);
}

#[test]
fn csv_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x_1,x_2,y\n0.1,0.2,1\n0.3,0.4,0.5,9\n").unwrap();
    match read_samples(&path, Format::Csv) {
        Err(Error::Dimension {
            row,
            line,
            found,
            expected,
        }) => {
            assert_eq!((row, line, found, expected), (2, 3, 4, 3));
        }
        other => panic!("{other:?}"),
    }
    fs::write(&path, "x_1,x_2,y\n0.1,0.2\n").unwrap();
    assert!(matches!(
        read_samples(&path, Format::Csv),
        Err(Error::Dimension { row: 1, .. })
    ));
    fs::write(&path, "x_1,x_2,y\n0.1,0.2,1\n0.1,NaN,1\n").unwrap();
    match read_samples(&path, Format::Csv) {
        Err(e @ Error::Parse { line: 3, .. }) => assert!(e.to_string().contains("line 3")),
        other => panic!("{other:?}"),
    }
    fs::write(&path, "x_1,x_2,y\n0.1,abc,1\n").unwrap();
    assert!(matches!(
        read_samples(&path, Format::Csv),
        Err(Error::Parse { line: 2, .. })
    ));
    fs::write(&path, "a,b,y\n0.1,0.2,1\n").unwrap();
    assert!(matches!(
        read_samples(&path, Format::Csv),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn json_samples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"x": [[0.5, 1.0], [-0.25, 0.0]], "y": [2.0, 3.0]}"#,
    )
    .unwrap();
    let s = ingest_samples(
        &path,
        Format::from_path(&path),
        Dictionary::legendre(3).unwrap(),
    )
    .unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.point(1), vec![-0.25, 0.0]);
    fs::write(&path, r#"{"x": [[0.5, 1.0], [0.0]], "y": [2.0, 3.0]}"#).unwrap();
    assert!(matches!(
        read_samples(&path, Format::Json),
        Err(Error::Dimension { row: 2, .. })
    ));
    fs::write(&path, "{\"x\": [[0.5, 1.0]],\n \"y\": [oops]}").unwrap();
    assert!(matches!(
        read_samples(&path, Format::Json),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn dumped_samples_refit_to_the_same_error() {
    let dir = tempfile::tempdir().unwrap();
    let space: SpaceDescriptor = "S(d=3,g=3,rho=1)".parse().unwrap();
    let cfg = ExperimentConfig {
        spaces: vec![space],
        sample_sizes: vec![120],
        trials: 2,
        seed: 5,
        test_size: 200,
        dump_dir: Some(dir.path().to_path_buf()),
        ..ExperimentConfig::gaussian()
    };
    let res = run_gaussian_study(&cfg).unwrap();
    for rec in &res.records {
        let dict = Dictionary::legendre(4).unwrap();
        let file = |kind: &str| {
            dir.path()
                .join(format!("{kind}_d3_M120_trial{}.csv", rec.trial))
        };
        let train = ingest_samples(&file("train"), Format::Csv, dict.clone()).unwrap();
        let test = ingest_samples(&file("test"), Format::Csv, dict).unwrap();
        let opts = FitOptions {
            seed: trial_seeds(cfg.seed, 0, rec.trial).fit,
            ..Default::default()
        };
        let (model, _) = fit_space(&space, &train, &opts).unwrap();
        let err = relative_error(model.as_ref(), &test).unwrap();
        assert!((err - rec.error.unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        spaces: vec!["W(d=4,g=2)".parse().unwrap()],
        sample_sizes: vec![30, 60, 90],
        trials: 10,
        ..ExperimentConfig::riccati()
    };
    let res = run_riccati_study(&cfg).unwrap();
    let paths = emit_study(&res, &dir.path().join("out/ric")).unwrap();
    let jsonl = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(jsonl.lines().count(), 30);
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 7);
        for k in ["M", "trial", "seed", "space", "error", "sweeps", "seconds"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert!(v["seconds"].is_null());
    }
    let csv = fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.starts_with("space,M,q15,median,q85,failed\n"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&paths[2]).unwrap()).unwrap();
    assert_eq!(meta["dof"][0]["dof"], 10);
    assert_eq!(meta["metadata"]["control_penalty"], 1.0);
}
