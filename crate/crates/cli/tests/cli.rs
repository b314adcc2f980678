//! End-to-end runs of the `streamdmd` binary and snapshot file properties.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use proptest::prelude::*;
use streamdmd_cli::snapshot_file::{
    parse_snapshots, read_any, read_snapshots, write_snapshots, Dtype,
};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_streamdmd"));
    c.env_remove("STREAMDMD_TOL1")
        .env_remove("STREAMDMD_TOL2")
        .env_remove("STREAMDMD_TOL3");
    c
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    exec(args).status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes snapshots as CSV, one snapshot per line.
fn write_csv(dir: &TempDir, name: &str, columns: &[Vec<f64>]) -> PathBuf {
    let path = dir.path().join(name);
    let body: String = columns
        .iter()
        .map(|c| {
            c.iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(&path, body).unwrap();
    path
}

fn rotation_stream(n: usize, angle: f64) -> Vec<Vec<f64>> {
    let (s, c) = angle.sin_cos();
    let mut x = vec![1.0, 0.5];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x.clone());
        x = vec![c * x[0] - s * x[1], s * x[0] + c * x[1]];
    }
    out
}

/// Parses the modes table into (|lambda|, residual) rows.
fn table_rows(text: &str) -> Vec<(f64, f64)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re,im,abs,residual,amplitude"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn gray_scott_generation_has_expected_shape() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gs.sdmd");
    let o = exec(&[
        "generate",
        "gray-scott",
        "--grid",
        "96x96",
        "--steps",
        "300",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = read_any(&out).unwrap();
    assert_eq!(data.shape(), (18432, 301));
    assert!(data.iter().all(|v| v.is_finite()));
}

#[test]
fn lorenz_observable_counts() {
    let dir = TempDir::new().unwrap();
    let wide = dir.path().join("wide.sdmd");
    let plain = dir.path().join("plain.sdmd");
    assert_eq!(
        code(&[
            "generate",
            "lorenz",
            "--n0-compatible",
            "--out",
            path_str(&wide)
        ]),
        0
    );
    assert_eq!(code(&["generate", "lorenz", "--out", path_str(&plain)]), 0);
    assert_eq!(read_any(&wide).unwrap().nrows(), 6);
    assert_eq!(read_any(&plain).unwrap().nrows(), 3);
}

#[test]
fn generation_is_deterministic_and_writes_sidecar() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.sdmd");
    let b = dir.path().join("b.sdmd");
    for p in [&a, &b] {
        assert_eq!(
            code(&[
                "generate",
                "linear",
                "--m",
                "8",
                "--seed",
                "7",
                "--noise",
                "1e-3",
                "--out",
                path_str(p)
            ]),
            0
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(streamdmd_cli::commands::sidecar_path(&a)).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["generator"], "linear");
}

#[test]
fn metrics_log_has_one_line_per_added_snapshot() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.sdmd");
    let metrics = dir.path().join("m.jsonl");
    assert_eq!(
        code(&[
            "generate",
            "linear",
            "--m",
            "10",
            "--steps",
            "60",
            "--out",
            path_str(&data)
        ]),
        0
    );
    let n = read_any(&data).unwrap().ncols();
    for method in [
        "batch",
        "hwr",
        "tq",
        "chol2b",
        "one-basis",
        "one-basis-tq",
        "exp",
        "online-sm",
        "online-tq",
    ] {
        let o = exec(&[
            "stream",
            path_str(&data),
            "--method",
            method,
            "--n0",
            "14",
            "--forecast",
            "2",
            "--metrics",
            path_str(&metrics),
        ]);
        assert!(
            o.status.success(),
            "{method}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let text = std::fs::read_to_string(&metrics).unwrap();
        assert_eq!(text.lines().count(), n - 14, "{method}");
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}

#[test]
fn rotation_modes_lie_on_unit_circle() {
    let dir = TempDir::new().unwrap();
    let csv = write_csv(&dir, "rot.csv", &rotation_stream(40, 0.3));
    for method in ["batch", "hwr", "tq", "one-basis-tq", "online-chol"] {
        let o = exec(&["modes", path_str(&csv), "--method", method, "--n0", "5"]);
        assert!(
            o.status.success(),
            "{method}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let rows = table_rows(&String::from_utf8(o.stdout).unwrap());
        assert_eq!(rows.len(), 2, "{method}");
        for (abs, _) in rows {
            assert!((abs - 1.0).abs() <= 1e-8, "{method}: |lambda| = {abs}");
        }
    }
}

#[test]
fn diagonal_system_has_zero_residuals() {
    let dir = TempDir::new().unwrap();
    let rates = [0.9, 0.5, -0.3];
    let cols: Vec<Vec<f64>> = (0..10)
        .map(|k| rates.iter().map(|r: &f64| r.powi(k)).collect())
        .collect();
    let csv = write_csv(&dir, "diag.csv", &cols);
    let o = exec(&["modes", path_str(&csv), "--method", "batch", "--n0", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    for (_, residual) in rows {
        assert!(residual <= 1e-14, "residual {residual}");
    }
}

#[test]
fn mode_table_rows_follow_selection() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.sdmd");
    let table = dir.path().join("modes.csv");
    assert_eq!(
        code(&[
            "generate",
            "linear",
            "--m",
            "12",
            "--steps",
            "80",
            "--out",
            path_str(&data)
        ]),
        0
    );
    for (select, lo, hi) in [
        ("top:1", 1, 2),
        ("top:3", 3, 4),
        ("top:6", 6, 7),
        ("all", 12, 12),
    ] {
        let o = exec(&[
            "stream",
            path_str(&data),
            "--method",
            "one-basis-tq",
            "--select",
            select,
            "--modes",
            path_str(&table),
        ]);
        assert!(
            o.status.success(),
            "{select}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let text = std::fs::read_to_string(&table).unwrap();
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').take(2).map(|v| v.parse().unwrap()).collect();
                (f[0], f[1])
            })
            .collect();
        assert!(
            (lo..=hi).contains(&rows.len()),
            "{select}: {} rows",
            rows.len()
        );
        // a complex eigenvalue is listed together with its conjugate
        for &(re, im) in rows.iter().filter(|r| r.1 != 0.0) {
            assert!(
                rows.iter()
                    .any(|&(r2, i2)| (r2 - re).abs() <= 1e-12 && (i2 + im).abs() <= 1e-12),
                "{select}: missing conjugate of {re}+{im}i"
            );
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["selfcheck", "--tol1", "0.5", "--tol2", "0.1"]), 2);
    assert_eq!(code(&["selfcheck", "--only", "11"]), 2);
    assert_eq!(
        code(&["generate", "gray-scott", "--du", "-1", "--out", "/dev/null"]),
        2
    );
    assert_eq!(code(&["stream", "x.sdmd", "--bogus"]), 2);
    let dir = TempDir::new().unwrap();
    let csv = write_csv(&dir, "rot.csv", &rotation_stream(20, 0.3));
    assert_eq!(code(&["stream", path_str(&csv), "--method", "nope"]), 2);
    assert_eq!(
        code(&["stream", path_str(&csv), "--n0", "5", "--max-rank", "1"]),
        2
    );
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.sdmd");
    assert_eq!(code(&["stream", path_str(&missing)]), 3);

    let garbage = dir.path().join("garbage.sdmd");
    std::fs::write(&garbage, b"not a snapshot file").unwrap();
    assert_eq!(code(&["stream", path_str(&garbage)]), 3);

    let mut cols = rotation_stream(20, 0.3);
    cols[7][1] = f64::NAN;
    let nan = write_csv(&dir, "nan.csv", &cols);
    assert_eq!(code(&["stream", path_str(&nan), "--n0", "5"]), 3);

    let zeros = write_csv(&dir, "zero.csv", &vec![vec![0.0; 3]; 12]);
    assert_eq!(
        code(&["modes", path_str(&zeros), "--method", "batch", "--n0", "5"]),
        3
    );

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3,4,5\n").unwrap();
    assert_eq!(code(&["stream", path_str(&ragged)]), 3);
}

#[test]
fn numerical_failure_in_batch_modes_exits_4() {
    // widely separated scales make the triangular factor fail the conditioning test
    let dir = TempDir::new().unwrap();
    let cols: Vec<Vec<f64>> = (0..12)
        .map(|k| vec![0.9f64.powi(k), 1e-6 * 0.5f64.powi(k)])
        .collect();
    let csv = write_csv(&dir, "scales.csv", &cols);
    let o = exec(&[
        "modes",
        path_str(&csv),
        "--method",
        "one-basis-tq",
        "--n0",
        "5",
        "--tol3",
        "0.5",
    ]);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn selfcheck_subset_passes() {
    let o = exec(&["selfcheck", "--only", "6,9"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.starts_with("[PASS]")).count(),
        2,
        "{text}"
    );
}

#[test]
fn f32_file_rounds_each_value() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("single.sdmd");
    let data = DMatrix::from_fn(3, 4, |i, j| 0.1 * (i + 3 * j) as f64 + 1.0 / 3.0);
    write_snapshots(&p, &data, Dtype::F32).unwrap();
    let (back, dtype) = read_snapshots(&p).unwrap();
    assert_eq!(dtype, Dtype::F32);
    assert_eq!(back, data.map(|v| f64::from(v as f32)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_round_trip_is_bitwise(
        m in 1usize..12,
        n in 1usize..12,
        seed in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 144),
    ) {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("rt.sdmd");
        let data = DMatrix::from_fn(m, n, |i, j| seed[i * 12 + j]);
        write_snapshots(&p, &data, Dtype::F64).unwrap();
        let (back, dtype) = read_snapshots(&p).unwrap();
        prop_assert_eq!(dtype, Dtype::F64);
        prop_assert_eq!(back.shape(), data.shape());
        for (a, b) in back.iter().zip(data.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        let bytes = std::fs::read(&p).unwrap();
        prop_assert_eq!(parse_snapshots(&bytes).unwrap().0, data);
    }
}
