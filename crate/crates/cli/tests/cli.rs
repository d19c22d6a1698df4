use std::path::Path;
use std::process::{Command, Output};

fn gridknn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridknn"))
        .args(args)
        .output()
        .expect("spawn gridknn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn generate(dir: &Path, d: &str, count: &str) {
    let out = gridknn(&[
        "generate", "--d", d, "--count", count, "--distribution", "power-law", "--seed", "9", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "2", "2000");
    let out_dir = tmp.path().join("run");
    let out = gridknn(&[
        "run",
        "--method", "kdann",
        "--k", "5",
        "--n", "3",
        "--d", "2",
        "--train", data.join("data.train.tsv").to_str().unwrap(),
        "--input", data.join("data.input.tsv").to_str().unwrap(),
        "--truth", data.join("data.truth.tsv").to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(),
        "--emit-knn",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let classes = read(&out_dir.join("classifications.tsv"));
    assert!(classes.starts_with("# point_id\tclass\n"));
    assert_eq!(classes.lines().count(), 1 + 1800);
    let knn = read(&out_dir.join("knn.tsv"));
    let first = knn.lines().nth(1).unwrap();
    assert_eq!(first.split('\t').nth(1).unwrap().split(':').count(), 5);

    let timings = read(&out_dir.join("timings.csv"));
    let mut lines = timings.lines();
    assert_eq!(lines.next(), Some("phase,method,k,n,d,elapsed_ms"));
    let phases: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        phases,
        ["distribution", "merge", "primitive", "update", "integrate", "classify", "total"]
    );
    assert!(timings.contains("\nprimitive,kdann,5,3,2,"));

    assert!(read(&out_dir.join("merge_stats.csv")).starts_with("elapsed_ms,merged_cells,pct,max_region\n"));
    let quality = read(&out_dir.join("quality.csv"));
    assert!(quality.lines().last().unwrap().starts_with("average,"));
}

#[test]
fn radius_growth_writes_no_merge_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = gridknn(&[
        "run", "--k", "3", "--cells-per-axis", "6", "--d", "2", "--count", "500", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.join("merge_stats.csv").exists());
    assert!(!out_dir.join("knn.tsv").exists());
    let timings = read(&out_dir.join("timings.csv"));
    // n is blank for a grid that is not a power of two
    assert!(timings.contains("\ndistribution,kdann+,3,,2,"));
}

#[test]
fn fractional_granularity_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gridknn(&[
        "run", "--method", "kdann", "--n", "5.5", "--k", "5", "--d", "2", "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn kdann_needs_power_of_two_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gridknn(&[
        "run", "--method", "kdann", "--cells-per-axis", "6", "--k", "5", "--d", "2", "--count", "300",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
}

#[test]
fn fraction_samples_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = gridknn(&[
        "run", "--k", "3", "--n", "3", "--d", "2", "--count", "1000", "--fraction", "0.2", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read(&out_dir.join("classifications.tsv")).lines().count(), 1 + 180);
}

#[test]
fn verify_agrees_and_catches_injected_faults() {
    for method in ["kdann", "kdann+"] {
        let ok = gridknn(&[
            "verify", "--method", method, "--k", "5", "--n", "3", "--d", "3", "--count", "1500",
            "--distribution", "power-law", "--seed", "4",
        ]);
        assert_eq!(ok.status.code(), Some(0));
        assert!(stdout(&ok).starts_with("OK n_points=1350"), "{}", stdout(&ok));
    }
    let bad = gridknn(&[
        "verify", "--k", "5", "--n", "3", "--d", "3", "--count", "1500", "--inject-fault", "skip-overlap",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).starts_with("DIVERGED point_id="));
}

#[test]
fn raw_data_is_normalized_with_sidecar_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("scan.train.tsv"), "1\t-10\t100\tA\n2\t10\t300\tB\n3\t-9\t110\tA\n").unwrap();
    std::fs::write(dir.join("scan.input.tsv"), "7\t-8\t120\n8\t9\t290\n").unwrap();
    let base = ["run", "--k", "1", "--n", "1", "--d", "2", "--out"];
    let out_dir = dir.join("run");
    let train = dir.join("scan.train.tsv");
    let input = dir.join("scan.input.tsv");
    let mut args: Vec<&str> = base.to_vec();
    args.extend([
        out_dir.to_str().unwrap(),
        "--train",
        train.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    let failed = gridknn(&args);
    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("bounds"));

    std::fs::write(dir.join("scan.bounds.tsv"), "# axis\tmin\tmax\n0\t-10\t10\n1\t100\t300\n").unwrap();
    let out = gridknn(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&out_dir.join("classifications.tsv")), "# point_id\tclass\n7\tA\n8\tB\n");
}

#[test]
fn quality_command() {
    let tmp = tempfile::tempdir().unwrap();
    let pred = tmp.path().join("pred.tsv");
    let truth = tmp.path().join("truth.tsv");
    std::fs::write(&pred, "# point_id\tclass\n1\tA\n2\tA\n3\tA\n4\tA\n").unwrap();
    std::fs::write(&truth, "# point_id\tclass\n1\tA\n2\tB\n3\tA\n4\tB\n").unwrap();
    let out = gridknn(&[
        "quality", "--classifications", pred.to_str().unwrap(), "--truth", truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "class,true_positive,false_negative,false_positive,true_negative\n\
         A,100.0000,0.0000,100.0000,0.0000\n\
         B,0.0000,100.0000,0.0000,100.0000\n\
         average,50.0000,50.0000,50.0000,50.0000\n"
    );
}

#[test]
fn bench_csv_is_reproducible_outside_timing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = tmp.path().join(name);
        let out = gridknn(&[
            "bench", "--method", "kdann,kdann+", "--distribution", "uniform,power-law", "--d", "2",
            "--n", "2,3", "--k", "1,4", "--count", "800", "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = read(&path);
        let header: Vec<String> = text.lines().next().unwrap().split(',').map(String::from).collect();
        text.lines()
            .map(|l| {
                l.split(',')
                    .zip(&header)
                    .filter(|(_, h)| !h.ends_with("_ms"))
                    .map(|(f, _)| f)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
    };
    let a = run("a.csv");
    assert_eq!(a.len(), 1 + 2 * 2 * 2 * 2);
    assert_eq!(a, run("b.csv"));
}

#[test]
fn generated_data_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    generate(&tmp.path().join("a"), "3", "500");
    generate(&tmp.path().join("b"), "3", "500");
    for f in ["data.train.tsv", "data.input.tsv", "data.truth.tsv"] {
        assert_eq!(read(&tmp.path().join("a").join(f)), read(&tmp.path().join("b").join(f)));
    }
}
