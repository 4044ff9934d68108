use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use regionwise_core::quantify::format_g6;
use regionwise_core::synth::{make_phantom, CohortSpec};
use regionwise_core::volio::write_nifti;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regionwise")).args(args).env_remove("REGIONWISE_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn synth(dir: &Path, spec: &CohortSpec) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let spec_path = dir.join("spec_in.json");
    fs::write(&spec_path, serde_json::to_string(spec).unwrap()).unwrap();
    let out_dir = dir.join("synth");
    let out = run(&["synth", "--spec", &s(&spec_path), "--out-dir", &s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    out_dir
}

fn quantify(manifest: &Path, report: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["quantify", "--manifest", manifest.to_str().unwrap(), "--out-report", report.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

/// A default-sized synthetic cohort, generated and quantified once.
fn shared() -> &'static (TempDir, PathBuf, PathBuf) {
    static CELL: OnceLock<(TempDir, PathBuf, PathBuf)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let synth_dir = synth(dir.path(), &CohortSpec { seed: 5, ..CohortSpec::default() });
        let report = dir.path().join("report.csv");
        let out = quantify(&synth_dir.join("manifest.csv"), &report, &[]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        (dir, synth_dir, report)
    })
}

fn small_spec(seed: u64) -> CohortSpec {
    CohortSpec { n_per_class: [4, 4, 4], dims: [24, 24, 24], seed, ..CohortSpec::default() }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn register_self_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("phantom.nii.gz");
    write_nifti(&make_phantom([32, 32, 32], [1.0; 3], 4).unwrap(), &p).unwrap();
    let t = dir.path().join("t.txt");
    let out = run(&["register", "--moving", &s(&p), "--fixed", &s(&p), "--out-transform", &s(&t)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=true"));
    let m: Vec<f64> = fs::read_to_string(&t).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(m.len(), 16);
    for (i, v) in m.iter().enumerate() {
        let want = if i % 5 == 0 { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-6, "entry {i} = {v}");
    }

    let missing = dir.path().join("nope.nii");
    let out = run(&["register", "--moving", &s(&missing), "--fixed", &s(&p), "--out-transform", &s(&t)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope.nii"), "{}", stderr(&out));
}

#[test]
fn quantify_matches_planted_truth() {
    let (_, synth_dir, report) = shared();
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(synth_dir.join("ground_truth.json")).unwrap()).unwrap();
    let vv = truth["voxel_volume_mm3"].as_f64().unwrap();
    let rows = csv_rows(report);
    assert_eq!(rows[0][0], "subject_id");
    let subjects = truth["subjects"].as_array().unwrap();
    assert_eq!(rows.len() - 1, subjects.len());
    for (row, subj) in rows[1..].iter().zip(subjects) {
        assert_eq!(row[0], subj["subject_id"].as_str().unwrap());
        assert_eq!(row[2], "0");
        for (r, c) in subj["planted_voxels"].as_array().unwrap().iter().enumerate() {
            assert_eq!(row[3 + r], format_g6(c.as_u64().unwrap() as f64 * vv), "{} region {}", row[0], r + 1);
        }
    }
}

#[test]
fn quantify_keep_going_and_single_modality() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), &small_spec(8));
    let manifest = synth_dir.join("manifest.csv");
    let fused = dir.path().join("fused.csv");
    assert_eq!(code(&quantify(&manifest, &fused, &[])), 0);

    // FLAIR only: drop the T1 column
    let text = fs::read_to_string(&manifest).unwrap();
    let flair_only: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(3);
            f.join(",") + "\n"
        })
        .collect();
    let m1 = synth_dir.join("flair_only.csv");
    fs::write(&m1, flair_only).unwrap();
    let single = dir.path().join("single.csv");
    assert_eq!(code(&quantify(&m1, &single, &[])), 0);
    assert_eq!(fs::read(&fused).unwrap(), fs::read(&single).unwrap());

    fs::write(synth_dir.join("subjects/sub-0002_flair_prob.nii.gz"), b"not a volume").unwrap();
    let partial = dir.path().join("partial.csv");
    let out = quantify(&manifest, &partial, &["--keep-going"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("sub-0002"));
    let rows = csv_rows(&partial);
    assert_eq!(rows.len() - 1, 11);
    assert!(rows.iter().all(|r| r[0] != "sub-0002"));

    let strict = dir.path().join("strict.csv");
    let out = quantify(&manifest, &strict, &[]);
    assert_ne!(code(&out), 0);
    assert!(!strict.exists());
}

#[test]
fn cohort_outputs_are_deterministic_and_regional_wins() {
    let (dir, synth_dir, report) = shared();
    let manifest = synth_dir.join("manifest.csv");
    let outs: Vec<PathBuf> = ["c1", "c2"].iter().map(|n| dir.path().join(n)).collect();
    for o in &outs {
        let out = run(&[
            "cohort",
            "--report",
            &s(report),
            "--manifest",
            &s(&manifest),
            "--task",
            "ad_cn",
            "--seed",
            "3",
            "--out-dir",
            &s(o),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let mut names: Vec<_> = fs::read_dir(&outs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in &names {
        assert_eq!(fs::read(outs[0].join(n)).unwrap(), fs::read(outs[1].join(n)).unwrap(), "{n:?}");
    }

    let auc = |kind: &str| -> f64 {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(outs[0].join(format!("ad_cn_{kind}.json"))).unwrap()).unwrap();
        v["pooled_auc"].as_f64().unwrap()
    };
    assert!(auc("regional") > auc("global"), "{} vs {}", auc("regional"), auc("global"));
    let summary = fs::read_to_string(outs[0].join("summary.csv")).unwrap();
    assert!(summary.starts_with("task,features,n_subjects,pooled_auc,in_sample_auc,significant_features\n"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn cohort_rejects_tiny_classes() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), &CohortSpec { n_per_class: [1, 1, 1], dims: [24, 24, 24], ..CohortSpec::default() });
    let manifest = synth_dir.join("manifest.csv");
    let report = dir.path().join("r.csv");
    assert_eq!(code(&quantify(&manifest, &report, &[])), 0);
    let out = run(&["cohort", "--report", &s(&report), "--manifest", &s(&manifest), "--out-dir", &s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn bland_altman_exact_and_noisy() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = synth(dir.path(), &CohortSpec { reference_noise_sd: 0.0, ..small_spec(2) });
    let manifest = synth_dir.join("manifest.csv");
    let report = dir.path().join("r.csv");
    assert_eq!(code(&quantify(&manifest, &report, &[])), 0);
    let (csv, svg) = (dir.path().join("ba.csv"), dir.path().join("ba.svg"));
    let out = run(&[
        "bland-altman",
        "--report",
        &s(&report),
        "--manifest",
        &s(&manifest),
        "--out-csv",
        &s(&csv),
        "--out-svg",
        &s(&svg),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for row in &csv_rows(&csv)[1..] {
        assert_eq!(&row[5..], ["0", "0", "0", "0"]);
    }
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    // no reference column at all
    let stripped: String =
        fs::read_to_string(&manifest).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    let m2 = synth_dir.join("noref.csv");
    fs::write(&m2, stripped).unwrap();
    let out =
        run(&["bland-altman", "--report", &s(&report), "--manifest", &s(&m2), "--out-csv", &s(&csv), "--out-svg", &s(&svg)]);
    assert_eq!(code(&out), 2);

    let (_, synth_dir, report) = shared();
    let out = run(&[
        "bland-altman",
        "--report",
        &s(report),
        "--manifest",
        &s(&synth_dir.join("manifest.csv")),
        "--out-csv",
        &s(&csv),
        "--out-svg",
        &s(&svg),
    ]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&csv);
    let (lo, hi): (f64, f64) = (rows[1][7].parse().unwrap(), rows[1][8].parse().unwrap());
    let inside = rows[1..].iter().filter(|r| (lo..=hi).contains(&r[5].parse::<f64>().unwrap())).count();
    let frac = inside as f64 / (rows.len() - 1) as f64;
    assert!((0.9..=1.0).contains(&frac), "{frac}");
}

#[test]
fn hist_counts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let header = "subject_id,global_mm3,outside_mm3,".to_string()
        + &(1..=34).map(|r| format!("region_{r:02}_mm3")).collect::<Vec<_>>().join(",");
    let zeros = vec!["0"; 34].join(",");
    let write = |name: &str, globals: &[&str]| {
        let body: String = globals.iter().enumerate().map(|(i, g)| format!("s{i},{g},{g},{zeros}\n")).collect();
        let p = dir.path().join(name);
        fs::write(&p, format!("{header}\n{body}")).unwrap();
        p
    };
    let a = write("a.csv", &["1", "12", "25"]);
    let b = write("b.csv", &["3", "4"]);
    let svg = dir.path().join("h.svg");
    let out = run(&["hist", "--report", &s(&a), &s(&b), "--bin-width", "10", "--out-svg", &s(&svg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("h.csv"));
    assert_eq!(rows[0], ["series", "bin_low_mm3", "bin_high_mm3", "count"]);
    let total = |series: &str| rows[1..].iter().filter(|r| r[0] == series).map(|r| r[3].parse::<u64>().unwrap()).sum::<u64>();
    assert_eq!((total("a"), total("b")), (3, 2));
    assert_eq!(rows.len() - 1, 2 * 3);
    assert!(fs::read_to_string(&svg).unwrap().contains("a (n = 3)"));

    let out = run(&["hist", "--report", &s(&a), "--bin-width", "0", "--out-svg", &s(&svg)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn synth_is_deterministic_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(&dir.path().join("a"), &small_spec(21));
    let b = synth(&dir.path().join("b"), &small_spec(21));
    let rows = csv_rows(&a.join("manifest.csv"));
    assert_eq!(rows.len() - 1, 12);
    for f in ["manifest.csv", "ground_truth.json", "spec.json", "atlas_labels.nii.gz", "subjects/sub-0005_flair_prob.nii.gz"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // the written spec regenerates the same cohort
    let c = dir.path().join("c");
    let out = run(&["synth", "--spec", &s(&a.join("spec.json")), "--out-dir", &s(&c)]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(a.join("ground_truth.json")).unwrap(), fs::read(c.join("ground_truth.json")).unwrap());

    let out = run(&["synth", "--out-dir", &s(&dir.path().join("d")), "--spec", &s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&out), 1);
}
