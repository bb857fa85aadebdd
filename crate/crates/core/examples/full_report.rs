//! End-to-end: synthesize a cohort on disk, then run `report` on it through
//! the same entry point the binary uses.

fn main() {
    let root = std::env::temp_dir().join("hypomimia_full_report");
    let cohort = root.join("cohort");
    let report = root.join("report");
    let cohort_s = cohort.to_string_lossy().into_owned();
    let report_s = report.to_string_lossy().into_owned();
    let manifest = cohort.join("manifest.json").to_string_lossy().into_owned();

    let code = hypomimia::cli::run(["hypomimia", "synth", "--seed", "42", "--n-pd", "15", "--n-nonpd", "45", "--out", &cohort_s]);
    assert_eq!(code, 0);
    let code = hypomimia::cli::run(["hypomimia", "report", "--manifest", &manifest, "--seed", "42", "--out", &report_s]);
    assert_eq!(code, 0);

    let mut names: Vec<String> = std::fs::read_dir(&report)
        .expect("report directory")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    println!("{} contains: {}", report.display(), names.join(", "));
}
