use cirlab::cli::run_with_output;

fn run(line: &str) -> (i32, String) {
    let argv: Vec<String> = line.split_whitespace().map(String::from).collect();
    let mut out = Vec::new();
    let code = run_with_output(&argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn stdout_is_identical_across_thread_counts() {
    for cmd in [
        "convergence --delta 0.5 --b 0 --z0 0 --N 4,8,16 --reps 300 --refine 8 --seed 9 --format csv",
        "lower-bound --delta 0.5 --b 0 --z0 0 --N 4,8,16 --reps 300 --fine-factor 8 --variant single-cell --seed 9 --format json",
        "moments --delta 0.5 --b 1 --z0 2 --reps 2000 --seed 9",
    ] {
        let (c1, a) = run(&format!("cirlab --threads 1 {cmd}"));
        let (c8, b) = run(&format!("cirlab --threads 8 {cmd}"));
        assert_eq!((c1, c8), (0, 0), "{cmd}");
        assert_eq!(a, b, "{cmd}");
    }
}

#[test]
fn csv_and_json_written_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rate.csv");
    let (code, _) = run(&format!(
        "cirlab convergence --a 0.25 --b 0 --sigma 2 --x0 0 --T 1 --N 4,8,16,32 --reps 200 --refine 8 --out {}",
        csv.display()
    ));
    assert_eq!(code, 0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("n_grid,reps,mean_abs_error,std_error\n"));
    assert_eq!(table.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert!(json["fit"]["slope"].is_number());
    assert!(json["runtime_seconds"].is_null());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run("cirlab convergence --a 0.25 --delta 1").0, 1);
    assert_eq!(run("cirlab convergence --delta 1 --N 16,8").0, 1);
    assert_eq!(run("cirlab frobnicate").0, 1);
    assert_eq!(run("cirlab --threads 0 moments --delta 1").0, 1);
}
