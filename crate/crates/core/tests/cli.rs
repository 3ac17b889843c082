use ghz_detect::cli::run;
use ghz_detect::envelope::eta_star_of;
use ghz_detect::rational::Rational;
use num::BigInt;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("ghz-detect").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn records(csv_text: &str) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    (header, reader.records().map(Result::unwrap).collect())
}

fn exact(header: &[String], row: &csv::StringRecord, name: &str) -> Rational {
    let col = |suffix: &str| {
        let key = format!("{name}_{suffix}");
        let k = header.iter().position(|h| *h == key).unwrap();
        row[k].parse::<BigInt>().unwrap()
    };
    Rational::new(col("num"), col("den"))
}

#[test]
fn threshold_csv_recomputes_exactly() {
    let (code, out, _) = invoke(&["threshold", "--n", "3,4", "--m", "3,5", "--v", "0.8"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("# ghz-detect/threshold v1\n"));
    let (header, rows) = records(&out);
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let n: usize = row[0].parse().unwrap();
        let m: usize = row[1].parse().unwrap();
        let (v, x, y) = (exact(&header, row, "v"), exact(&header, row, "x"), exact(&header, row, "y"));
        let eta = eta_star_of(n, m, &v, &x, &y).unwrap();
        assert_eq!(eta, exact(&header, row, "eta_star"));
    }
}

#[test]
fn json_mirrors_csv() {
    let args = ["sweep", "--n", "3", "--m", "5", "--v-grid", "0.6:1:0.1"];
    let (_, csv_out, _) = invoke(&args);
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let (code, json_out, _) = invoke(&json_args);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    assert_eq!(doc["schema"], "ghz-detect/sweep v1");
    let (header, rows) = records(&csv_out);
    let json_rows = doc["rows"].as_array().unwrap();
    assert_eq!(json_rows.len(), rows.len());
    for (jr, row) in json_rows.iter().zip(&rows) {
        let keys: Vec<&String> = jr.as_object().unwrap().keys().collect();
        assert_eq!(keys, header.iter().collect::<Vec<_>>());
        let eta_float = jr["eta_star"].as_f64().unwrap();
        let eta = exact(&header, row, "eta_star");
        assert!((eta_float - ghz_detect::rational::to_f64(&eta)).abs() < 1e-12);
        assert_eq!(jr["eta_star_num"].as_str().unwrap(), eta.numer().to_string());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|k| dir.path().join(format!("lines{k}.csv"))).collect();
    for p in &paths {
        let (code, out, _) = invoke(&["lines", "--n", "3", "--m", "4,5", "--out", p.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let (_, stdout_run, _) = invoke(&["lines", "--n", "3", "--m", "4,5"]);
    assert_eq!(a, stdout_run.as_bytes());
}

#[test]
fn exact_sweep_covers_unit_interval() {
    let (code, out, _) = invoke(&["sweep", "--n", "4", "--m", "3", "--exact"]);
    assert_eq!(code, 0);
    let (header, rows) = records(&out);
    let first = exact(&header, &rows[0], "v_lo");
    let last = exact(&header, rows.last().unwrap(), "v_hi");
    assert!(first < Rational::from_integer(1.into()));
    assert_eq!(last, Rational::from_integer(1.into()));
    for pair in rows.windows(2) {
        assert_eq!(exact(&header, &pair[0], "v_hi"), exact(&header, &pair[1], "v_lo"));
    }
}

#[test]
fn lines_flags_envelope_members() {
    let (_, out, _) = invoke(&["lines", "--n", "2", "--m", "3"]);
    let (header, rows) = records(&out);
    let kind = header.iter().position(|h| h == "kind").unwrap();
    let relevant = header.iter().position(|h| h == "relevant").unwrap();
    let lines: Vec<_> = rows.iter().filter(|r| &r[kind] == "line").collect();
    let vertices = rows.iter().filter(|r| &r[kind] == "vertex").count();
    let on_envelope = lines.iter().filter(|r| &r[relevant] == "true").count();
    assert_eq!(on_envelope, vertices + 1);
    assert!(lines.len() > on_envelope);
}

#[test]
fn exit_codes() {
    assert_eq!(invoke(&["threshold", "--n", "1", "--m", "3"]).0, 1);
    assert_eq!(invoke(&["threshold", "--n", "3", "--m", "3", "--v", "1.5"]).0, 1);
    assert_eq!(invoke(&["threshold", "--n", "3"]).0, 1);
    assert_eq!(invoke(&["bogus"]).0, 1);
    let (code, _, err) = invoke(&["threshold", "--n", "8", "--m", "11", "--mode", "exhaustive", "--budget", "1000"]);
    assert_eq!(code, 2);
    assert!(err.contains("budget"));
    let small = ["verify", "--suite", "local-bound", "--small-nmax", "3", "--small-mmax", "3"];
    assert_eq!(invoke(&small).0, 0);
    let mut faulty = small.to_vec();
    faulty.extend(["--perturb-y", "1/10"]);
    let (code, out, err) = invoke(&faulty);
    assert_eq!(code, 3);
    assert!(out.contains("fail"));
    assert!(err.contains("strategy:"));
}

#[test]
fn conclusion_check_reports_best() {
    let (code, out, err) = invoke(&["conclusion-check", "--m", "3,5,7"]);
    assert_eq!(code, 0);
    let (header, rows) = records(&out);
    let best = header.iter().position(|h| h == "best").unwrap();
    let winners: Vec<_> = rows.iter().filter(|r| &r[best] == "true").collect();
    assert_eq!(winners.len(), 1);
    assert_eq!(&winners[0][1], "7");
    assert!(err.contains("best m=7"));
}
