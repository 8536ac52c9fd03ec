use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_keygen-energy"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/published_rates.csv")
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn analyze_writes_table_chart_and_fleet() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = dir.path().join("fleet.toml");
    std::fs::write(
        &fleet,
        "keygens_per_year = 2.82e9\nfrom_joules_per_key = 1.093\nto_joules_per_key = 0.00761\nprice_per_kwh = 0.26\n",
    )
    .unwrap();
    let out = bin()
        .args(["analyze", "--all-results"])
        .arg(fixture())
        .arg("--out")
        .arg(dir.path())
        .arg("--fleet")
        .arg(&fleet)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = text(&out);
    assert!(stdout.contains("1093.08"), "{stdout}");
    assert!(stdout.contains("11952.00"), "{stdout}");
    assert!(stdout.contains("856."), "{stdout}");
    let written: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(written.iter().any(|n| n.ends_with(".csv")), "{written:?}");
    assert!(written.iter().any(|n| n.ends_with(".svg")), "{written:?}");
}

#[test]
fn missing_inputs_exit_with_config_code() {
    let out = bin()
        .args(["analyze", "--all-results", "/nonexistent/AllResults.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["batch", "/nonexistent/batch.txt"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_batch_line_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("batch.txt");
    std::fs::write(&file, "RSA,100\nML-KEM-512,zero\n").unwrap();
    let out = bin().arg("batch").arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_keygen_binary_exits_with_workload_code() {
    // nothing listens here; UDP sends still succeed
    let sink = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = sink.local_addr().unwrap().to_string();
    let out = bin()
        .args(["experiment", "--algorithm", "ML-KEM-512", "--iterations", "2", "--settle", "0"])
        .args(["--collector", &addr, "--keygen-binary", "/nonexistent/openssl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let mut buf = [0u8; 512];
    let mut seen = Vec::new();
    sink.set_read_timeout(Some(std::time::Duration::from_millis(200))).unwrap();
    while let Ok(n) = sink.recv(&mut buf) {
        seen.push(String::from_utf8_lossy(&buf[..n]).into_owned());
    }
    assert!(seen.first().is_some_and(|m| m.starts_with("GETREADY|")), "{seen:?}");
    assert_eq!(seen.last().map(String::as_str), Some("STOP"), "{seen:?}");
}
