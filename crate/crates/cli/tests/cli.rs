use std::net::UdpSocket;
use std::process::{Command, Output, Stdio};

fn tcpfwd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcpfwd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCENARIO: &str = r#"
name = "cli-small"
protocols = ["tcp-forward", "arq-baseline"]
workload_bytes = 8000
time_limit_s = 30

[sweep]
variable = "loss_rate"
values = [0.0, 0.2]

[transport]
mss = 400
"#;

#[test]
fn lists_presets() {
    let o = tcpfwd(&["sweep", "--list-presets"]);
    assert!(o.status.success());
    let names: Vec<_> = stdout(&o).lines().map(str::to_owned).collect();
    assert!(names.contains(&"throughput-vs-loss".to_owned()));
    assert_eq!(names.len(), 5);
}

#[test]
fn sweep_writes_csv_file_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, SCENARIO).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = tcpfwd(&["sweep", "--scenario", scenario.to_str().unwrap(), "-o", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tcpfwd(&["sweep", "--scenario", scenario.to_str().unwrap(), "--sequential", "-o", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.starts_with("schema_version,scenario,protocol,"));

    let o = tcpfwd(&["sweep", "--scenario", scenario.to_str().unwrap(), "--seed", "77"]);
    assert!(o.status.success());
    assert_ne!(stdout(&o), text);
    assert!(stdout(&o).contains(",77,"));
}

#[test]
fn bad_scenario_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, SCENARIO.replace("[0.0, 0.2]", "[]")).unwrap();
    let o = tcpfwd(&["sweep", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep values"), "{}", stderr(&o));

    let o = tcpfwd(&["sweep", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no-such-preset"));

    let o = tcpfwd(&["sweep"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn codec_bench_prints_rows() {
    let o = tcpfwd(&["codec-bench", "--sizes", "2,8", "--repetitions", "3", "--symbol-len", "32", "--cpu", "embedded"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,2,32,"));
    assert!(lines[2].starts_with("1,8,32,"));

    let o = tcpfwd(&["codec-bench", "--sizes", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = tcpfwd(&["codec-bench", "--cpu", "fast"]);
    assert!(!o.status.success());
}

#[test]
fn send_and_recv_transfer_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    let output = dir.path().join("out.bin");
    let metrics = dir.path().join("m.csv");
    let data: Vec<u8> = (0..200_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
    std::fs::write(&input, &data).unwrap();

    // reserve a free port for the receiver
    let port = UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let recv = Command::new(env!("CARGO_BIN_EXE_tcpfwd"))
        .args(["recv", "--local", &addr, "-o", output.to_str().unwrap(), "--impair-loss", "0.1", "--seed", "3"])
        .args(["--deadline-s", "20", "--metrics", metrics.to_str().unwrap()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let send = tcpfwd(&[
        "send",
        "--remote",
        &addr,
        "--local",
        "127.0.0.1:0",
        "-i",
        input.to_str().unwrap(),
        "--impair-loss",
        "0.1",
        "--deadline-s",
        "20",
    ]);
    assert!(send.status.success(), "{}", stderr(&send));
    let recv = recv.wait_with_output().unwrap();
    assert!(recv.status.success(), "{}", stderr(&recv));
    assert_eq!(std::fs::read(&output).unwrap(), data);
    let m = std::fs::read_to_string(&metrics).unwrap();
    assert!(m.starts_with("completed,"));
    assert_eq!(m.lines().count(), 2);
}

#[test]
fn recv_gives_up_without_a_sender() {
    let o = tcpfwd(&["recv", "--local", "127.0.0.1:0", "--deadline-s", "0.3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error:"));
}
