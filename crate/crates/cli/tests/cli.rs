use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use smsl_cli::run_cli;
use smsl_core::corpus;
use smsl_core::graph::FsmGraph;
use smsl_core::smsl::parse;

fn corpus_file(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(name).to_string_lossy().into_owned()
}

fn smsl(args: &[&str], input: &str) -> (i32, String, String) {
    let mut argv = vec!["smsl"];
    argv.extend_from_slice(args);
    let mut stdin = input.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let status = run_cli(argv, &mut stdin, &mut out, &mut err);
    (status, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Hop counts from `from` by breadth-first search.
fn bfs(graph: &FsmGraph, from: &str) -> BTreeMap<String, usize> {
    let mut dist = BTreeMap::from([(from.to_string(), 0)]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(s) = queue.pop_front() {
        for e in graph.edges().iter().filter(|e| e.src() == s) {
            if !dist.contains_key(&e.dst) {
                dist.insert(e.dst.clone(), dist[&s] + 1);
                queue.push_back(e.dst.clone());
            }
        }
    }
    dist
}

#[test]
fn validate_counts_registration() {
    let (status, out, _) = smsl(&["validate", &corpus_file("registration.smsl")], "");
    assert_eq!(status, 0);
    assert_eq!(out, "ok: 1 branch, 8 states, 42 operations\n");
    let (status, out, _) = smsl(&["validate", &corpus_file("hanoi.smsl")], "");
    assert_eq!((status, out.as_str()), (0, "ok: 1 branch, 27 states, 78 operations\n"));
}

#[test]
fn validate_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.smsl");
    std::fs::write(&path, r#"{"SB1": {"State_a": {"Op": "State_b"}}}"#).unwrap();
    let (status, out, _) = smsl(&["validate", path.to_str().unwrap()], "");
    assert_eq!(status, 1);
    assert!(out.contains("MissingTarget"), "{out}");
    assert!(out.ends_with("invalid: 1 error\n"), "{out}");

    std::fs::write(&path, "{ not smsl").unwrap();
    let (status, _, err) = smsl(&["validate", path.to_str().unwrap()], "");
    assert_eq!(status, 1);
    assert!(err.starts_with("smsl: "));
}

#[test]
fn hanoi_plan_has_seven_hops() {
    let (status, out, _) =
        smsl(&["plan", &corpus_file("hanoi.smsl"), "--branch", "SB1", "--from", "State_aaa", "--to", "State_ccc"], "");
    assert_eq!(status, 0);
    let lines: Vec<_> = out.lines().collect();
    let graph = FsmGraph::build(parse(corpus::HANOI).unwrap().branch("SB1").unwrap());
    let expected = bfs(&graph, "State_aaa")["State_ccc"];
    assert_eq!(lines.len(), expected + 1);
    assert_eq!(lines.last(), Some(&"total cost: 7"));
    let path = graph.shortest_path("State_aaa", "State_ccc").unwrap().unwrap();
    assert_eq!(out, format!("{path}\n"));
}

#[test]
fn plan_matches_library_for_all_registration_pairs() {
    let doc = parse(corpus::REGISTRATION).unwrap();
    let graph = FsmGraph::build(doc.branch("REGISTRATION").unwrap());
    let file = corpus_file("registration.smsl");
    for from in graph.nodes() {
        let dist = bfs(&graph, from);
        for to in graph.nodes() {
            let (status, out, err) = smsl(&["plan", &file, "--from", from, "--to", to], "");
            match graph.shortest_path(from, to).unwrap() {
                Some(path) => {
                    assert_eq!(status, 0);
                    assert_eq!(out, format!("{path}\n"));
                    assert_eq!(path.len(), dist[to]);
                }
                None => {
                    assert_eq!(status, 1, "{err}");
                    assert!(!dist.contains_key(to));
                }
            }
        }
    }
}

#[test]
fn plan_with_prunes() {
    let file = corpus_file("registration.smsl");
    let mut args = vec!["plan", &file, "--from", "State_0000", "--to", "State_1111"];
    let prunes: Vec<String> = FsmGraph::build(parse(corpus::REGISTRATION).unwrap().branch("REGISTRATION").unwrap())
        .edges()
        .iter()
        .filter(|e| e.op() == "Op_UsePrevReg")
        .map(|e| format!("{}:{}", e.src(), e.op()))
        .collect();
    for p in &prunes {
        args.extend(["--prune", p]);
    }
    let (status, out, _) = smsl(&args, "");
    assert_eq!(status, 0);
    assert_eq!(out.lines().count(), 5);
    assert!(!out.contains("Op_UsePrevReg"));

    let (status, _, err) = smsl(&["plan", &file, "--to", "State_1111", "--prune", "State_0000:Op_Nothing"], "");
    assert_eq!(status, 2, "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let file = corpus_file("hanoi.smsl");
    let (status, _, err) = smsl(&["plan", &file, "--branch", "SB1", "--from", "State_aaa", "--to", "State_zzz"], "");
    assert_eq!(status, 2);
    assert!(err.contains("State_zzz"));
    assert_eq!(smsl(&[], "").0, 2);
    assert_eq!(smsl(&["plan", &file], "").0, 2);
    assert_eq!(smsl(&["dot", &file, "--branch", "SB9"], "").0, 2);
    assert_eq!(smsl(&["dot", &corpus_file("hierarchical.smsl")], "").0, 2);
    assert_eq!(smsl(&["run", &file, "--to", "State_ccc", "--mode", "sometimes"], "").0, 2);
    let (status, out, _) = smsl(&["--help"], "");
    assert_eq!(status, 0);
    assert!(out.contains("validate"));
}

#[test]
fn dot_output_is_the_graph() {
    let (status, out, _) = smsl(&["dot", &corpus_file("hierarchical.smsl"), "--branch", "SB2"], "");
    assert_eq!(status, 0);
    let doc = parse(corpus::HIERARCHICAL).unwrap();
    assert_eq!(smsl_core::graph::parse_dot(&out).unwrap(), FsmGraph::build(doc.branch("SB2").unwrap()));
}

#[test]
fn autonomous_run_reaches_goal() {
    let (status, out, _) = smsl(&["run", &corpus_file("hanoi.smsl"), "--to", "State_ccc", "--mode", "autonomous"], "");
    assert_eq!(status, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("executed ")).count(), 7);
    assert!(out.contains("final state: State_ccc\nstop reason: Completed"));
    assert_eq!(out, smsl(&["run", &corpus_file("hanoi.smsl"), "--to", "State_ccc"], "").1);
}

#[test]
fn supervised_run_reads_verdicts() {
    let file = corpus_file("registration.smsl");
    let (status, out, _) = smsl(&["run", &file, "--to", "State_1111", "--mode", "supervised"], "approve\nveto\n");
    assert_eq!(status, 1);
    assert_eq!(out.lines().filter(|l| l.starts_with("proposal ")).count(), 2);
    assert!(out.ends_with("stop reason: Vetoed\n"), "{out}");

    let (status, out, _) = smsl(&["run", &file, "--to", "State_1111", "--mode", "supervised"], "y\ny\n");
    assert_eq!(status, 0, "{out}");
    assert!(out.contains("final state: State_1111"));
}

#[test]
fn drift_from_sensor_replay_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("slip.replay");
    std::fs::write(&replay, "# disk 3 slips\nfact2 b 3.5\n").unwrap();
    let args = ["run", &corpus_file("hanoi.smsl"), "--to", "State_ccc", "--sensors", replay.to_str().unwrap()];
    let (status, out, _) = smsl(&args, "");
    assert_eq!(status, 1);
    assert!(out.contains("alarm UnplannedTransition"), "{out}");
    assert!(out.ends_with("stop reason: Alarm\n"), "{out}");
    assert_eq!(smsl(&args, "").1, out);
}

#[test]
fn serve_binary_answers_and_fails_fast() {
    let bin = env!("CARGO_BIN_EXE_smsl");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.smsl");
    std::fs::write(&bad, "{").unwrap();
    let output = Command::new(bin).args(["serve", "--file", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("invalid document"));

    let log = dir.path().join("events.jsonl");
    let mut child = Command::new(bin)
        .args(["serve", "--file", &corpus_file("hierarchical.smsl"), "--bind", "127.0.0.1:0"])
        .args(["--log", log.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /branches HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"["SB1","SB2"]"#), "{response}");
}
