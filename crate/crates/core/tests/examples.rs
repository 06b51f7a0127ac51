//! Runs every example program that `cargo test` builds alongside the tests.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> PathBuf {
    // target/<profile>/deps/<this test> -> target/<profile>/examples/<name>
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().and_then(|d| d.parent()).unwrap().join("examples");
    dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX))
}

fn run(name: &str, args: &[&str]) -> String {
    let path = example(name);
    assert!(path.exists(), "{} not built", path.display());
    let out = Command::new(&path).args(args).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{name}: {}\n{stdout}", String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn examples_run_and_print_their_results() {
    let cases: &[(&str, &[&str], &str)] = &[
        ("centrality", &[], "integrated_circuits"),
        ("traverse", &["coltan"], "which makes up 3% of the production budget of iPhone"),
        ("factor_shells", &[], "represented by the ticker AAPL"),
        ("news_search", &["coltan DRC"], "page 3"),
        ("compound_query", &[], "news index, k=2:"),
        ("chat_replay", &[], "[references] Apple supply-chain paths"),
        ("service", &[], "event: tool_call"),
        ("synthetic_graph", &["2"], "0 schema issues"),
    ];
    for (name, args, needle) in cases {
        let out = run(name, args);
        assert!(out.contains(needle), "{name} output lacks `{needle}`:\n{out}");
    }
}
