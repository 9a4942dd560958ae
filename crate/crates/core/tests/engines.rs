use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::thread;

use bpb::objectives::{ExternalCommand, ObjectiveKind, ObjectiveSpec};
use bpb::parallel::{
    build_engine, connect_worker, EngineConfig, ParallelEngine, SerialEngine, Transport, WorkerOptions,
};
use bpb::perf::{serial_total, TimingLedger};
use bpb::search::{run, SearchConfig, StopReason};
use bpb::space::SpaceSpec;

const DEJONG_PY: &str = r#"
import sys
m = int(sys.argv[1])
for line in sys.stdin:
    xs = [int(t) for t in line.split()]
    print(sum((x - m / 2) ** 2 for x in xs), flush=True)
"#;

fn dejong_script(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("dejong.py");
    fs::File::create(&path).unwrap().write_all(DEJONG_PY.as_bytes()).unwrap();
    path.display().to_string()
}

fn config(n: usize, m: u32, seed: u64) -> (SpaceSpec, SearchConfig) {
    let space = SpaceSpec::new(n, m).unwrap();
    let cfg = SearchConfig::new(space, 100, n - 1, 0.1, seed).unwrap();
    (space, cfg)
}

#[test]
fn external_objective_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let script = dejong_script(&dir);
    let (space, cfg) = config(10, 6, 1);
    let builtin = ObjectiveSpec::new(ObjectiveKind::DeJong, space).unwrap();
    let cmd = ExternalCommand::parse(&format!("python3 {script} 6")).unwrap();
    let external = ObjectiveSpec::new(ObjectiveKind::External(cmd), space).unwrap();

    let a = run(&cfg, &builtin, &mut SerialEngine::new(&builtin).unwrap()).unwrap();
    let b = run(&cfg, &external, &mut SerialEngine::new(&external).unwrap()).unwrap();
    assert_eq!(a.best_value, 0.0);
    assert_eq!(b.best_value, a.best_value);
    assert_eq!(b.best_point, a.best_point);
    assert_eq!(b.evaluations, a.evaluations);

    let mut par = ParallelEngine::in_process(&external, 2, None).unwrap();
    let c = run(&cfg, &external, &mut par).unwrap();
    assert_eq!(c.best_point, a.best_point);
}

#[test]
fn broken_external_objective_fails_the_run() {
    let (space, cfg) = config(10, 6, 1);
    let cmd = ExternalCommand::parse("python3 -c print('nope')").unwrap();
    let obj = ObjectiveSpec::new(ObjectiveKind::External(cmd), space).unwrap();
    assert!(run(&cfg, &obj, &mut SerialEngine::new(&obj).unwrap()).is_err());
    let mut par = ParallelEngine::in_process(&obj, 2, None).unwrap();
    assert!(run(&cfg, &obj, &mut par).is_err());
}

#[test]
fn every_engine_finds_the_same_optimum() {
    let (space, cfg) = config(12, 8, 5);
    let obj = ObjectiveSpec::new(ObjectiveKind::Rastrigin { k: 2 }, space).unwrap();
    let reference = run(&cfg, &obj, &mut SerialEngine::new(&obj).unwrap()).unwrap();
    for (workers, transport) in [(1, Transport::Socket), (3, Transport::Socket), (3, Transport::InProcess)] {
        let mut engine = build_engine(&EngineConfig { workers, transport, eval_delay: None }, &obj).unwrap();
        let res = run(&cfg, &obj, &mut engine).unwrap();
        assert_eq!(res.best_point, reference.best_point);
        assert_eq!(res.iterations, reference.iterations);
        assert_eq!(res.evaluations, reference.evaluations);
        assert_eq!(res.stop_reason, reference.stop_reason);
    }
}

#[test]
fn remote_workers_serve_an_accepting_master() {
    let (space, cfg) = config(10, 6, 9);
    let obj = ObjectiveSpec::new(ObjectiveKind::Ridge, space).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let workers: Vec<_> =
        (0..2).map(|_| thread::spawn(move || connect_worker(addr, &WorkerOptions::default()))).collect();
    let mut engine = ParallelEngine::accept(&obj, &listener, 2).unwrap();
    let res = run(&cfg, &obj, &mut engine).unwrap();
    drop(engine);
    for w in workers {
        w.join().unwrap().unwrap();
    }
    assert_eq!(res.best_value, 0.0);
    assert_eq!(res.stop_reason, StopReason::LocalMinimumConfirmed);
}

#[test]
fn ledger_is_the_sum_of_the_trace() {
    let (space, cfg) = config(20, 10, 3);
    let obj = ObjectiveSpec::new(ObjectiveKind::DeJong, space).unwrap();
    let res = run(&cfg, &obj, &mut SerialEngine::new(&obj).unwrap()).unwrap();
    assert_eq!(TimingLedger::from_trace(&res.trace), res.timing);
    assert_eq!(res.timing.points, res.evaluations);
    assert!(res.timing.communication.is_zero());
    assert!(serial_total(&res.timing) > std::time::Duration::ZERO);
}
