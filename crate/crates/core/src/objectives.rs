//! Objective functions: the integer De Jong, Rastrigin and ridge test
//! functions, and an adapter for external evaluator processes.
//!
//! External evaluators speak a line protocol on stdin/stdout. Each request is
//! one line of `n` space-separated integers; each reply is one line holding a
//! single decimal number.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::space::{Point, SpaceSpec};

/// Default time an external evaluator gets to answer one request.
pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid objective configuration: {0}")]
    Config(String),
    #[error("could not start external evaluator `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluation failed at ({point}): {reason}")]
    Eval { point: Point, reason: String },
}

/// Command line of an external evaluator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalCommand { program: program.into(), args, timeout: DEFAULT_EXTERNAL_TIMEOUT }
    }

    /// Splits a command line on whitespace. No shell quoting is interpreted.
    pub fn parse(line: &str) -> Result<Self, ObjectiveError> {
        let mut parts = line.split_whitespace().map(str::to_owned);
        let program = parts.next().ok_or_else(|| ObjectiveError::Config("empty external command".into()))?;
        Ok(ExternalCommand::new(program, parts.collect()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl fmt::Display for ExternalCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    DeJong,
    Rastrigin { k: i32 },
    Ridge,
    External(ExternalCommand),
}

impl ObjectiveKind {
    /// One-byte tag used on the wire.
    pub fn code(&self) -> u8 {
        match self {
            ObjectiveKind::DeJong => 0,
            ObjectiveKind::Rastrigin { .. } => 1,
            ObjectiveKind::Ridge => 2,
            ObjectiveKind::External(_) => 3,
        }
    }

    /// Integer parameter carried on the wire (the Rastrigin `k`, else 0).
    pub fn param(&self) -> i32 {
        match self {
            ObjectiveKind::Rastrigin { k } => *k,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::DeJong => "dejong",
            ObjectiveKind::Rastrigin { .. } => "rastrigin",
            ObjectiveKind::Ridge => "ridge",
            ObjectiveKind::External(_) => "external",
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, ObjectiveKind::External(_))
    }
}

/// An objective bound to a space.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    space: SpaceSpec,
}

impl ObjectiveSpec {
    /// Built-in functions need an even `m` smaller than `n`, and a
    /// non-negative Rastrigin `k`.
    pub fn new(kind: ObjectiveKind, space: SpaceSpec) -> Result<Self, ObjectiveError> {
        if kind.is_builtin() {
            if !space.m().is_multiple_of(2) {
                return Err(ObjectiveError::Config(format!("{} needs an even m, got m = {}", kind.name(), space.m())));
            }
            if space.m() as usize >= space.n() {
                return Err(ObjectiveError::Config(format!(
                    "{} needs m < n, got n = {}, m = {}",
                    kind.name(),
                    space.n(),
                    space.m()
                )));
            }
        }
        if let ObjectiveKind::Rastrigin { k } = kind {
            if k < 0 {
                return Err(ObjectiveError::Config(format!("rastrigin k must be >= 0, got {k}")));
            }
        }
        Ok(ObjectiveSpec { kind, space })
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// A fresh evaluation context. External objectives start their process
    /// here.
    pub fn evaluator(&self) -> Result<Evaluator, ObjectiveError> {
        let backend = match &self.kind {
            ObjectiveKind::External(cmd) => Backend::External(ExternalProcess::spawn(cmd)?),
            kind => Backend::Builtin(kind.clone()),
        };
        Ok(Evaluator { backend, m: self.space.m(), delay: None, cache: None })
    }
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: Point,
    pub value: f64,
    /// Wall time spent computing the value; zero for cache hits and for
    /// values computed in another process.
    pub eval_duration: Duration,
}

/// Integer De Jong function `sum (x_i - m/2)^2`.
pub fn dejong(x: &Point, m: u32) -> f64 {
    let half = f64::from(m) / 2.0;
    x.coords().iter().map(|&c| (f64::from(c) - half).powi(2)).sum()
}

/// Integer Rastrigin-type function
/// `n m + sum [(x_i - m/2)^2 - m cos(k pi (x_i - m/2) / m)]`.
pub fn rastrigin_int(x: &Point, m: u32, k: i32) -> f64 {
    let m = f64::from(m);
    let half = m / 2.0;
    let freq = f64::from(k) * std::f64::consts::PI / m;
    let n = x.dim() as f64;
    n * m
        + x.coords()
            .iter()
            .map(|&c| {
                let d = f64::from(c) - half;
                d * d - m * (freq * d).cos()
            })
            .sum::<f64>()
}

/// Ridge function: distance to the center value plus the cyclic total
/// variation of the coordinates. Every constant vector `(i, …, i)` is a local
/// minimum with value `n |i - m/2|`.
pub fn ridge(x: &Point, m: u32) -> f64 {
    let half = f64::from(m) / 2.0;
    let c = x.coords();
    let to_center: f64 = c.iter().map(|&v| (f64::from(v) - half).abs()).sum();
    let cyclic: f64 = c.iter().zip(c.iter().cycle().skip(1)).map(|(&a, &b)| f64::from(a.abs_diff(b))).sum();
    to_center + cyclic
}

/// Evaluates `x` once. Starts and stops the process for external objectives;
/// use [`ObjectiveSpec::evaluator`] for repeated evaluation.
pub fn evaluate(spec: &ObjectiveSpec, x: &Point) -> Result<Evaluation, ObjectiveError> {
    spec.evaluator()?.evaluate(x)
}

enum Backend {
    Builtin(ObjectiveKind),
    External(ExternalProcess),
}

/// An evaluation context: at most one evaluation in flight, optionally with
/// a memo of earlier values and an artificial per-point delay.
pub struct Evaluator {
    backend: Backend,
    m: u32,
    delay: Option<Duration>,
    cache: Option<HashMap<Point, f64>>,
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.backend {
            Backend::Builtin(k) => k.name(),
            Backend::External(_) => "external",
        };
        f.debug_struct("Evaluator")
            .field("kind", &kind)
            .field("delay", &self.delay)
            .field("cached", &self.cache.as_ref().map(HashMap::len))
            .finish()
    }
}

impl Evaluator {
    /// Adds `delay` of sleep to every fresh evaluation.
    pub fn with_delay(mut self, delay: Option<Duration>) -> Self {
        self.delay = delay.filter(|d| !d.is_zero());
        self
    }

    /// Remembers values so that repeated points are not evaluated again.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(HashMap::new());
        self
    }

    pub fn cached(&self, x: &Point) -> Option<f64> {
        self.cache.as_ref().and_then(|c| c.get(x)).copied()
    }

    pub fn evaluate(&mut self, x: &Point) -> Result<Evaluation, ObjectiveError> {
        if let Some(value) = self.cached(x) {
            return Ok(Evaluation { point: x.clone(), value, eval_duration: Duration::ZERO });
        }
        let start = Instant::now();
        let value = match &mut self.backend {
            Backend::Builtin(ObjectiveKind::DeJong) => dejong(x, self.m),
            Backend::Builtin(ObjectiveKind::Rastrigin { k }) => rastrigin_int(x, self.m, *k),
            Backend::Builtin(ObjectiveKind::Ridge) => ridge(x, self.m),
            Backend::Builtin(ObjectiveKind::External(_)) => unreachable!("external kinds use a process backend"),
            Backend::External(proc_) => proc_.query(x)?,
        };
        if let Some(d) = self.delay {
            thread::sleep(d);
        }
        let eval_duration = start.elapsed();
        if !value.is_finite() {
            return Err(ObjectiveError::Eval { point: x.clone(), reason: format!("non-finite value {value}") });
        }
        if let Some(cache) = &mut self.cache {
            cache.insert(x.clone(), value);
        }
        Ok(Evaluation { point: x.clone(), value, eval_duration })
    }
}

struct ExternalProcess {
    command: ExternalCommand,
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<std::io::Result<String>>,
}

impl ExternalProcess {
    fn spawn(command: &ExternalCommand) -> Result<Self, ObjectiveError> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ObjectiveError::Spawn { command: command.to_string(), source })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(ExternalProcess { command: command.clone(), child, stdin, replies })
    }

    fn fail(&mut self, x: &Point, reason: String) -> ObjectiveError {
        let status = match self.child.try_wait() {
            Ok(Some(status)) => format!(" (process exited with {status})"),
            _ => String::new(),
        };
        ObjectiveError::Eval { point: x.clone(), reason: format!("{reason}{status}") }
    }

    fn query(&mut self, x: &Point) -> Result<f64, ObjectiveError> {
        let line = format!("{x}\n");
        let sent = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if let Err(e) = sent {
            return Err(self.fail(x, format!("cannot write request: {e}")));
        }
        let reply = match self.replies.recv_timeout(self.command.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(x, format!("cannot read reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(self.fail(x, format!("no reply within {:?}", self.command.timeout)));
            }
            Err(RecvTimeoutError::Disconnected) => {
                // give the exit status a moment to become observable
                let _ = self.child.wait();
                return Err(self.fail(x, "evaluator closed its output".into()));
            }
        };
        reply.trim().parse::<f64>().map_err(|_| self.fail(x, format!("reply {reply:?} is not a number")))
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::enumerate_space;

    fn p(c: &[u16]) -> Point {
        Point::from_coords(c.to_vec())
    }

    #[test]
    fn dejong_examples() {
        assert_eq!(dejong(&p(&[2, 2, 2]), 4), 0.0);
        assert_eq!(dejong(&p(&[1, 2, 2]), 4), 1.0);
        assert_eq!(dejong(&p(&[1, 6]), 6), 13.0);
    }

    #[test]
    fn rastrigin_examples() {
        for m in [2u32, 4, 6, 10] {
            let x = p(&[(m / 2) as u16; 5]);
            for k in 0..4 {
                assert_eq!(rastrigin_int(&x, m, k), 0.0);
            }
        }
        assert!((rastrigin_int(&p(&[1]), 4, 2) - 5.0).abs() < 1e-12);
        let s = SpaceSpec::new(3, 4).unwrap();
        for x in enumerate_space(&s, 100).unwrap() {
            assert_eq!(rastrigin_int(&x, 4, 0), dejong(&x, 4));
        }
    }

    #[test]
    fn ridge_examples() {
        assert_eq!(ridge(&p(&[2, 2, 2]), 4), 0.0);
        assert_eq!(ridge(&p(&[1, 1, 1]), 4), 3.0);
        assert_eq!(ridge(&p(&[1, 2, 1]), 4), 4.0);
    }

    #[test]
    fn builtins_are_nonnegative_with_zero_only_at_the_center() {
        for (n, m) in [(3usize, 4u32), (2, 6)] {
            let s = SpaceSpec::new(n, m).unwrap();
            let center = s.constant_point((m / 2) as u16).unwrap();
            for x in enumerate_space(&s, 1000).unwrap() {
                for v in [dejong(&x, m), rastrigin_int(&x, m, 2), rastrigin_int(&x, m, 3), ridge(&x, m)] {
                    assert!(v >= -1e-12, "{x:?} -> {v}");
                    assert_eq!(v.abs() < 1e-9, x == center, "{x:?} -> {v}");
                }
            }
        }
    }

    #[test]
    fn ridge_local_minima_are_the_constant_vectors() {
        let (n, m) = (4usize, 6u32);
        let s = SpaceSpec::new(n, m).unwrap();
        let mut minima = Vec::new();
        for x in enumerate_space(&s, 10_000).unwrap() {
            let fx = ridge(&x, m);
            let strict = crate::space::enumerate_ball(&s, &x, 1, 100)
                .unwrap()
                .iter()
                .filter(|y| **y != x)
                .all(|y| ridge(y, m) > fx);
            if strict {
                minima.push(x);
            }
        }
        let constant: Vec<Point> = (1..=m as u16).map(|v| s.constant_point(v).unwrap()).collect();
        assert_eq!(minima, constant);
        for (i, x) in constant.iter().enumerate() {
            let i = (i + 1) as f64;
            assert_eq!(ridge(x, m), n as f64 * (i - f64::from(m) / 2.0).abs());
        }
    }

    #[test]
    fn spec_validation() {
        let s = SpaceSpec::new(10, 6).unwrap();
        assert!(ObjectiveSpec::new(ObjectiveKind::DeJong, s).is_ok());
        assert!(ObjectiveSpec::new(ObjectiveKind::Rastrigin { k: -1 }, s).is_err());
        let odd = SpaceSpec::new(10, 5).unwrap();
        assert!(matches!(ObjectiveSpec::new(ObjectiveKind::Ridge, odd), Err(ObjectiveError::Config(_))));
        let wide = SpaceSpec::new(4, 6).unwrap();
        assert!(ObjectiveSpec::new(ObjectiveKind::DeJong, wide).is_err());
        let ext = ObjectiveKind::External(ExternalCommand::parse("cat").unwrap());
        assert!(ObjectiveSpec::new(ext, SpaceSpec::new(2, 3).unwrap()).is_ok());
        assert!(ExternalCommand::parse("   ").is_err());
    }

    #[test]
    fn evaluator_caches_and_times() {
        let s = SpaceSpec::new(10, 6).unwrap();
        let spec = ObjectiveSpec::new(ObjectiveKind::DeJong, s).unwrap();
        let x = s.constant_point(3).unwrap();
        assert_eq!(evaluate(&spec, &x).unwrap().value, 0.0);
        let mut ev = spec.evaluator().unwrap().with_cache().with_delay(Some(Duration::from_millis(2)));
        let y = s.constant_point(1).unwrap();
        let first = ev.evaluate(&y).unwrap();
        assert_eq!(first.value, 40.0);
        assert!(first.eval_duration >= Duration::from_millis(2));
        let again = ev.evaluate(&y).unwrap();
        assert_eq!(again.value, 40.0);
        assert_eq!(again.eval_duration, Duration::ZERO);
    }

    #[test]
    fn external_failures_are_reported_with_the_point() {
        let s = SpaceSpec::new(2, 3).unwrap();
        let x = s.constant_point(2).unwrap();
        let exits = ObjectiveKind::External(ExternalCommand::new("sh", vec!["-c".into(), "exit 3".into()]));
        let spec = ObjectiveSpec::new(exits, s).unwrap();
        match evaluate(&spec, &x) {
            Err(ObjectiveError::Eval { point, .. }) => assert_eq!(point, x),
            other => panic!("{other:?}"),
        }
        let garbage = ObjectiveKind::External(ExternalCommand::new(
            "sh",
            vec!["-c".into(), "while read l; do echo nope; done".into()],
        ));
        let spec = ObjectiveSpec::new(garbage, s).unwrap();
        assert!(matches!(evaluate(&spec, &x), Err(ObjectiveError::Eval { .. })));
        let silent = ObjectiveKind::External(
            ExternalCommand::new("sh", vec!["-c".into(), "sleep 5".into()]).with_timeout(Duration::from_millis(100)),
        );
        let spec = ObjectiveSpec::new(silent, s).unwrap();
        assert!(matches!(evaluate(&spec, &x), Err(ObjectiveError::Eval { .. })));
        let missing = ObjectiveKind::External(ExternalCommand::new("/nonexistent/evaluator", vec![]));
        let spec = ObjectiveSpec::new(missing, s).unwrap();
        assert!(matches!(evaluate(&spec, &x), Err(ObjectiveError::Spawn { .. })));
    }

    #[test]
    fn external_line_protocol() {
        let s = SpaceSpec::new(3, 4).unwrap();
        // replies with the coordinate sum
        let script = "while read a b c; do echo $((a + b + c)); done";
        let kind = ObjectiveKind::External(ExternalCommand::new("sh", vec!["-c".into(), script.into()]));
        let spec = ObjectiveSpec::new(kind, s).unwrap();
        let mut ev = spec.evaluator().unwrap();
        assert_eq!(ev.evaluate(&p(&[1, 2, 4])).unwrap().value, 7.0);
        assert_eq!(ev.evaluate(&p(&[4, 4, 4])).unwrap().value, 12.0);
    }
}
