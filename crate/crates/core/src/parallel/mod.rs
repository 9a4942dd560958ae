//! Sampling engines: a serial one and a master/worker one.
//!
//! A round's draws are numbered globally in task order. Worker `w` of `p`
//! receives a contiguous range of those numbers and a lane positioned at the
//! first of them, so the draws of a round do not depend on `p`.

pub mod codec;
pub mod transport;

use std::io;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lanes;
use crate::objectives::{Evaluation, Evaluator, ExternalCommand, ObjectiveError, ObjectiveKind, ObjectiveSpec};
use crate::search::{RoundOutput, SamplingEngine};
use crate::space::{sample_ball_with, sample_uniform_space, Point, RadiusTable, SpaceError, SpaceSpec};

use codec::{DecodeError, EncodeError, Hello, Message};
use transport::{channel_pair, Link, StreamLink, TransportError};

/// `count` draws from the ball around `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawTask {
    pub center: Point,
    pub count: usize,
}

/// Draws of one round (or of one worker's share of it).
///
/// A radius of `n` or more stands for the whole space; the centers are then
/// ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRequest {
    pub radius: usize,
    /// Lane of the first draw.
    pub seed_lane: u64,
    pub tasks: Vec<DrawTask>,
}

impl SampleRequest {
    pub fn total_draws(&self) -> usize {
        self.tasks.iter().map(|t| t.count).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleReply {
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("worker {worker} failed: {message}")]
    Worker { worker: usize, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// Splits a request into `p` shares of contiguous global draw ranges whose
/// sizes differ by at most one; the first shares are the larger ones.
pub fn split_request(request: &SampleRequest, p: usize) -> Vec<SampleRequest> {
    assert!(p > 0, "at least one share");
    let total = request.total_draws();
    let (base, rem) = (total / p, total % p);
    let mut tasks = request.tasks.iter().filter(|t| t.count > 0);
    let mut current = tasks.next().cloned();
    let mut start = 0usize;
    (0..p)
        .map(|w| {
            let mut need = base + usize::from(w < rem);
            let share = SampleRequest {
                radius: request.radius,
                seed_lane: lanes::advance(request.seed_lane, start as u64),
                tasks: Vec::new(),
            };
            start += need;
            let mut share = share;
            while need > 0 {
                let task = current.as_mut().expect("shares cover exactly the total");
                let take = need.min(task.count);
                share.tasks.push(DrawTask { center: task.center.clone(), count: take });
                task.count -= take;
                need -= take;
                if task.count == 0 {
                    current = tasks.next().cloned();
                }
            }
            share
        })
        .collect()
}

/// Draws and evaluates the points of requests.
#[derive(Debug)]
pub struct Worker {
    space: SpaceSpec,
    evaluator: Evaluator,
    table: Option<RadiusTable>,
}

impl Worker {
    /// A worker with a memoizing evaluator; `eval_delay` is added to every
    /// fresh evaluation.
    pub fn new(objective: &ObjectiveSpec, eval_delay: Option<Duration>) -> Result<Self, ObjectiveError> {
        Ok(Worker {
            space: *objective.space(),
            evaluator: objective.evaluator()?.with_cache().with_delay(eval_delay),
            table: None,
        })
    }

    fn table(&mut self, radius: usize) -> Result<&RadiusTable, SpaceError> {
        if self.table.as_ref().map(RadiusTable::radius) != Some(radius) {
            self.table = Some(RadiusTable::new(&self.space, radius)?);
        }
        Ok(self.table.as_ref().expect("just filled"))
    }

    /// Draw `ℓ` of the request uses lane position `ℓ`.
    pub fn serve(&mut self, request: &SampleRequest) -> Result<SampleReply, EngineError> {
        let uniform = request.radius >= self.space.n();
        if !uniform {
            self.table(request.radius)?;
        }
        let mut evaluations = Vec::with_capacity(request.total_draws());
        let mut index = 0u64;
        for task in &request.tasks {
            if !uniform && !self.space.contains(&task.center) {
                return Err(EngineError::Protocol(format!("center ({}) is outside the space", task.center)));
            }
            for _ in 0..task.count {
                let mut rng = lanes::draw_rng(request.seed_lane, index);
                index += 1;
                let x = if uniform {
                    sample_uniform_space(&self.space, &mut rng)
                } else {
                    let table = self.table.as_ref().expect("table prepared");
                    sample_ball_with(&self.space, table, &task.center, &mut rng)?
                };
                evaluations.push(self.evaluator.evaluate(&x)?);
            }
        }
        Ok(SampleReply { evaluations })
    }
}

/// Runs every draw in the calling thread.
#[derive(Debug)]
pub struct SerialEngine {
    worker: Worker,
}

impl SerialEngine {
    pub fn new(objective: &ObjectiveSpec) -> Result<Self, EngineError> {
        Self::with_delay(objective, None)
    }

    pub fn with_delay(objective: &ObjectiveSpec, eval_delay: Option<Duration>) -> Result<Self, EngineError> {
        Ok(SerialEngine { worker: Worker::new(objective, eval_delay)? })
    }
}

impl SamplingEngine for SerialEngine {
    fn sample(&mut self, request: &SampleRequest) -> Result<RoundOutput, EngineError> {
        let started = Instant::now();
        let reply = self.worker.serve(request)?;
        Ok(RoundOutput { evaluations: reply.evaluations, sampling: started.elapsed(), communication: Duration::ZERO })
    }
}

/// How the master reaches its workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    /// Worker threads behind in-memory queues. Frames are still encoded.
    #[default]
    InProcess,
    /// Worker threads connected over loopback TCP.
    Socket,
}

impl Transport {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transport::InProcess => "inproc",
            Transport::Socket => "socket",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EngineConfig {
    /// 0 runs serially.
    pub workers: usize,
    pub transport: Transport,
    pub eval_delay: Option<Duration>,
}

/// Worker-side settings that the hello message does not carry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerOptions {
    pub eval_delay: Option<Duration>,
    /// Needed when the session objective is external.
    pub external: Option<ExternalCommand>,
}

fn hello_for(objective: &ObjectiveSpec) -> Hello {
    let space = objective.space();
    Hello {
        n: space.n() as u16,
        m: space.m() as u16,
        objective_kind: objective.kind().code(),
        objective_param: objective.kind().param(),
    }
}

fn objective_from_hello(hello: &Hello, options: &WorkerOptions) -> Result<ObjectiveSpec, EngineError> {
    let space = SpaceSpec::new(usize::from(hello.n), u32::from(hello.m))?;
    let kind = match hello.objective_kind {
        0 => ObjectiveKind::DeJong,
        1 => ObjectiveKind::Rastrigin { k: hello.objective_param },
        2 => ObjectiveKind::Ridge,
        3 => ObjectiveKind::External(options.external.clone().ok_or_else(|| {
            EngineError::Protocol("session uses an external objective but no command was given".into())
        })?),
        other => return Err(EngineError::Protocol(format!("unknown objective kind {other}"))),
    };
    Ok(ObjectiveSpec::new(kind, space)?)
}

/// Worker loop: waits for a hello, then serves requests until shutdown.
///
/// Failures are reported to the master with an error frame before
/// returning.
pub fn run_worker(link: &mut dyn Link, options: &WorkerOptions) -> Result<(), EngineError> {
    let result = worker_loop(link, options);
    if let Err(e) = &result {
        if !matches!(e, EngineError::Transport(_)) {
            let _ = link.send(codec::encode_error(&e.to_string()));
        }
    }
    result
}

fn worker_loop(link: &mut dyn Link, options: &WorkerOptions) -> Result<(), EngineError> {
    let hello = codec::decode_hello(&link.recv()?.frame)?;
    let objective = objective_from_hello(&hello, options)?;
    let n = objective.space().n();
    let mut worker = Worker::new(&objective, options.eval_delay)?;
    loop {
        let frame = link.recv()?.frame;
        match codec::decode_message(&frame, n)? {
            Message::Request(req) => {
                let reply = worker.serve(&req)?;
                link.send(codec::encode_reply(&reply, n)?)?;
            }
            Message::Shutdown => return Ok(()),
            other => return Err(EngineError::Protocol(format!("unexpected message {other:?}"))),
        }
    }
}

/// Master side of the master/worker engine.
///
/// `sampling` is the round's wall time minus `communication`, which covers
/// encoding, decoding and moving frames.
pub struct ParallelEngine {
    links: Vec<Box<dyn Link>>,
    threads: Vec<JoinHandle<Result<(), EngineError>>>,
    n: usize,
    failed: bool,
}

impl std::fmt::Debug for ParallelEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelEngine").field("workers", &self.links.len()).field("n", &self.n).finish()
    }
}

fn worker_options(objective: &ObjectiveSpec, eval_delay: Option<Duration>) -> WorkerOptions {
    let external = match objective.kind() {
        ObjectiveKind::External(cmd) => Some(cmd.clone()),
        _ => None,
    };
    WorkerOptions { eval_delay, external }
}

impl ParallelEngine {
    fn start(
        links: Vec<Box<dyn Link>>,
        threads: Vec<JoinHandle<Result<(), EngineError>>>,
        objective: &ObjectiveSpec,
    ) -> Result<Self, EngineError> {
        if links.is_empty() {
            return Err(EngineError::Protocol("a parallel engine needs at least one worker".into()));
        }
        let mut engine = ParallelEngine { links, threads, n: objective.space().n(), failed: false };
        let hello = codec::encode_hello(&hello_for(objective));
        for link in &mut engine.links {
            link.send(hello.clone())?;
        }
        Ok(engine)
    }

    /// `p` worker threads behind in-memory links.
    pub fn in_process(objective: &ObjectiveSpec, p: usize, eval_delay: Option<Duration>) -> Result<Self, EngineError> {
        let options = worker_options(objective, eval_delay);
        let mut links: Vec<Box<dyn Link>> = Vec::with_capacity(p);
        let mut threads = Vec::with_capacity(p);
        for _ in 0..p {
            let (master, mut remote) = channel_pair();
            let options = options.clone();
            threads.push(thread::spawn(move || run_worker(&mut remote, &options)));
            links.push(Box::new(master));
        }
        Self::start(links, threads, objective)
    }

    /// `p` worker threads connected over loopback TCP.
    pub fn socket_local(
        objective: &ObjectiveSpec,
        p: usize,
        eval_delay: Option<Duration>,
    ) -> Result<Self, EngineError> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let options = worker_options(objective, eval_delay);
        let mut threads = Vec::with_capacity(p);
        for _ in 0..p {
            let options = options.clone();
            threads.push(thread::spawn(move || {
                let mut link = StreamLink::new(TcpStream::connect(addr)?)?;
                run_worker(&mut link, &options)
            }));
        }
        let links = accept_links(&listener, p)?;
        Self::start(links, threads, objective)
    }

    /// Waits for `p` external workers (see [`connect_worker`]) on `listener`.
    pub fn accept(objective: &ObjectiveSpec, listener: &TcpListener, p: usize) -> Result<Self, EngineError> {
        let links = accept_links(listener, p)?;
        Self::start(links, Vec::new(), objective)
    }

    pub fn workers(&self) -> usize {
        self.links.len()
    }

    fn round(&mut self, request: &SampleRequest) -> Result<RoundOutput, EngineError> {
        let started = Instant::now();
        let mut communication = Duration::ZERO;
        let shares = split_request(request, self.links.len());
        let mut busy = Vec::with_capacity(shares.len());
        for (w, share) in shares.iter().enumerate() {
            if share.tasks.is_empty() {
                continue;
            }
            let t = Instant::now();
            let frame = codec::encode_request(share, self.n)?;
            self.links[w].send(frame)?;
            communication += t.elapsed();
            busy.push(w);
        }
        let mut evaluations = Vec::with_capacity(request.total_draws());
        for w in busy {
            let received = self.links[w].recv()?;
            let t = Instant::now();
            let message = codec::decode_message(&received.frame, self.n)?;
            communication += received.transfer + t.elapsed();
            match message {
                Message::Reply(reply) => {
                    if reply.evaluations.len() != shares[w].total_draws() {
                        return Err(EngineError::Protocol(format!(
                            "worker {w} returned {} points for {} draws",
                            reply.evaluations.len(),
                            shares[w].total_draws()
                        )));
                    }
                    evaluations.extend(reply.evaluations);
                }
                Message::Error(message) => return Err(EngineError::Worker { worker: w, message }),
                other => return Err(EngineError::Protocol(format!("worker {w} sent {other:?}"))),
            }
        }
        let sampling = started.elapsed().saturating_sub(communication);
        Ok(RoundOutput { evaluations, sampling, communication })
    }
}

fn accept_links(listener: &TcpListener, p: usize) -> Result<Vec<Box<dyn Link>>, EngineError> {
    (0..p)
        .map(|_| {
            let (stream, _) = listener.accept()?;
            Ok(Box::new(StreamLink::new(stream)?) as Box<dyn Link>)
        })
        .collect()
}

impl SamplingEngine for ParallelEngine {
    fn sample(&mut self, request: &SampleRequest) -> Result<RoundOutput, EngineError> {
        if self.failed {
            return Err(EngineError::Protocol("engine is unusable after a worker failure".into()));
        }
        let out = self.round(request);
        self.failed = out.is_err();
        out
    }
}

impl Drop for ParallelEngine {
    fn drop(&mut self) {
        for link in &mut self.links {
            let _ = link.send(codec::encode_shutdown());
        }
        // closing the links unblocks workers that missed the shutdown
        self.links.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Connects to a master and serves it until shutdown.
pub fn connect_worker<A: ToSocketAddrs>(addr: A, options: &WorkerOptions) -> Result<(), EngineError> {
    let mut link = StreamLink::new(TcpStream::connect(addr)?)?;
    run_worker(&mut link, options)
}

/// Engine for `config`.
pub fn build_engine(
    config: &EngineConfig,
    objective: &ObjectiveSpec,
) -> Result<Box<dyn SamplingEngine + Send>, EngineError> {
    Ok(match (config.workers, config.transport) {
        (0, _) => Box::new(SerialEngine::with_delay(objective, config.eval_delay)?),
        (p, Transport::InProcess) => Box::new(ParallelEngine::in_process(objective, p, config.eval_delay)?),
        (p, Transport::Socket) => Box::new(ParallelEngine::socket_local(objective, p, config.eval_delay)?),
    })
}
