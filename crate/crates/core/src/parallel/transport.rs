//! Frame transports between master and workers.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::codec::{decode_header, DecodeError, HEADER_LEN};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("transport i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] DecodeError),
}

/// A received frame and the time spent moving its bytes once the first byte
/// was available.
#[derive(Debug)]
pub struct Received {
    pub frame: Vec<u8>,
    pub transfer: Duration,
}

/// A bidirectional, ordered frame channel.
pub trait Link: Send {
    fn send(&mut self, frame: Vec<u8>) -> Result<(), TransportError>;
    /// Blocks until a whole frame has arrived.
    fn recv(&mut self) -> Result<Received, TransportError>;
}

/// In-process link over a pair of queues.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process link ends.
pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (ChannelLink { tx: a_tx, rx: a_rx }, ChannelLink { tx: b_tx, rx: b_rx })
}

impl Link for ChannelLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        self.tx.send(frame).map_err(|_| TransportError::Disconnected)
    }

    fn recv(&mut self) -> Result<Received, TransportError> {
        let frame = self.rx.recv().map_err(|_| TransportError::Disconnected)?;
        Ok(Received { frame, transfer: Duration::ZERO })
    }
}

/// Link over a byte stream.
pub struct StreamLink {
    stream: TcpStream,
}

impl StreamLink {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(StreamLink { stream })
    }
}

fn read_exact_or_eof(stream: &mut TcpStream, buf: &mut [u8]) -> Result<(), TransportError> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => {
            TransportError::Disconnected
        }
        _ => TransportError::Io(e),
    })
}

impl Link for StreamLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        self.stream.write_all(&frame).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => TransportError::Disconnected,
            _ => TransportError::Io(e),
        })?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Received, TransportError> {
        let mut first = [0u8; 1];
        read_exact_or_eof(&mut self.stream, &mut first)?;
        let started = Instant::now();
        let mut frame = vec![0u8; HEADER_LEN];
        frame[0] = first[0];
        read_exact_or_eof(&mut self.stream, &mut frame[1..])?;
        let (_, len) = decode_header(&frame)?;
        frame.resize(HEADER_LEN + len, 0);
        read_exact_or_eof(&mut self.stream, &mut frame[HEADER_LEN..])?;
        Ok(Received { frame, transfer: started.elapsed() })
    }
}
