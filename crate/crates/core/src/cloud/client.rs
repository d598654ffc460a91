//! Short-lived clients: sale terminals, shelf counters and model pushers.

use std::io::{self, BufReader};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::learn::{serialize_model, Model};
use crate::protocol::{
    decode, now_ms, read_message_line, DistributionReport, Envelope, MessageWriter, ModelUpdate,
    Payload,
};

fn connect(addr: &str, timeout: Duration) -> io::Result<TcpStream> {
    let sock = addr.to_socket_addrs()?.next().ok_or_else(|| {
        io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("no address for {addr}"),
        )
    })?;
    let stream = TcpStream::connect_timeout(&sock, timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    Ok(stream)
}

fn read_replies(stream: &TcpStream) -> io::Result<Vec<Envelope>> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut out = Vec::new();
    while let Some(line) = read_message_line(&mut reader)? {
        out.push(decode(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

/// Send `payloads` in order, then half-close and collect every reply until
/// the server closes. When this returns, the server has handled them all.
pub fn send_all(
    addr: &str,
    payloads: Vec<Payload>,
    timeout: Duration,
) -> io::Result<Vec<Envelope>> {
    let stream = connect(addr, timeout)?;
    let mut w = MessageWriter::new(stream.try_clone()?);
    for p in payloads {
        w.send(p, now_ms())?;
    }
    stream.shutdown(Shutdown::Write)?;
    read_replies(&stream)
}

pub fn model_update(model: &Model) -> ModelUpdate {
    let bytes = serialize_model(model);
    ModelUpdate {
        kind: model.kind(),
        model_hash: model.hash(),
        model: bytes,
    }
}

/// Push a model and wait for the distribution report.
///
/// `timeout` must exceed the server's per-edge distribution timeout.
pub fn push_model(
    addr: &str,
    update: ModelUpdate,
    timeout: Duration,
) -> io::Result<DistributionReport> {
    let replies = send_all(addr, vec![Payload::ModelUpdate(update)], timeout)?;
    for env in replies {
        match env.payload {
            Payload::DistributionReport(r) => return Ok(r),
            Payload::Error(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("cloud rejected model: {}: {}", e.code, e.message),
                ))
            }
            _ => {}
        }
    }
    Err(io::Error::new(
        io::ErrorKind::UnexpectedEof,
        "connection closed without a distribution report",
    ))
}
