//! Server agent: emulates the tail of the network by sleeping its profiled time.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{self, WireMessage, WireStrategy};
use crate::decision::{BatchTimings, Strategy};
use crate::error::{Error, Result};
use crate::profile::ModelProfile;

pub struct Server {
    listener: TcpListener,
    profile: Arc<ModelProfile>,
    hash: u64,
    stop: Arc<AtomicBool>,
}

/// Stops a running server's accept loop. Open connections finish on their own.
#[derive(Debug, Clone)]
pub struct ShutdownHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let mut addr = self.addr;
        if addr.ip().is_unspecified() {
            addr.set_ip(if addr.is_ipv4() {
                std::net::Ipv4Addr::LOCALHOST.into()
            } else {
                std::net::Ipv6Addr::LOCALHOST.into()
            });
        }
        let _ = TcpStream::connect_timeout(&addr, Duration::from_secs(1));
    }
}

/// A server running on a background thread.
pub struct RunningServer {
    pub addr: SocketAddr,
    handle: ShutdownHandle,
    join: Option<JoinHandle<Result<()>>>,
}

impl RunningServer {
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    pub fn stop(mut self) -> Result<()> {
        self.handle.shutdown();
        match self.join.take() {
            Some(join) => join
                .join()
                .unwrap_or_else(|_| Err(Error::Protocol("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(join) = self.join.take() {
            self.handle.shutdown();
            let _ = join.join();
        }
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, profile: ModelProfile) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Server {
            listener,
            hash: profile.canonical_hash(),
            profile: Arc::new(profile),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn shutdown_handle(&self) -> Result<ShutdownHandle> {
        Ok(ShutdownHandle {
            addr: self.local_addr()?,
            stop: Arc::clone(&self.stop),
        })
    }

    /// Accepts connections until shut down, one thread per connection.
    pub fn run(self) -> Result<()> {
        log::info!(
            "serving profile `{}` (hash {:016x}) on {}",
            self.profile.name(),
            self.hash,
            self.local_addr()?
        );
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let profile = Arc::clone(&self.profile);
            let hash = self.hash;
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle_connection(stream, &profile, hash) {
                    log::warn!("connection {peer:?}: {e}");
                }
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<RunningServer> {
        let handle = self.shutdown_handle()?;
        let join = thread::spawn(move || self.run());
        Ok(RunningServer {
            addr: handle.addr,
            handle,
            join: Some(join),
        })
    }
}

/// Binds `addr` and serves `profile` until the process ends.
pub fn serve(addr: impl ToSocketAddrs, profile: ModelProfile) -> Result<()> {
    Server::bind(addr, profile)?.run()
}

fn send_error<W: Write>(w: &mut W, code: u16, message: impl Into<String>) -> Result<()> {
    WireMessage::Error {
        code,
        message: message.into(),
    }
    .write_to(w)?;
    Ok(())
}

/// Server-side time for one request, or an error code and message.
fn tail_ms(
    profile: &ModelProfile,
    strategy: WireStrategy,
    split_layer: u16,
    batch: u32,
) -> std::result::Result<f64, (u16, String)> {
    let strategy = match strategy {
        WireStrategy::FullOffload => Strategy::FullOffload,
        WireStrategy::NoOffloadReport => return Ok(0.0),
        WireStrategy::Split => Strategy::SplitAt(usize::from(split_layer)),
    };
    strategy
        .validate_for(profile)
        .map_err(|e| (wire::ERR_MALFORMED, e.to_string()))?;
    let timings = BatchTimings::exact(profile, batch).map_err(|e| (wire::ERR_UNMEASURED_BATCH, e.to_string()))?;
    // the rate does not affect the tail
    Ok(timings.breakdown(profile, strategy, 1.0).tail_ms)
}

fn handle_connection(stream: TcpStream, profile: &ModelProfile, hash: u64) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream.try_clone()?);

    if let Err(e) = wire::read_preamble(&mut reader) {
        let _ = send_error(&mut writer, wire::ERR_MALFORMED, e.to_string());
        return Err(e);
    }
    match wire::read_frame(&mut reader) {
        Ok(Some(WireMessage::Hello { profile_hash })) if profile_hash == hash => {
            WireMessage::Hello { profile_hash: hash }.write_to(&mut writer)?;
        }
        Ok(Some(WireMessage::Hello { profile_hash })) => {
            send_error(
                &mut writer,
                wire::ERR_HASH_MISMATCH,
                format!("profile hash mismatch: device {profile_hash:016x}, server {hash:016x}"),
            )?;
            let _ = stream.shutdown(Shutdown::Both);
            return Ok(());
        }
        Ok(None) => return Ok(()),
        Ok(Some(other)) => {
            send_error(
                &mut writer,
                wire::ERR_MALFORMED,
                format!("expected Hello, got {}", frame_name(&other)),
            )?;
            return Ok(());
        }
        Err(e) => {
            let _ = send_error(&mut writer, wire::ERR_MALFORMED, e.to_string());
            return Err(e);
        }
    }

    loop {
        let frame = match wire::read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(e @ Error::Protocol(_)) => {
                let _ = send_error(&mut writer, wire::ERR_MALFORMED, e.to_string());
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let WireMessage::InferRequest {
            request_id,
            strategy,
            split_layer,
            batch,
            payload: _,
        } = frame
        else {
            send_error(
                &mut writer,
                wire::ERR_MALFORMED,
                format!("unexpected {} frame", frame_name(&frame)),
            )?;
            return Ok(());
        };
        match tail_ms(profile, strategy, split_layer, batch) {
            Ok(ms) => {
                let start = Instant::now();
                if ms > 0.0 {
                    thread::sleep(Duration::from_secs_f64(ms / 1000.0));
                }
                let server_compute_ns = start.elapsed().as_nanos() as u64;
                WireMessage::InferResponse {
                    request_id,
                    server_compute_ns,
                }
                .write_to(&mut writer)?;
            }
            Err((code, message)) => send_error(&mut writer, code, message)?,
        }
    }
}

fn frame_name(msg: &WireMessage) -> &'static str {
    match msg {
        WireMessage::Hello { .. } => "Hello",
        WireMessage::InferRequest { .. } => "InferRequest",
        WireMessage::InferResponse { .. } => "InferResponse",
        WireMessage::Error { .. } => "Error",
    }
}
