//! Device agent: replays a scenario against a server, emulating head compute
//! with sleeps and the channel with a token bucket.

use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::throttle::throttle;
use super::wire::{self, WireMessage, WireStrategy};
use crate::decision::{candidates_with, select_best, BatchTimings, DecisionOptions, Strategy};
use crate::error::{Error, Result};
use crate::profile::ModelProfile;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceOptions {
    pub decision: DecisionOptions,
    /// Use this strategy at every step instead of the argmin.
    pub force: Option<Strategy>,
    /// Skip the network entirely when running everything locally.
    pub no_offload_silent: bool,
}

/// Outcome of one scenario step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub req_id: u64,
    pub strategy: Option<Strategy>,
    pub batch: u32,
    pub rate_bps: f64,
    pub predicted_ms: Option<f64>,
    pub measured_ms: Option<f64>,
    /// Emulated head compute as actually slept.
    pub device_ms: Option<f64>,
    /// Time spent pushing the request through the throttled channel.
    pub channel_ms: Option<f64>,
    /// Server compute as reported by the server.
    pub server_ms: Option<f64>,
    /// `ok` or a description of the failure.
    pub status: String,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub profile_hash: String,
    pub records: Vec<RunRecord>,
}

impl RunReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "req_id",
            "strategy",
            "split_layer",
            "batch",
            "rate_bps",
            "predicted_ms",
            "measured_ms",
            "status",
        ])?;
        for r in &self.records {
            w.serialize((
                r.req_id,
                r.strategy.map(|s| s.kind()),
                r.strategy.and_then(|s| s.split_layer()),
                r.batch,
                r.rate_bps,
                r.predicted_ms,
                r.measured_ms,
                &r.status,
            ))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run report is serializable")
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Connection {
    fn open(addr: impl ToSocketAddrs, hash: u64) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut conn = Connection {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        };
        wire::write_preamble(&mut conn.writer)?;
        WireMessage::Hello { profile_hash: hash }.write_to(&mut conn.writer)?;
        match conn.receive()? {
            WireMessage::Hello { profile_hash } if profile_hash == hash => Ok(conn),
            WireMessage::Hello { profile_hash } => Err(Error::Protocol(format!(
                "server acknowledged with hash {profile_hash:016x}, expected {hash:016x}"
            ))),
            other => Err(unexpected(other)),
        }
    }

    fn receive(&mut self) -> Result<WireMessage> {
        match wire::read_frame(&mut self.reader)? {
            Some(WireMessage::Error { code, message }) => Err(Error::Remote { code, message }),
            Some(msg) => Ok(msg),
            None => Err(Error::Protocol("server closed the connection".into())),
        }
    }

    /// Sends one request with a throttled zero payload; returns the channel
    /// time and the server's reported compute time.
    fn request(
        &mut self,
        request_id: u64,
        strategy: Strategy,
        batch: u32,
        payload_bytes: u64,
        rate_bps: f64,
    ) -> Result<(Duration, Duration)> {
        let (code, split_layer) = match strategy {
            Strategy::FullOffload => (WireStrategy::FullOffload, 0),
            Strategy::SplitAt(j) => (
                WireStrategy::Split,
                u16::try_from(j)
                    .map_err(|_| Error::InvalidStrategy(format!("split layer {j} does not fit the wire format")))?,
            ),
            Strategy::NoOffload => (WireStrategy::NoOffloadReport, 0),
        };
        let start = Instant::now();
        self.writer.write_all(&wire::infer_request_header(
            request_id,
            code,
            split_layer,
            batch,
            payload_bytes,
        ))?;
        self.writer.flush()?;
        throttle(self.writer.get_mut(), payload_bytes, rate_bps)?;
        let channel = start.elapsed();
        match self.receive()? {
            WireMessage::InferResponse {
                request_id: id,
                server_compute_ns,
            } if id == request_id => Ok((channel, Duration::from_nanos(server_compute_ns))),
            WireMessage::InferResponse { request_id: id, .. } => Err(Error::Protocol(format!(
                "response for request {id} while waiting for {request_id}"
            ))),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(msg: WireMessage) -> Error {
    Error::Protocol(format!("unexpected frame {msg:?}"))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn run_device(
    addr: impl ToSocketAddrs,
    profile: &ModelProfile,
    scenario: &Scenario,
    allow_full_offload: bool,
) -> Result<RunReport> {
    let opts = DeviceOptions {
        decision: DecisionOptions::restricted(allow_full_offload),
        ..Default::default()
    };
    run_device_with(addr, profile, scenario, &opts)
}

/// Replays `scenario`, one stop-and-wait request per step.
///
/// Connecting and the handshake must succeed; after that, failures are
/// recorded per step and the run continues. A lost connection is not
/// re-established.
pub fn run_device_with(
    addr: impl ToSocketAddrs,
    profile: &ModelProfile,
    scenario: &Scenario,
    opts: &DeviceOptions,
) -> Result<RunReport> {
    if let Some(forced) = opts.force {
        forced.validate_for(profile)?;
    }
    let hash = profile.canonical_hash();
    let mut conn = Some(Connection::open(addr, hash)?);
    let candidates = candidates_with(profile, &opts.decision);
    let mut records = Vec::with_capacity(scenario.len());

    for (i, state) in scenario.states().enumerate() {
        let mut record = RunRecord {
            req_id: i as u64,
            strategy: None,
            batch: state.batch,
            rate_bps: state.rate_bps,
            predicted_ms: None,
            measured_ms: None,
            device_ms: None,
            channel_ms: None,
            server_ms: None,
            status: "ok".into(),
        };
        let timings = match state
            .validate()
            .and_then(|_| BatchTimings::for_options(profile, state.batch, &opts.decision))
        {
            Ok(t) => t,
            Err(e) => {
                record.status = format!("error: {e}");
                records.push(record);
                continue;
            }
        };
        let (strategy, predicted) = match opts.force {
            Some(s) => (s, timings.breakdown(profile, s, state.rate_bps)),
            None => {
                let d = select_best(
                    profile.depth(),
                    candidates
                        .iter()
                        .map(|&s| (s, timings.breakdown(profile, s, state.rate_bps))),
                )
                .expect("candidate list always contains NoOffload");
                (d.strategy, d.latency)
            }
        };
        record.strategy = Some(strategy);
        record.predicted_ms = Some(predicted.total_ms);

        let start = Instant::now();
        if predicted.head_ms > 0.0 {
            thread::sleep(Duration::from_secs_f64(predicted.head_ms / 1000.0));
        }
        record.device_ms = Some(ms(start.elapsed()));

        if strategy == Strategy::NoOffload && opts.no_offload_silent {
            record.measured_ms = Some(ms(start.elapsed()));
            records.push(record);
            continue;
        }
        let Some(c) = conn.as_mut() else {
            record.status = "error: connection lost".into();
            records.push(record);
            continue;
        };
        match c.request(
            record.req_id,
            strategy,
            state.batch,
            predicted.payload_bytes,
            state.rate_bps,
        ) {
            Ok((channel, server)) => {
                record.measured_ms = Some(ms(start.elapsed()));
                record.channel_ms = Some(ms(channel));
                record.server_ms = Some(ms(server));
            }
            Err(e) => {
                log::warn!("request {}: {e}", record.req_id);
                record.status = format!("error: {e}");
                // the stream is still in sync after an Error frame unless the server hung up
                let recoverable = matches!(e, Error::Remote { code, .. } if code != wire::ERR_MALFORMED);
                if !recoverable {
                    conn = None;
                }
            }
        }
        records.push(record);
    }
    Ok(RunReport {
        profile_hash: format!("{hash:016x}"),
        records,
    })
}
