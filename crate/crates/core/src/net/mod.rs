//! Loopback harness validating the latency model against real sockets.
//!
//! The server sleeps the profiled tail time for each request; the device
//! sleeps the head time and pushes a zero payload through a token bucket set
//! to the step's data rate. Each connection carries one request at a time.

pub mod device;
pub mod server;
pub mod throttle;
pub mod wire;

pub use device::{run_device, run_device_with, DeviceOptions, RunRecord, RunReport};
pub use server::{serve, RunningServer, Server, ShutdownHandle};
pub use throttle::{throttle, TokenBucket};
pub use wire::{WireMessage, WireStrategy};
