//! Simulated DSRC layer: basic safety messages, their binary frame and an
//! in-process broadcast bus with latency and seeded loss.
//!
//! Frame layout (46 bytes, little endian):
//!
//! | offset | size | field              |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `BSM1`       |
//! | 4      | 4    | vehicle_id u32     |
//! | 8      | 4    | timestamp_ms u32   |
//! | 12     | 8    | x f64 (m)          |
//! | 20     | 8    | y f64 (m)          |
//! | 28     | 8    | speed f64 (m/s)    |
//! | 36     | 8    | heading f64 (rad)  |
//! | 44     | 1    | brake_flag u8      |
//! | 45     | 1    | reserved, 0        |

use std::io::{self, Read, Write};
use std::net::{SocketAddr, UdpSocket};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::normalize_heading;

pub const FRAME_LEN: usize = 46;
pub const MAGIC: [u8; 4] = *b"BSM1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsmRecord {
    pub vehicle_id: u32,
    /// Milliseconds since scenario start.
    pub timestamp_ms: u32,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    /// Radians in [0, 2pi).
    pub heading: f64,
    pub brake_flag: bool,
}

impl BsmRecord {
    pub fn time_s(&self) -> f64 {
        f64::from(self.timestamp_ms) / 1000.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("frame must be {FRAME_LEN} bytes, got {0}")]
    BadLength(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("field {0} is not finite")]
    NonFiniteField(&'static str),
}

pub fn encode_bsm(record: &BsmRecord) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[0..4].copy_from_slice(&MAGIC);
    out[4..8].copy_from_slice(&record.vehicle_id.to_le_bytes());
    out[8..12].copy_from_slice(&record.timestamp_ms.to_le_bytes());
    out[12..20].copy_from_slice(&record.x.to_le_bytes());
    out[20..28].copy_from_slice(&record.y.to_le_bytes());
    out[28..36].copy_from_slice(&record.speed.to_le_bytes());
    out[36..44].copy_from_slice(&record.heading.to_le_bytes());
    out[44] = u8::from(record.brake_flag);
    out
}

pub fn decode_bsm(bytes: &[u8]) -> Result<BsmRecord, CodecError> {
    if bytes.len() != FRAME_LEN {
        return Err(CodecError::BadLength(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let f64_at = |i: usize, name: &'static str| {
        let v = f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CodecError::NonFiniteField(name))
        }
    };
    Ok(BsmRecord {
        vehicle_id: u32_at(4),
        timestamp_ms: u32_at(8),
        x: f64_at(12, "x")?,
        y: f64_at(20, "y")?,
        speed: f64_at(28, "speed")?,
        heading: normalize_heading(f64_at(36, "heading")?),
        brake_flag: bytes[44] != 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_latency", rename = "latency_s")]
    pub latency: f64,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default, rename = "seed")]
    pub rng_seed: u64,
}

fn default_rate() -> f64 {
    10.0
}

fn default_latency() -> f64 {
    0.02
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            rate_hz: default_rate(),
            latency: default_latency(),
            drop_probability: 0.0,
            rng_seed: 0,
        }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.rate_hz > 0.0) {
            errs.push(format!("bus.rate_hz must be > 0, got {}", self.rate_hz));
        }
        if !(self.latency >= 0.0) {
            errs.push(format!("bus.latency_s must be >= 0, got {}", self.latency));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            errs.push(format!("bus.drop_probability must be in [0, 1], got {}", self.drop_probability));
        }
        errs
    }
}

fn to_micros(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

/// Tick-aligned broadcast cadence: a vehicle publishes on tick `k` when
/// `k * dt` is a multiple of the broadcast period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastSchedule {
    ticks_per_message: u64,
}

impl BroadcastSchedule {
    /// `None` when the period is not an integer multiple of `dt`.
    pub fn new(rate_hz: f64, dt: f64) -> Option<Self> {
        let ratio = 1.0 / (rate_hz * dt);
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 {
            return None;
        }
        Some(Self { ticks_per_message: rounded as u64 })
    }

    pub fn is_due(&self, tick: u64) -> bool {
        tick.is_multiple_of(self.ticks_per_message)
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at_us: i64,
    receiver: u32,
    record: BsmRecord,
}

/// Counters kept by the bus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BusStats {
    pub published: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Broadcast bus. Every published record is offered to each other member,
/// dropped with the configured probability or delivered after `latency`.
#[derive(Debug)]
pub struct Bus {
    config: BusConfig,
    members: Vec<u32>,
    rng: ChaCha8Rng,
    in_flight: Vec<InFlight>,
    stats: BusStats,
}

impl Bus {
    pub fn new(config: BusConfig, members: impl IntoIterator<Item = u32>) -> Self {
        let mut members: Vec<u32> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            members,
            in_flight: Vec::new(),
            stats: BusStats::default(),
        }
    }

    pub fn config(&self) -> &BusConfig {
        &self.config
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }

    pub fn publish(&mut self, record: BsmRecord, now: f64) {
        self.stats.published += 1;
        let deliver_at_us = to_micros(now) + to_micros(self.config.latency);
        for &receiver in &self.members {
            if receiver == record.vehicle_id {
                continue;
            }
            let roll: f64 = self.rng.gen();
            if roll < self.config.drop_probability {
                self.stats.dropped += 1;
                continue;
            }
            self.in_flight.push(InFlight {
                deliver_at_us,
                receiver,
                record,
            });
        }
    }

    /// Removes and returns the records due for `receiver` at `now`, ordered
    /// by delivery time, then sender id.
    pub fn poll(&mut self, receiver: u32, now: f64) -> Vec<BsmRecord> {
        let now_us = to_micros(now);
        let mut due = Vec::new();
        self.in_flight.retain(|m| {
            if m.receiver == receiver && m.deliver_at_us <= now_us {
                due.push((m.deliver_at_us, m.record));
                false
            } else {
                true
            }
        });
        due.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.vehicle_id.cmp(&b.1.vehicle_id)));
        self.stats.delivered += due.len() as u64;
        due.into_iter().map(|(_, r)| r).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

/// Writes frames back to back.
pub fn write_message_log<W: Write>(mut out: W, records: &[BsmRecord]) -> io::Result<()> {
    for r in records {
        out.write_all(&encode_bsm(r))?;
    }
    out.flush()
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: CodecError },
    #[error("trailing {0} bytes do not form a frame")]
    Truncated(usize),
}

pub fn read_message_log<R: Read>(mut input: R) -> Result<Vec<BsmRecord>, LogError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let rem = bytes.len() % FRAME_LEN;
    if rem != 0 {
        return Err(LogError::Truncated(rem));
    }
    bytes
        .chunks_exact(FRAME_LEN)
        .enumerate()
        .map(|(index, frame)| decode_bsm(frame).map_err(|source| LogError::Frame { index, source }))
        .collect()
}

/// Fire-and-forget datagram export of each frame.
#[derive(Debug)]
pub struct UdpExporter {
    socket: UdpSocket,
    target: SocketAddr,
}

impl UdpExporter {
    pub fn new(target: SocketAddr) -> io::Result<Self> {
        let bind: SocketAddr = if target.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        Ok(Self {
            socket: UdpSocket::bind(bind)?,
            target,
        })
    }

    /// Send errors are ignored.
    pub fn send(&self, record: &BsmRecord) {
        let _ = self.socket.send_to(&encode_bsm(record), self.target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: u32, t: u32) -> BsmRecord {
        BsmRecord {
            vehicle_id: id,
            timestamp_ms: t,
            x: 1.5,
            y: -2.0,
            speed: 12.0,
            heading: 1.0,
            brake_flag: false,
        }
    }

    #[test]
    fn frame_prefix_and_zero_record() {
        let zero = BsmRecord { vehicle_id: 1, timestamp_ms: 0, x: 0.0, y: 0.0, speed: 0.0, heading: 0.0, brake_flag: false };
        let bytes = encode_bsm(&zero);
        assert_eq!(bytes.len(), 46);
        assert_eq!(&bytes[..4], &[0x42, 0x53, 0x4D, 0x31]);
        assert_eq!(bytes[4], 1);
        assert!(bytes[5..].iter().all(|&b| b == 0));
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_bsm(&rec(3, 5));
        assert_eq!(decode_bsm(&bytes[..45]), Err(CodecError::BadLength(45)));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode_bsm(&bad), Err(CodecError::BadMagic(_))));
        let mut nan = bytes;
        nan[28..36].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_bsm(&nan), Err(CodecError::NonFiniteField("speed")));
    }

    #[test]
    fn decode_normalizes_heading() {
        let mut r = rec(1, 0);
        r.heading = -std::f64::consts::FRAC_PI_2;
        let back = decode_bsm(&encode_bsm(&r)).unwrap();
        assert!((back.heading - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn latency_contract() {
        let cfg = BusConfig { latency: 0.05, ..Default::default() };
        let mut bus = Bus::new(cfg, [1, 2]);
        bus.publish(rec(1, 1000), 1.0);
        assert!(bus.poll(2, 1.04).is_empty());
        assert_eq!(bus.poll(2, 1.05).len(), 1);
        assert!(bus.poll(1, 2.0).is_empty());
    }

    #[test]
    fn total_loss() {
        let cfg = BusConfig { drop_probability: 1.0, ..Default::default() };
        let mut bus = Bus::new(cfg, [1, 2, 3]);
        for k in 0..100 {
            bus.publish(rec(1 + k % 3, k * 100), f64::from(k) * 0.1);
        }
        for id in 1..=3 {
            assert!(bus.poll(id, 100.0).is_empty());
        }
        assert_eq!(bus.stats().dropped, 200);
    }

    #[test]
    fn cadence_ten_hz() {
        let sched = BroadcastSchedule::new(10.0, 0.01).unwrap();
        let ticks: Vec<u64> = (0..100).filter(|&k| sched.is_due(k)).collect();
        assert_eq!(ticks, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]);
        assert!(BroadcastSchedule::new(3.0, 0.01).is_none());
    }

    #[test]
    fn delivery_order() {
        let cfg = BusConfig { latency: 0.0, ..Default::default() };
        let mut bus = Bus::new(cfg, [1, 2, 3, 4]);
        bus.publish(rec(3, 0), 0.0);
        bus.publish(rec(2, 0), 0.0);
        bus.publish(rec(4, 100), 0.1);
        let got: Vec<u32> = bus.poll(1, 0.1).iter().map(|r| r.vehicle_id).collect();
        assert_eq!(got, vec![2, 3, 4]);
    }

    #[test]
    fn message_log_roundtrip() {
        let records: Vec<BsmRecord> = (0..5).map(|i| rec(i, i * 100)).collect();
        let mut buf = Vec::new();
        write_message_log(&mut buf, &records).unwrap();
        assert_eq!(buf.len(), 5 * FRAME_LEN);
        assert_eq!(read_message_log(&buf[..]).unwrap(), records);
        assert!(matches!(read_message_log(&buf[..50]), Err(LogError::Truncated(4))));
    }

    #[test]
    fn udp_export_delivers_frame() {
        let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
        rx.set_read_timeout(Some(std::time::Duration::from_secs(2))).unwrap();
        let exporter = UdpExporter::new(rx.local_addr().unwrap()).unwrap();
        exporter.send(&rec(7, 42));
        let mut buf = [0u8; 64];
        let (n, _) = rx.recv_from(&mut buf).unwrap();
        assert_eq!(decode_bsm(&buf[..n]).unwrap(), rec(7, 42));
    }

    fn arb_record() -> impl Strategy<Value = BsmRecord> {
        (any::<u32>(), any::<u32>(), -1e6f64..1e6, -1e6f64..1e6, 0.0f64..100.0, 0.0f64..std::f64::consts::TAU, any::<bool>())
            .prop_map(|(vehicle_id, timestamp_ms, x, y, speed, heading, brake_flag)| BsmRecord {
                vehicle_id, timestamp_ms, x, y, speed, heading, brake_flag,
            })
    }

    proptest! {
        #[test]
        fn codec_roundtrip(r in arb_record()) {
            prop_assert_eq!(decode_bsm(&encode_bsm(&r)).unwrap(), r);
        }

        #[test]
        fn bus_conservation_and_causality(seed in any::<u64>(), p in 0.0f64..=1.0, lat in 0.0f64..0.3, n in 2u32..6) {
            let cfg = BusConfig { latency: lat, drop_probability: p, rng_seed: seed, ..Default::default() };
            let mut bus = Bus::new(cfg, 1..=n);
            let mut delivered = 0u64;
            for k in 0..50u32 {
                let now = f64::from(k) * 0.1;
                for id in 1..=n {
                    bus.publish(rec(id, k * 100), now);
                }
                for id in 1..=n {
                    for r in bus.poll(id, now) {
                        prop_assert!(r.time_s() + lat <= now + 1e-6);
                        prop_assert_ne!(r.vehicle_id, id);
                        delivered += 1;
                    }
                }
            }
            for id in 1..=n {
                delivered += bus.poll(id, 1e6).len() as u64;
            }
            let s = bus.stats();
            prop_assert_eq!(delivered, s.delivered);
            prop_assert_eq!(s.delivered + s.dropped, s.published * u64::from(n - 1));
        }

        #[test]
        fn bus_deterministic(seed in any::<u64>()) {
            let run = || {
                let cfg = BusConfig { drop_probability: 0.4, rng_seed: seed, ..Default::default() };
                let mut bus = Bus::new(cfg, [1, 2, 3]);
                let mut log = Vec::new();
                for k in 0..30u32 {
                    for id in 1..=3 {
                        bus.publish(rec(id, k * 100), f64::from(k) * 0.1);
                    }
                    for id in 1..=3 {
                        log.extend(bus.poll(id, f64::from(k) * 0.1).into_iter().map(|r| (id, r.vehicle_id, r.timestamp_ms)));
                    }
                }
                log
            };
            prop_assert_eq!(run(), run());
        }
    }
}
