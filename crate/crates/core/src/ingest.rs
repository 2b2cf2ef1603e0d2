//! Nexmon CSI capture ingestion.
//!
//! CSI records travel as UDP datagrams to port 5500. Each payload is an
//! 18-byte header followed by 256 complex bins as interleaved little-endian
//! `int16` pairs (the bcm43455c0 / Raspberry Pi layout). Bins are stored in
//! FFT-shifted order, subcarrier -128 first.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcap::{self, LinkType, PcapError, PcapReader, PcapWriter};
use crate::NUM_SUBCARRIERS;

pub const CSI_UDP_PORT: u16 = 5500;
pub const RECORD_MAGIC: u16 = 0x1111;
pub const RECORD_HEADER_LEN: usize = 18;
pub const RAW_BINS: usize = 256;
/// Chip version word written by the bcm43455c0 firmware.
pub const CHIP_BCM43455C0: u16 = 0x4345;

const RECORD_LEN: usize = RECORD_HEADER_LEN + RAW_BINS * 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("capture file truncated at byte {offset}")]
    FileTruncated { offset: usize },
    #[error("not a little-endian pcap file (magic {0:#010x})")]
    NotPcap(u32),
    #[error("unsupported pcap link type {0}")]
    UnsupportedLinkType(u32),
    #[error("unsupported CSI width: expected 256 raw bins, got {0}")]
    UnsupportedWidth(usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<PcapError> for IngestError {
    fn from(e: PcapError) -> Self {
        match e {
            PcapError::Truncated { offset } => IngestError::FileTruncated { offset },
            PcapError::BadFileMagic(m) => IngestError::NotPcap(m),
            PcapError::UnsupportedLinkType(l) => IngestError::UnsupportedLinkType(l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

/// One received CSI record.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    /// Capture time in seconds.
    pub timestamp: f64,
    pub source_mac: MacAddr,
    pub seq_no: u16,
    /// dBm.
    pub rssi: i8,
    pub frame_control: u8,
    pub core_ss: u16,
    pub chanspec: u16,
    pub chip: u16,
    /// 242 non-null subcarriers in ascending frequency order.
    pub csi: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeFrame {
    pub timestamp: f64,
    pub amp: Vec<f64>,
}

/// Why records were dropped while parsing a capture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipTally {
    pub bad_magic: usize,
    pub unsupported_width: usize,
    pub out_of_order: usize,
    /// Packets that are not CSI datagrams at all. Not counted as skips.
    pub ignored_packets: usize,
}

impl SkipTally {
    pub fn skipped(&self) -> usize {
        self.bad_magic + self.unsupported_width + self.out_of_order
    }
}

#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub frames: Vec<CsiFrame>,
    pub tally: SkipTally,
}

/// Subcarrier numbers (-128..=127) that carry data or pilots on an 80 MHz
/// VHT channel.
pub fn kept_subcarriers() -> Vec<i32> {
    (-128..128).filter(|&sc| !is_null_subcarrier(sc)).collect()
}

pub fn is_null_subcarrier(sc: i32) -> bool {
    sc <= -123 || (-1..=1).contains(&sc) || sc >= 123
}

/// Drops the 14 DC/guard bins from an FFT-shifted 256-bin vector.
pub fn drop_null_subcarriers<T: Copy>(raw: &[T]) -> Result<Vec<T>, IngestError> {
    if raw.len() != RAW_BINS {
        return Err(IngestError::UnsupportedWidth(raw.len()));
    }
    Ok(raw
        .iter()
        .zip(-128i32..)
        .filter(|(_, sc)| !is_null_subcarrier(*sc))
        .map(|(v, _)| *v)
        .collect())
}

pub fn extract_amplitude(frame: &CsiFrame) -> AmplitudeFrame {
    AmplitudeFrame {
        timestamp: frame.timestamp,
        amp: frame
            .csi
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .collect(),
    }
}

enum RecordReject {
    BadMagic,
    UnsupportedWidth,
}

fn decode_record(payload: &[u8], timestamp: f64) -> Result<CsiFrame, RecordReject> {
    if payload.len() < 2 || u16::from_le_bytes([payload[0], payload[1]]) != RECORD_MAGIC {
        return Err(RecordReject::BadMagic);
    }
    if payload.len() != RECORD_LEN {
        return Err(RecordReject::UnsupportedWidth);
    }
    let u16_at = |at: usize| u16::from_le_bytes([payload[at], payload[at + 1]]);
    let chip = u16_at(16);
    if chip != CHIP_BCM43455C0 {
        return Err(RecordReject::UnsupportedWidth);
    }
    let mut mac = [0u8; 6];
    mac.copy_from_slice(&payload[4..10]);
    let raw: Vec<Complex64> = payload[RECORD_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| {
            let re = i16::from_le_bytes([c[0], c[1]]);
            let im = i16::from_le_bytes([c[2], c[3]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let csi = drop_null_subcarriers(&raw).map_err(|_| RecordReject::UnsupportedWidth)?;
    Ok(CsiFrame {
        timestamp,
        source_mac: MacAddr(mac),
        seq_no: u16_at(10),
        rssi: payload[2] as i8,
        frame_control: payload[3],
        core_ss: u16_at(12),
        chanspec: u16_at(14),
        chip,
        csi,
    })
}

/// Serializes a frame into the on-air record layout. Complex values are
/// rounded to the nearest `int16` and saturated; null bins are written as 0.
pub fn encode_record(frame: &CsiFrame) -> Vec<u8> {
    assert_eq!(
        frame.csi.len(),
        NUM_SUBCARRIERS,
        "frame must carry 242 subcarriers"
    );
    let mut out = Vec::with_capacity(RECORD_LEN);
    out.extend_from_slice(&RECORD_MAGIC.to_le_bytes());
    out.push(frame.rssi as u8);
    out.push(frame.frame_control);
    out.extend_from_slice(&frame.source_mac.0);
    out.extend_from_slice(&frame.seq_no.to_le_bytes());
    out.extend_from_slice(&frame.core_ss.to_le_bytes());
    out.extend_from_slice(&frame.chanspec.to_le_bytes());
    out.extend_from_slice(&frame.chip.to_le_bytes());
    let mut kept = frame.csi.iter();
    for sc in -128i32..128 {
        let c = if is_null_subcarrier(sc) {
            Complex64::new(0.0, 0.0)
        } else {
            *kept.next().expect("242 kept subcarriers")
        };
        out.extend_from_slice(&quantize_i16(c.re).to_le_bytes());
        out.extend_from_slice(&quantize_i16(c.im).to_le_bytes());
    }
    out
}

pub fn quantize_i16(x: f64) -> i16 {
    x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Parses a pcap image into CSI frames.
///
/// Non-CSI packets are ignored. Records with a wrong magic, a wrong width or
/// chip, or a timestamp earlier than the previous accepted frame are skipped
/// and tallied. An empty input yields an empty capture.
pub fn parse_capture(bytes: &[u8]) -> Result<Capture, IngestError> {
    let mut capture = Capture::default();
    if bytes.is_empty() {
        return Ok(capture);
    }
    let mut reader = PcapReader::new(bytes)?;
    let link = reader.link_type();
    let mut last_ts = f64::NEG_INFINITY;
    while let Some(packet) = reader.next_packet() {
        let packet = packet?;
        let Some(payload) = pcap::udp_payload(link, packet.data, CSI_UDP_PORT) else {
            capture.tally.ignored_packets += 1;
            continue;
        };
        let ts = packet.timestamp();
        match decode_record(payload, ts) {
            Ok(_) if ts < last_ts => capture.tally.out_of_order += 1,
            Ok(frame) => {
                last_ts = ts;
                capture.frames.push(frame);
            }
            Err(RecordReject::BadMagic) => capture.tally.bad_magic += 1,
            Err(RecordReject::UnsupportedWidth) => capture.tally.unsupported_width += 1,
        }
    }
    Ok(capture)
}

/// Writes frames as a pcap capture of UDP datagrams to port 5500.
pub fn write_capture<W: Write>(
    frames: &[CsiFrame],
    out: W,
    link: LinkType,
) -> Result<W, IngestError> {
    let mut writer = PcapWriter::new(out, link)?;
    for frame in frames {
        let datagram =
            pcap::encapsulate_udp(link, &encode_record(frame), CSI_UDP_PORT, CSI_UDP_PORT);
        writer.write_packet(pcap::timestamp_to_micros(frame.timestamp), &datagram)?;
    }
    Ok(writer.into_inner())
}
