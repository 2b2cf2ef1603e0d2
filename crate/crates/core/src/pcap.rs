//! Minimal classic pcap container support: little-endian files, Ethernet or
//! raw-IPv4 link types, and just enough IPv4/UDP handling to reach the CSI
//! datagrams.
//!
//! See <https://wiki.wireshark.org/Development/LibpcapFileFormat>.

use std::io::{self, Write};

use thiserror::Error;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

const ETHERTYPE_IPV4: u16 = 0x0800;
const IPPROTO_UDP: u8 = 17;
const ETHERNET_HEADER_LEN: usize = 14;
const UDP_HEADER_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcapError {
    #[error("capture truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("not a little-endian pcap file (magic {0:#010x})")]
    BadFileMagic(u32),
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Ethernet,
    RawIp,
}

impl LinkType {
    pub fn from_raw(raw: u32) -> Option<Self> {
        match raw {
            1 => Some(LinkType::Ethernet),
            // LINKTYPE_RAW and LINKTYPE_IPV4
            101 | 228 => Some(LinkType::RawIp),
            _ => None,
        }
    }

    pub fn to_raw(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Packet<'a> {
    pub ts_sec: u32,
    /// Microseconds, already converted from nanoseconds when needed.
    pub ts_usec: u32,
    pub data: &'a [u8],
}

impl Packet<'_> {
    pub fn timestamp(&self) -> f64 {
        timestamp_from_micros(self.ts_sec as u64 * 1_000_000 + self.ts_usec as u64)
    }
}

pub fn timestamp_from_micros(micros: u64) -> f64 {
    (micros / 1_000_000) as f64 + (micros % 1_000_000) as f64 * 1e-6
}

/// Inverse of [`timestamp_from_micros`] for non-negative timestamps.
pub fn timestamp_to_micros(ts: f64) -> u64 {
    let sec = ts.floor();
    let usec = ((ts - sec) * 1e6).round();
    sec as u64 * 1_000_000 + usec as u64
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Streaming reader over an in-memory pcap image.
#[derive(Debug)]
pub struct PcapReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    link: LinkType,
    nanos: bool,
}

impl<'a> PcapReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, PcapError> {
        if bytes.len() < GLOBAL_HEADER_LEN {
            return Err(PcapError::Truncated {
                offset: bytes.len(),
            });
        }
        let magic = read_u32(bytes, 0);
        let nanos = match magic {
            MAGIC_MICROS => false,
            MAGIC_NANOS => true,
            other => return Err(PcapError::BadFileMagic(other)),
        };
        let raw_link = read_u32(bytes, 20);
        let link = LinkType::from_raw(raw_link).ok_or(PcapError::UnsupportedLinkType(raw_link))?;
        Ok(Self {
            bytes,
            pos: GLOBAL_HEADER_LEN,
            link,
            nanos,
        })
    }

    pub fn link_type(&self) -> LinkType {
        self.link
    }

    pub fn next_packet(&mut self) -> Option<Result<Packet<'a>, PcapError>> {
        let rest = self.bytes.len() - self.pos;
        if rest == 0 {
            return None;
        }
        if rest < RECORD_HEADER_LEN {
            let offset = self.pos;
            self.pos = self.bytes.len();
            return Some(Err(PcapError::Truncated { offset }));
        }
        let h = self.pos;
        let ts_sec = read_u32(self.bytes, h);
        let frac = read_u32(self.bytes, h + 4);
        let incl_len = read_u32(self.bytes, h + 8) as usize;
        let start = h + RECORD_HEADER_LEN;
        if incl_len > self.bytes.len() - start {
            self.pos = self.bytes.len();
            return Some(Err(PcapError::Truncated { offset: h }));
        }
        self.pos = start + incl_len;
        let ts_usec = if self.nanos { frac / 1000 } else { frac };
        Some(Ok(Packet {
            ts_sec,
            ts_usec,
            data: &self.bytes[start..start + incl_len],
        }))
    }
}

/// Returns the UDP payload of `data` if it is an IPv4/UDP datagram addressed
/// to `port`.
pub fn udp_payload(link: LinkType, data: &[u8], port: u16) -> Option<&[u8]> {
    let ip = match link {
        LinkType::Ethernet => {
            if data.len() < ETHERNET_HEADER_LEN
                || u16::from_be_bytes([data[12], data[13]]) != ETHERTYPE_IPV4
            {
                return None;
            }
            &data[ETHERNET_HEADER_LEN..]
        }
        LinkType::RawIp => data,
    };
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = (ip[0] & 0x0f) as usize * 4;
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if ihl < 20 || total_len < ihl || total_len > ip.len() || ip[9] != IPPROTO_UDP {
        return None;
    }
    let udp = &ip[ihl..total_len];
    if udp.len() < UDP_HEADER_LEN {
        return None;
    }
    let dst_port = u16::from_be_bytes([udp[2], udp[3]]);
    let udp_len = u16::from_be_bytes([udp[4], udp[5]]) as usize;
    if dst_port != port || udp_len < UDP_HEADER_LEN || udp_len > udp.len() {
        return None;
    }
    Some(&udp[UDP_HEADER_LEN..udp_len])
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Wraps `payload` in IPv4/UDP (and Ethernet, for that link type) headers.
/// UDP checksum is left at zero, which IPv4 permits.
pub fn encapsulate_udp(link: LinkType, payload: &[u8], src_port: u16, dst_port: u16) -> Vec<u8> {
    let udp_len = UDP_HEADER_LEN + payload.len();
    let total_len = 20 + udp_len;
    let mut out = Vec::with_capacity(ETHERNET_HEADER_LEN + total_len);
    if link == LinkType::Ethernet {
        out.extend_from_slice(&[0xff; 6]);
        out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    }
    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(total_len as u16).to_be_bytes());
    ip[8] = 64;
    ip[9] = IPPROTO_UDP;
    ip[12..16].copy_from_slice(&[10, 10, 10, 10]);
    ip[16..20].copy_from_slice(&[255, 255, 255, 255]);
    let csum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&csum.to_be_bytes());
    out.extend_from_slice(&ip);
    out.extend_from_slice(&src_port.to_be_bytes());
    out.extend_from_slice(&dst_port.to_be_bytes());
    out.extend_from_slice(&(udp_len as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(payload);
    out
}

pub struct PcapWriter<W> {
    inner: W,
    link: LinkType,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, link: LinkType) -> io::Result<Self> {
        inner.write_all(&MAGIC_MICROS.to_le_bytes())?;
        inner.write_all(&2u16.to_le_bytes())?;
        inner.write_all(&4u16.to_le_bytes())?;
        inner.write_all(&0i32.to_le_bytes())?;
        inner.write_all(&0u32.to_le_bytes())?;
        inner.write_all(&65535u32.to_le_bytes())?;
        inner.write_all(&link.to_raw().to_le_bytes())?;
        Ok(Self { inner, link })
    }

    pub fn link_type(&self) -> LinkType {
        self.link
    }

    pub fn write_packet(&mut self, micros: u64, data: &[u8]) -> io::Result<()> {
        let sec = (micros / 1_000_000) as u32;
        let usec = (micros % 1_000_000) as u32;
        self.inner.write_all(&sec.to_le_bytes())?;
        self.inner.write_all(&usec.to_le_bytes())?;
        self.inner.write_all(&(data.len() as u32).to_le_bytes())?;
        self.inner.write_all(&(data.len() as u32).to_le_bytes())?;
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
