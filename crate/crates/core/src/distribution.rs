//! Map distribution: a versioned store, a request/response wire protocol, a
//! TCP server and a client that evaluates trajectories locally.
//!
//! Clients only ever send a [`MapRequest`] (index ranges) or a version-list
//! request; the trajectory never leaves the client.
//!
//! # Wire format
//!
//! All integers little-endian. A connection carries any number of
//! request/response exchanges.
//!
//! Request, list versions (6 bytes):
//!
//! | offset | size | field                 |
//! |-------:|-----:|-----------------------|
//! |      0 |    4 | magic `PTRQ`          |
//! |      4 |    1 | protocol version (1)  |
//! |      5 |    1 | kind = 1              |
//!
//! Request, get tile (54 bytes):
//!
//! | offset | size | field                          |
//! |-------:|-----:|--------------------------------|
//! |      0 |    4 | magic `PTRQ`                   |
//! |      4 |    1 | protocol version (1)           |
//! |      5 |    1 | kind = 2                       |
//! |      6 |    8 | map version (u64, 0 = latest)  |
//! |     14 |    4 | i_min (i32)                    |
//! |     18 |    4 | i_max (i32)                    |
//! |     22 |    4 | j_min (i32)                    |
//! |     26 |    4 | j_max (i32)                    |
//! |     30 |    8 | k_min (i64)                    |
//! |     38 |    8 | k_max (i64)                    |
//! |     46 |    8 | reserved, zero                 |
//!
//! Response (21-byte header, then payload):
//!
//! | offset | size | field                                     |
//! |-------:|-----:|-------------------------------------------|
//! |      0 |    4 | magic `PTRS`                              |
//! |      4 |    1 | status (0 ok, 1 not found, 2 bad request) |
//! |      5 |    8 | map version (u64, 0 if none)              |
//! |     13 |    8 | payload length (u64)                      |
//! |     21 |    n | payload                                   |
//!
//! The payload is a tile for get-tile, a sequence of u64 version ids for
//! list-versions, and a UTF-8 message for errors. Ranges are inclusive.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellIndex, GridSpec, RiskMap};
use crate::risk::Trajectory;
use crate::tile;

pub const REQUEST_MAGIC: [u8; 4] = *b"PTRQ";
pub const RESPONSE_MAGIC: [u8; 4] = *b"PTRS";
pub const PROTOCOL_VERSION: u8 = 1;
pub const LIST_REQUEST_LEN: usize = 6;
pub const TILE_REQUEST_LEN: usize = 54;
pub const RESPONSE_HEADER_LEN: usize = 21;
/// Responses larger than this are rejected by the client.
pub const MAX_PAYLOAD: u64 = 1 << 32;

pub const DEFAULT_THRESHOLD: f64 = 0.01;

const KIND_LIST: u8 = 1;
const KIND_TILE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    NotFound = 1,
    BadRequest = 2,
}

impl Status {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Status::Ok),
            1 => Ok(Status::NotFound),
            2 => Ok(Status::BadRequest),
            other => Err(Error::Protocol(format!("unknown status byte {other}"))),
        }
    }
}

/// Rectangular block of cells, inclusive on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MapRequest {
    i: (i32, i32),
    j: (i32, i32),
    k: (i64, i64),
}

impl MapRequest {
    pub fn new(i: RangeInclusive<i32>, j: RangeInclusive<i32>, k: RangeInclusive<i64>) -> Result<Self> {
        if i.is_empty() || j.is_empty() || k.is_empty() {
            return Err(Error::Domain(format!("request ranges must be non-empty: {i:?} {j:?} {k:?}")));
        }
        Ok(Self { i: (*i.start(), *i.end()), j: (*j.start(), *j.end()), k: (*k.start(), *k.end()) })
    }

    /// Every cell.
    pub fn everything() -> Self {
        Self { i: (i32::MIN, i32::MAX), j: (i32::MIN, i32::MAX), k: (i64::MIN, i64::MAX) }
    }

    /// Cells intersecting the world-coordinate box `[x0, x1] x [y0, y1] x [t0, t1]`.
    pub fn for_region(spec: &GridSpec, region: &Region) -> Result<Self> {
        let lo = spec.index_of_point(region.x_min, region.y_min, region.t_min)?;
        let hi = spec.index_of_point(region.x_max, region.y_max, region.t_max)?;
        Self::new(lo.i..=hi.i, lo.j..=hi.j, lo.k..=hi.k)
    }

    /// Smallest request covering every cell of `traj`.
    pub fn bounding(spec: &GridSpec, traj: &Trajectory) -> Result<Self> {
        let mut cells = traj.cells().iter().map(|c| spec.index_of_cell(c));
        let first = cells.next().ok_or_else(|| Error::Domain("cannot bound an empty trajectory".into()))??;
        let mut r = Self { i: (first.i, first.i), j: (first.j, first.j), k: (first.k, first.k) };
        for idx in cells {
            let idx = idx?;
            r.i = (r.i.0.min(idx.i), r.i.1.max(idx.i));
            r.j = (r.j.0.min(idx.j), r.j.1.max(idx.j));
            r.k = (r.k.0.min(idx.k), r.k.1.max(idx.k));
        }
        Ok(r)
    }

    pub fn i_range(&self) -> RangeInclusive<i32> {
        self.i.0..=self.i.1
    }

    pub fn j_range(&self) -> RangeInclusive<i32> {
        self.j.0..=self.j.1
    }

    pub fn k_range(&self) -> RangeInclusive<i64> {
        self.k.0..=self.k.1
    }

    pub fn contains(&self, idx: &CellIndex) -> bool {
        self.i_range().contains(&idx.i) && self.j_range().contains(&idx.j) && self.k_range().contains(&idx.k)
    }
}

/// World-coordinate box used to derive a [`MapRequest`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl std::str::FromStr for Region {
    type Err = Error;

    /// `x_min,x_max,y_min,y_max,t_min,t_max`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Format(format!("region component {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [x_min, x_max, y_min, y_max, t_min, t_max] = v[..] else {
            return Err(Error::Format(format!("region needs 6 comma-separated numbers, got {}", v.len())));
        };
        Ok(Region { x_min, x_max, y_min, y_max, t_min, t_max })
    }
}

/// Keeps the entries of `map` inside `request`.
pub fn clip(map: &RiskMap, request: &MapRequest) -> RiskMap {
    map.filtered(|idx| request.contains(idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    ListVersions,
    /// `version` 0 asks for the latest map.
    GetTile {
        version: u64,
        request: MapRequest,
    },
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TILE_REQUEST_LEN);
        out.extend_from_slice(&REQUEST_MAGIC);
        out.push(PROTOCOL_VERSION);
        match self {
            Request::ListVersions => out.push(KIND_LIST),
            Request::GetTile { version, request } => {
                out.push(KIND_TILE);
                out.extend_from_slice(&version.to_le_bytes());
                out.extend_from_slice(&request.i.0.to_le_bytes());
                out.extend_from_slice(&request.i.1.to_le_bytes());
                out.extend_from_slice(&request.j.0.to_le_bytes());
                out.extend_from_slice(&request.j.1.to_le_bytes());
                out.extend_from_slice(&request.k.0.to_le_bytes());
                out.extend_from_slice(&request.k.1.to_le_bytes());
                out.extend_from_slice(&[0u8; 8]);
            }
        }
        out
    }

    /// Number of bytes a request starting with `prefix` (at least 6 bytes) occupies.
    fn expected_len(prefix: &[u8]) -> Result<usize> {
        if prefix[..4] != REQUEST_MAGIC {
            return Err(Error::Protocol("bad request magic".into()));
        }
        if prefix[4] != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("unsupported protocol version {}", prefix[4])));
        }
        match prefix[5] {
            KIND_LIST => Ok(LIST_REQUEST_LEN),
            KIND_TILE => Ok(TILE_REQUEST_LEN),
            k => Err(Error::Protocol(format!("unknown request kind {k}"))),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < LIST_REQUEST_LEN {
            return Err(Error::Protocol(format!("request too short ({} bytes)", bytes.len())));
        }
        let len = Self::expected_len(bytes)?;
        if bytes.len() != len {
            return Err(Error::Protocol(format!("request length {} but kind requires {len}", bytes.len())));
        }
        if len == LIST_REQUEST_LEN {
            return Ok(Request::ListVersions);
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let i64_at = |o: usize| i64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u64_at(46) != 0 {
            return Err(Error::Protocol("reserved bytes must be zero".into()));
        }
        let request = MapRequest::new(i32_at(14)..=i32_at(18), i32_at(22)..=i32_at(26), i64_at(30)..=i64_at(38))
            .map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(Request::GetTile { version: u64_at(6), request })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub version: u64,
    pub payload: Vec<u8>,
}

impl Response {
    fn error(status: Status, message: impl Into<String>) -> Self {
        Self { status, version: 0, payload: message.into().into_bytes() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RESPONSE_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&RESPONSE_MAGIC);
        out.push(self.status as u8);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses the fixed header, returning `(status, version, payload_len)`.
    fn decode_header(h: &[u8]) -> Result<(Status, u64, u64)> {
        if h.len() < RESPONSE_HEADER_LEN || h[..4] != RESPONSE_MAGIC {
            return Err(Error::Protocol("bad response header".into()));
        }
        let version = u64::from_le_bytes(h[5..13].try_into().unwrap());
        let len = u64::from_le_bytes(h[13..21].try_into().unwrap());
        Ok((Status::from_byte(h[4])?, version, len))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (status, version, len) = Self::decode_header(bytes)?;
        let payload = &bytes[RESPONSE_HEADER_LEN..];
        if payload.len() as u64 != len {
            return Err(Error::Protocol(format!("payload length {} but header says {len}", payload.len())));
        }
        Ok(Self { status, version, payload: payload.to_vec() })
    }

    /// The payload, or the server's error message as a protocol error.
    pub fn into_ok(self) -> Result<(u64, Vec<u8>)> {
        match self.status {
            Status::Ok => Ok((self.version, self.payload)),
            s => Err(Error::Protocol(format!("server replied {s:?}: {}", String::from_utf8_lossy(&self.payload)))),
        }
    }
}

/// Published map versions. Readers see either the old or the new set.
#[derive(Debug, Default)]
pub struct MapStore {
    versions: RwLock<Arc<BTreeMap<u64, Arc<RiskMap>>>>,
}

impl MapStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Publishes `map` under `version`, which must be positive and unused.
    pub fn publish(&self, version: u64, map: RiskMap) -> Result<()> {
        if version == 0 {
            return Err(Error::Domain("map version 0 is reserved for 'latest'".into()));
        }
        let mut guard = self.versions.write().expect("store lock poisoned");
        if guard.contains_key(&version) {
            return Err(Error::Domain(format!("map version {version} already published")));
        }
        let mut next = BTreeMap::clone(&guard);
        next.insert(version, Arc::new(map));
        *guard = Arc::new(next);
        Ok(())
    }

    fn snapshot(&self) -> Arc<BTreeMap<u64, Arc<RiskMap>>> {
        Arc::clone(&self.versions.read().expect("store lock poisoned"))
    }

    pub fn versions(&self) -> Vec<u64> {
        self.snapshot().keys().copied().collect()
    }

    /// `version` 0 means the latest.
    pub fn get(&self, version: u64) -> Option<(u64, Arc<RiskMap>)> {
        let snap = self.snapshot();
        if version == 0 {
            snap.iter().next_back().map(|(v, m)| (*v, Arc::clone(m)))
        } else {
            snap.get(&version).map(|m| (version, Arc::clone(m)))
        }
    }
}

/// Answers one encoded request. Malformed requests get a bad-request
/// response rather than an error.
pub fn handle_request(store: &MapStore, bytes: &[u8]) -> Vec<u8> {
    let response = match Request::decode(bytes) {
        Err(e) => Response::error(Status::BadRequest, e.to_string()),
        Ok(Request::ListVersions) => {
            let versions = store.versions();
            Response {
                status: Status::Ok,
                version: versions.last().copied().unwrap_or(0),
                payload: versions.iter().flat_map(|v| v.to_le_bytes()).collect(),
            }
        }
        Ok(Request::GetTile { version, request }) => match store.get(version) {
            None => Response::error(Status::NotFound, format!("no map version {version}")),
            Some((v, map)) => Response { status: Status::Ok, version: v, payload: tile::encode(&clip(&map, &request)) },
        },
    };
    response.encode()
}

/// Reads one request from a stream. `Ok(None)` on clean EOF.
fn read_request(stream: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut head = [0u8; LIST_REQUEST_LEN];
    match stream.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = head.to_vec();
    // Unknown headers are answered as-is; the decoder reports the problem.
    if let Ok(len) = Request::expected_len(&head) {
        buf.resize(len, 0);
        stream.read_exact(&mut buf[LIST_REQUEST_LEN..])?;
    }
    Ok(Some(buf))
}

fn serve_connection(store: &MapStore, mut stream: TcpStream) -> io::Result<()> {
    while let Some(req) = read_request(&mut stream)? {
        let malformed = Request::decode(&req).is_err();
        stream.write_all(&handle_request(store, &req))?;
        if malformed {
            // framing is lost after a bad header
            break;
        }
    }
    stream.shutdown(Shutdown::Both).ok();
    Ok(())
}

/// A running TCP server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            t.join().ok();
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        TcpStream::connect(self.addr).ok();
        if let Some(t) = self.thread.take() {
            t.join().ok();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.shutdown();
        }
    }
}

/// Binds `addr` and serves `store`, one thread per connection.
pub fn spawn_server(addr: impl ToSocketAddrs, store: Arc<MapStore>) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let store = Arc::clone(&store);
            thread::spawn(move || {
                serve_connection(&store, stream).ok();
            });
        }
    });
    Ok(ServerHandle { addr: local, stop, thread: Some(thread) })
}

/// Carries one request and returns the full response bytes.
pub trait Transport {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        (**self).round_trip(request)
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self { stream: TcpStream::connect(addr)? })
    }
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.stream.write_all(request)?;
        let mut out = vec![0u8; RESPONSE_HEADER_LEN];
        self.stream.read_exact(&mut out)?;
        let (_, _, len) = Response::decode_header(&out)?;
        if len > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("payload of {len} bytes exceeds the client limit")));
        }
        out.resize(RESPONSE_HEADER_LEN + len as usize, 0);
        self.stream.read_exact(&mut out[RESPONSE_HEADER_LEN..])?;
        Ok(out)
    }
}

/// Answers requests from a store in the same process.
pub struct LoopbackTransport {
    store: Arc<MapStore>,
}

impl LoopbackTransport {
    pub fn new(store: Arc<MapStore>) -> Self {
        Self { store }
    }
}

impl Transport for LoopbackTransport {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        Ok(handle_request(&self.store, request))
    }
}

/// Records every byte sent and received by the wrapped transport.
pub struct CaptureTransport<T> {
    inner: T,
    pub outbound: Vec<u8>,
    pub inbound: Vec<u8>,
}

impl<T: Transport> CaptureTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, outbound: Vec::new(), inbound: Vec::new() }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for CaptureTransport<T> {
    fn round_trip(&mut self, request: &[u8]) -> Result<Vec<u8>> {
        self.outbound.extend_from_slice(request);
        let resp = self.inner.round_trip(request)?;
        self.inbound.extend_from_slice(&resp);
        Ok(resp)
    }
}

pub fn list_versions(transport: &mut impl Transport) -> Result<Vec<u64>> {
    let resp = Response::decode(&transport.round_trip(&Request::ListVersions.encode())?)?;
    let (_, payload) = resp.into_ok()?;
    if payload.len() % 8 != 0 {
        return Err(Error::Protocol("version list is not a whole number of u64s".into()));
    }
    Ok(payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Downloads the tile for `request`. `version` 0 means the latest.
pub fn fetch_map(transport: &mut impl Transport, version: u64, request: &MapRequest) -> Result<(u64, RiskMap)> {
    let bytes = transport.round_trip(&Request::GetTile { version, request: *request }.encode())?;
    let (v, payload) = Response::decode(&bytes)?.into_ok()?;
    Ok((v, tile::decode(&payload)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub risk: f64,
    pub advise_test: bool,
    pub map_version: u64,
    /// Trajectory cells outside the requested block; they read as zero risk.
    pub cells_outside_request: usize,
}

/// Downloads the latest tile for `request` and evaluates `trajectory` on it
/// locally. Only the encoded request is sent.
pub fn client_evaluate(
    transport: &mut impl Transport,
    request: &MapRequest,
    trajectory: &Trajectory,
    threshold: f64,
) -> Result<Evaluation> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let (map_version, map) = fetch_map(transport, 0, request)?;
    evaluate_downloaded(&map, map_version, request, trajectory, threshold)
}

fn evaluate_downloaded(
    map: &RiskMap,
    map_version: u64,
    request: &MapRequest,
    trajectory: &Trajectory,
    threshold: f64,
) -> Result<Evaluation> {
    let risk = map.evaluate_trajectory(trajectory)?;
    let mut outside = 0;
    for c in trajectory.cells() {
        if !request.contains(&map.spec().index_of_cell(c)?) {
            outside += 1;
        }
    }
    Ok(Evaluation { risk, advise_test: risk >= threshold, map_version, cells_outside_request: outside })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_risk_map;
    use crate::risk::{PresenceCell, RiskParams};

    fn sample_map() -> RiskMap {
        let patient =
            Trajectory::new((0..40).map(|k| PresenceCell::new(k as f64 + 0.5, 10.5, k as f64 + 0.5)).collect())
                .unwrap();
        build_risk_map(&[patient], &RiskParams::reference().with_sigma_t(20.0).unwrap(), &GridSpec::default(), 1e-9)
            .unwrap()
    }

    fn store_with(map: RiskMap) -> Arc<MapStore> {
        let store = Arc::new(MapStore::new());
        store.publish(1, map).unwrap();
        store
    }

    fn walker(y: f64, t0: i64) -> Trajectory {
        Trajectory::new((0..30).map(|n| PresenceCell::new(n as f64 + 0.5, y, (t0 + n) as f64 + 0.5)).collect()).unwrap()
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn request_round_trip() {
        let r = Request::GetTile { version: 7, request: MapRequest::new(-3..=4, 0..=0, -10..=1_000).unwrap() };
        let bytes = r.encode();
        assert_eq!(bytes.len(), TILE_REQUEST_LEN);
        assert_eq!(Request::decode(&bytes).unwrap(), r);
        assert_eq!(Request::ListVersions.encode().len(), LIST_REQUEST_LEN);
        assert_eq!(Request::decode(&Request::ListVersions.encode()).unwrap(), Request::ListVersions);
        assert!(MapRequest::new(2..=1, 0..=0, 0..=0).is_err());
    }

    #[test]
    fn malformed_request_gets_bad_request() {
        let store = store_with(sample_map());
        for bad in [&b"PTRQ"[..], b"XXXX\x01\x01", b"PTRQ\x09\x01", b"PTRQ\x01\x07", b"PTRQ\x01\x01\x00"] {
            let resp = Response::decode(&handle_request(&store, bad)).unwrap();
            assert_eq!(resp.status, Status::BadRequest, "{bad:?}");
        }
        // inverted range
        let mut bytes = Request::GetTile { version: 0, request: MapRequest::everything() }.encode();
        bytes[14..18].copy_from_slice(&5i32.to_le_bytes());
        bytes[18..22].copy_from_slice(&4i32.to_le_bytes());
        assert_eq!(Response::decode(&handle_request(&store, &bytes)).unwrap().status, Status::BadRequest);
    }

    #[test]
    fn whole_and_disjoint_requests() {
        let map = sample_map();
        let store = store_with(map.clone());
        let mut t = LoopbackTransport::new(store);
        let (v, full) = fetch_map(&mut t, 0, &MapRequest::everything()).unwrap();
        assert_eq!((v, &full), (1, &map));
        let (_, none) = fetch_map(&mut t, 1, &MapRequest::new(500..=600, 0..=0, 0..=5).unwrap()).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.params(), map.params());
        assert!(fetch_map(&mut t, 9, &MapRequest::everything()).is_err());
    }

    #[test]
    fn half_time_range_matches_local_filter() {
        let map = sample_map();
        let ks: Vec<i64> = map.entries().map(|(i, _)| i.k).collect();
        let mid = (ks[0] + ks[ks.len() - 1]) / 2;
        let req = MapRequest::new(i32::MIN..=i32::MAX, i32::MIN..=i32::MAX, ks[0]..=mid).unwrap();
        let (_, got) = fetch_map(&mut LoopbackTransport::new(store_with(map.clone())), 0, &req).unwrap();
        let expected: Vec<_> = map.entries().filter(|(i, _)| i.k <= mid).collect();
        let got_entries: Vec<_> = got.entries().collect();
        assert_eq!(got_entries.len(), expected.len());
        for (a, b) in got_entries.iter().zip(&expected) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }

    #[test]
    fn clipped_evaluation_equals_full() {
        let map = sample_map();
        let store = store_with(map.clone());
        for (y, t0) in [(10.5, 0), (12.5, 15), (9.5, 40)] {
            let w = walker(y, t0);
            let req = MapRequest::bounding(map.spec(), &w).unwrap();
            let e =
                client_evaluate(&mut LoopbackTransport::new(Arc::clone(&store)), &req, &w, DEFAULT_THRESHOLD).unwrap();
            assert_eq!(e.risk.to_bits(), map.evaluate_trajectory(&w).unwrap().to_bits());
            assert_eq!(e.cells_outside_request, 0);
        }
    }

    #[test]
    fn empty_tile_means_no_advice() {
        let store = store_with(RiskMap::empty(GridSpec::default(), RiskParams::reference(), 1e-9).unwrap());
        let w = walker(0.5, 0);
        let e = client_evaluate(&mut LoopbackTransport::new(store), &MapRequest::everything(), &w, 0.01).unwrap();
        assert_eq!((e.risk, e.advise_test), (0.0, false));
    }

    #[test]
    fn outbound_bytes_do_not_depend_on_trajectory() {
        let store = store_with(sample_map());
        let req = MapRequest::new(0..=50, 0..=20, 0..=100).unwrap();
        let session = |traj: &Trajectory| {
            let mut cap = CaptureTransport::new(LoopbackTransport::new(Arc::clone(&store)));
            let e = client_evaluate(&mut cap, &req, traj, DEFAULT_THRESHOLD).unwrap();
            (cap.outbound, e)
        };
        let (a, ea) = session(&walker(10.5, 0));
        let (b, eb) = session(&walker(3.5, 60));
        assert_eq!(a, b);
        assert_eq!(a, Request::GetTile { version: 0, request: req }.encode());
        assert_ne!(ea.risk, eb.risk);
    }

    #[test]
    fn publish_rules() {
        let store = MapStore::new();
        assert!(store.get(0).is_none());
        assert!(store.publish(0, sample_map()).is_err());
        store.publish(3, sample_map()).unwrap();
        store.publish(5, RiskMap::empty(GridSpec::default(), RiskParams::reference(), 1e-9).unwrap()).unwrap();
        assert!(store.publish(3, sample_map()).is_err());
        assert_eq!(store.versions(), vec![3, 5]);
        assert_eq!(store.get(0).unwrap().0, 5);
        let listed = list_versions(&mut LoopbackTransport::new(Arc::new(store))).unwrap();
        assert_eq!(listed, vec![3, 5]);
    }

    #[test]
    fn tcp_matches_loopback() {
        let map = sample_map();
        let store = store_with(map.clone());
        let server = spawn_server("127.0.0.1:0", Arc::clone(&store)).unwrap();
        let mut tcp = TcpTransport::connect(server.local_addr()).unwrap();
        let w = walker(11.5, 5);
        let req = MapRequest::bounding(map.spec(), &w).unwrap();
        let a = client_evaluate(&mut tcp, &req, &w, 0.01).unwrap();
        let b = client_evaluate(&mut LoopbackTransport::new(store), &req, &w, 0.01).unwrap();
        assert_eq!(a, b);
        // second exchange on the same connection
        assert_eq!(list_versions(&mut tcp).unwrap(), vec![1]);
        server.stop();
    }

    #[test]
    fn region_parsing() {
        let r: Region = "0, 10, -5, 5, 0, 3600".parse().unwrap();
        assert_eq!(r.y_min, -5.0);
        assert!("1,2,3".parse::<Region>().is_err());
        let req = MapRequest::for_region(&GridSpec::default(), &r).unwrap();
        assert_eq!(req.i_range(), 0..=10);
        assert_eq!(req.k_range(), 0..=3600);
    }
}
