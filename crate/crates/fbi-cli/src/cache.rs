//! Binary cache of magic couplings, flat-band bundles and form-factor tables.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FBI1"
//!      4     2  format version
//!      6     1  payload kind (1 magic, 2 bundle, 3 table)
//!      7     1  reserved, zero
//!      8    32  SHA-256 of the cache key text
//!     40     8  payload length in bytes
//!     48    32  SHA-256 of the payload
//!     80     -  payload
//! ```
//!
//! Floats are stored as IEEE-754 bits so a warm read reproduces the cold
//! computation exactly. Decoding validates the header, the length and the
//! checksum before touching the payload, and checks the payload against
//! the structures rebuilt from its own parameters.

use fbi::bands::{BlochBundle, FlatBandPair, MagicAlpha, Valley};
use fbi::chiral::{layer_offsets, PlaneWaveBasis};
use fbi::form_factors::{transfer_set, Flavor, FormFactorTable};
use fbi::lattice::Vec2;
use fbi::linalg::{c, CMat, CVec};
use fbi::{build_lattice, Convention, GridMomentum, KGrid};
use sha2::{Digest, Sha256};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"FBI1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 80;

/// Decoder limits; anything larger is rejected before allocation.
pub const MAX_GRID_POINTS: usize = 4096;
pub const MAX_RADIUS: f64 = 40.0;
const MAX_G_INDEX: i64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Magic = 1,
    Bundle = 2,
    Table = 3,
}

impl Kind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Kind::Magic),
            2 => Some(Kind::Bundle),
            3 => Some(Kind::Table),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Magic => "magic",
            Kind::Bundle => "bundle",
            Kind::Table => "table",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    Magic(MagicAlpha),
    Bundle(BlochBundle),
    Table(FormFactorTable),
}

impl Payload {
    pub fn kind(&self) -> Kind {
        match self {
            Payload::Magic(_) => Kind::Magic,
            Payload::Bundle(_) => Kind::Bundle,
            Payload::Table(_) => Kind::Table,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub kind: Kind,
    pub key_hash: [u8; 32],
    pub len: u64,
    pub checksum: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CacheError {
    Io(String),
    Truncated,
    BadMagic,
    Version(u16),
    UnknownKind(u8),
    WrongKind { expected: Kind, found: Kind },
    KeyMismatch,
    Length { header: u64, actual: usize },
    Checksum,
    Malformed(String),
}

impl fmt::Display for CacheError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheError::Io(e) => write!(f, "cache I/O: {e}"),
            CacheError::Truncated => f.write_str("cache file truncated"),
            CacheError::BadMagic => f.write_str("not an FBI1 cache file"),
            CacheError::Version(v) => write!(f, "cache format version {v}, expected {VERSION}"),
            CacheError::UnknownKind(k) => write!(f, "unknown payload kind {k}"),
            CacheError::WrongKind { expected, found } => {
                write!(f, "payload kind {} where {} was expected", found.name(), expected.name())
            }
            CacheError::KeyMismatch => f.write_str("cache key hash does not match"),
            CacheError::Length { header, actual } => {
                write!(f, "payload length {actual} disagrees with header length {header}")
            }
            CacheError::Checksum => f.write_str("payload checksum mismatch"),
            CacheError::Malformed(m) => write!(f, "malformed payload: {m}"),
        }
    }
}

impl std::error::Error for CacheError {}

type Res<T> = std::result::Result<T, CacheError>;

fn malformed(m: impl Into<String>) -> CacheError {
    CacheError::Malformed(m.into())
}

pub fn key_hash(key: &str) -> [u8; 32] {
    Sha256::digest(key.as_bytes()).into()
}

// ---------------------------------------------------------------- encoding

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec2(&mut self, v: Vec2) {
        self.f64(v.x);
        self.f64(v.y);
    }
}

fn convention_byte(c: Convention) -> u8 {
    match c {
        Convention::Standard => 0,
    }
}

fn flavor_byte(f: Flavor) -> u8 {
    match f {
        Flavor::Spinless => 0,
        Flavor::Valley => 1,
        Flavor::ValleySpin => 2,
    }
}

pub fn encode_payload(payload: &Payload) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match payload {
        Payload::Magic(m) => {
            w.f64(m.alpha);
            w.f64(m.residual);
            w.u64(m.evaluations as u64);
        }
        Payload::Bundle(b) => {
            w.u8(convention_byte(b.lattice().convention));
            w.u64(b.grid.nx as u64);
            w.u64(b.grid.ny as u64);
            w.f64(b.alpha);
            w.f64(b.radius);
            w.u8(match b.valley {
                Valley::First => 0,
                Valley::Second => 1,
            });
            for s in &b.states {
                w.vec2(s.k);
                w.u64(s.basis.len() as u64);
                for g in s.basis.g_list() {
                    w.i64(g[0]);
                    w.i64(g[1]);
                }
                for z in s.w.iter() {
                    w.f64(z.re);
                    w.f64(z.im);
                }
                w.f64(s.residual);
                w.f64(s.next_singular);
                w.vec2(s.offsets[0]);
                w.vec2(s.offsets[1]);
            }
        }
        Payload::Table(t) => {
            w.u8(convention_byte(t.grid().lattice().convention));
            w.u64(t.grid().nx as u64);
            w.u64(t.grid().ny as u64);
            w.u8(flavor_byte(t.flavor()));
            w.f64(t.radius());
            w.u64(t.transfers().len() as u64);
            for p in t.transfers() {
                w.u64(p.k as u64);
                w.i64(p.g[0]);
                w.i64(p.g[1]);
            }
            for e in t.entries() {
                for z in e.iter() {
                    w.f64(z.re);
                    w.f64(z.im);
                }
            }
        }
    }
    w.0
}

pub fn encode(key: &str, payload: &Payload) -> Vec<u8> {
    let body = encode_payload(payload);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(payload.kind() as u8);
    out.push(0);
    out.extend_from_slice(&key_hash(key));
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

// ---------------------------------------------------------------- decoding

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Res<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CacheError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn u8(&mut self) -> Res<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Res<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn i64(&mut self) -> Res<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn f64(&mut self) -> Res<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn finite(&mut self, what: &str) -> Res<f64> {
        let x = self.f64()?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(malformed(format!("{what} is not finite")))
        }
    }
    fn vec2(&mut self) -> Res<Vec2> {
        Ok(Vec2::new(self.finite("vector component")?, self.finite("vector component")?))
    }
    /// A count whose items need at least `item_bytes` each.
    fn count(&mut self, item_bytes: usize, max: usize) -> Res<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| malformed("count overflows"))?;
        if n > max || n.saturating_mul(item_bytes) > self.remaining() {
            return Err(malformed(format!("count {n} exceeds the data")));
        }
        Ok(n)
    }
    fn g_index(&mut self) -> Res<[i64; 2]> {
        let g = [self.i64()?, self.i64()?];
        if g.iter().any(|x| x.abs() > MAX_G_INDEX) {
            return Err(malformed("reciprocal index out of range"));
        }
        Ok(g)
    }
    fn finish(&self) -> Res<()> {
        if self.remaining() != 0 {
            return Err(malformed(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn read_grid(r: &mut Reader) -> Res<KGrid> {
    let conv = match r.u8()? {
        0 => Convention::Standard,
        b => return Err(malformed(format!("unknown convention {b}"))),
    };
    let nx = r.count(0, MAX_GRID_POINTS)?;
    let ny = r.count(0, MAX_GRID_POINTS)?;
    if nx == 0 || ny == 0 || nx * ny > MAX_GRID_POINTS {
        return Err(malformed(format!("grid {nx}x{ny} out of range")));
    }
    KGrid::new(&build_lattice(conv), nx, ny).map_err(|e| malformed(e.to_string()))
}

fn read_radius(r: &mut Reader) -> Res<f64> {
    let radius = r.finite("radius")?;
    if !(radius > 0.0 && radius <= MAX_RADIUS) {
        return Err(malformed(format!("radius {radius} out of range")));
    }
    Ok(radius)
}

fn decode_magic(r: &mut Reader) -> Res<MagicAlpha> {
    let alpha = r.finite("alpha")?;
    let residual = r.finite("residual")?;
    let evaluations = usize::try_from(r.u64()?).map_err(|_| malformed("evaluation count overflows"))?;
    Ok(MagicAlpha { alpha, residual, evaluations })
}

fn decode_bundle(r: &mut Reader) -> Res<BlochBundle> {
    let grid = read_grid(r)?;
    let alpha = r.finite("alpha")?;
    let radius = read_radius(r)?;
    let valley = match r.u8()? {
        0 => Valley::First,
        1 => Valley::Second,
        b => return Err(malformed(format!("unknown valley {b}"))),
    };
    // each state is at least 88 bytes even with no plane waves
    if grid.len().saturating_mul(88) > r.remaining() {
        return Err(CacheError::Truncated);
    }
    let lattice = grid.lattice().clone();
    let expected_offsets = layer_offsets(&lattice);
    let mut states = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let k = r.vec2()?;
        if k != grid.point(i) {
            return Err(malformed(format!("state {i} is not at its grid point")));
        }
        let n_g = r.count(16 + 32, usize::MAX)?;
        let mut g_list = Vec::with_capacity(n_g);
        for _ in 0..n_g {
            g_list.push(r.g_index()?);
        }
        let basis = PlaneWaveBasis::new(&lattice, k, radius).map_err(|e| malformed(e.to_string()))?;
        if basis.g_list() != g_list.as_slice() {
            return Err(malformed(format!("plane-wave list of state {i} does not match the cutoff")));
        }
        let mut w = CVec::zeros(2 * n_g);
        for z in w.iter_mut() {
            *z = c(r.finite("coefficient")?, r.finite("coefficient")?);
        }
        let residual = r.finite("residual")?;
        let next_singular = r.finite("singular value")?;
        let offsets = [r.vec2()?, r.vec2()?];
        let swapped = [expected_offsets[1], expected_offsets[0]];
        if offsets != expected_offsets && offsets != swapped {
            return Err(malformed("layer offsets do not match the lattice"));
        }
        states.push(FlatBandPair { k, basis, w, residual, next_singular, offsets });
    }
    Ok(BlochBundle { grid, alpha, radius, valley, states })
}

fn decode_table(r: &mut Reader) -> Res<FormFactorTable> {
    let grid = read_grid(r)?;
    let flavor = match r.u8()? {
        0 => Flavor::Spinless,
        1 => Flavor::Valley,
        2 => Flavor::ValleySpin,
        b => return Err(malformed(format!("unknown flavor {b}"))),
    };
    let radius = read_radius(r)?;
    let nt = r.count(24, usize::MAX)?;
    let d = flavor.dim();
    let entry_bytes = 16 * d * d;
    if nt.saturating_mul(24).saturating_add(nt.saturating_mul(grid.len()).saturating_mul(entry_bytes)) != r.remaining() {
        return Err(malformed("table size disagrees with its dimensions"));
    }
    let mut transfers = Vec::with_capacity(nt);
    for _ in 0..nt {
        let k = r.count(0, grid.len())?;
        let g = r.g_index()?;
        transfers.push(GridMomentum { k, g });
    }
    if transfers != transfer_set(&grid, radius) {
        return Err(malformed("transfer list does not match the cutoff"));
    }
    let mut entries = Vec::with_capacity(grid.len() * nt);
    for _ in 0..grid.len() * nt {
        let mut m = CMat::zeros(d, d);
        for z in m.iter_mut() {
            *z = c(r.finite("form factor")?, r.finite("form factor")?);
        }
        entries.push(m);
    }
    FormFactorTable::from_parts(grid, flavor, radius, transfers, entries).map_err(|e| malformed(e.to_string()))
}

/// Decodes a payload body of the given kind.
pub fn decode_payload(kind: Kind, body: &[u8]) -> Res<Payload> {
    let mut r = Reader { buf: body, pos: 0 };
    let p = match kind {
        Kind::Magic => Payload::Magic(decode_magic(&mut r)?),
        Kind::Bundle => Payload::Bundle(decode_bundle(&mut r)?),
        Kind::Table => Payload::Table(decode_table(&mut r)?),
    };
    r.finish()?;
    Ok(p)
}

pub fn decode_header(bytes: &[u8]) -> Res<Header> {
    if bytes.len() < 6 {
        return Err(CacheError::Truncated);
    }
    if &bytes[0..4] != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CacheError::Version(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CacheError::Truncated);
    }
    let kind = Kind::from_byte(bytes[6]).ok_or(CacheError::UnknownKind(bytes[6]))?;
    if bytes[7] != 0 {
        return Err(malformed("reserved header byte is set"));
    }
    let key_hash: [u8; 32] = bytes[8..40].try_into().expect("32 bytes");
    let len = u64::from_le_bytes(bytes[40..48].try_into().expect("8 bytes"));
    let checksum: [u8; 32] = bytes[48..80].try_into().expect("32 bytes");
    Ok(Header { version, kind, key_hash, len, checksum })
}

/// Full decode: header, length, checksum, then payload.
pub fn decode(bytes: &[u8]) -> Res<(Header, Payload)> {
    let h = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if h.len != body.len() as u64 {
        return Err(CacheError::Length { header: h.len, actual: body.len() });
    }
    let sum: [u8; 32] = Sha256::digest(body).into();
    if sum != h.checksum {
        return Err(CacheError::Checksum);
    }
    let p = decode_payload(h.kind, body)?;
    Ok((h, p))
}

// ---------------------------------------------------------------- storage

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    /// Entries written by an older format version and rebuilt.
    pub stale: usize,
}

pub struct Cache {
    dir: PathBuf,
    pub stats: CacheStats,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into(), stats: CacheStats::default() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, kind: Kind, key: &str) -> PathBuf {
        let h = crate::config::hex(&key_hash(key));
        self.dir.join(format!("{}-{}.fbi", kind.name(), &h[..16]))
    }

    /// `Ok(None)` for a missing file or an entry from another format
    /// version; any other defect is an error.
    pub fn load(&mut self, kind: Kind, key: &str) -> Res<Option<Payload>> {
        let path = self.path_for(kind, key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.stats.misses += 1;
                return Ok(None);
            }
            Err(e) => return Err(CacheError::Io(format!("{}: {e}", path.display()))),
        };
        let (h, p) = match decode(&bytes) {
            Ok(x) => x,
            Err(CacheError::Version(_)) => {
                self.stats.stale += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        if h.kind != kind {
            return Err(CacheError::WrongKind { expected: kind, found: h.kind });
        }
        if h.key_hash != key_hash(key) {
            return Err(CacheError::KeyMismatch);
        }
        self.stats.hits += 1;
        Ok(Some(p))
    }

    /// Writes to a temporary file in the cache directory and renames it
    /// into place.
    pub fn store(&self, key: &str, payload: &Payload) -> Res<PathBuf> {
        let io = |e: std::io::Error| CacheError::Io(format!("{}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let path = self.path_for(payload.kind(), key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(&encode(key, payload)).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(path)
    }
}
