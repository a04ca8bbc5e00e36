//! Snapshot files, CSV series and plot tables.
//!
//! Snapshot layout (all integers and floats little-endian):
//!
//! | field        | size                         |
//! |--------------|------------------------------|
//! | magic        | 8 bytes, `FNLSSNAP`          |
//! | version      | u32                          |
//! | dimension    | u32                          |
//! | per axis     | lo f64, hi f64, points u64   |
//! | params hash  | 32 bytes (SHA-256)           |
//! | t            | f64                          |
//! | frame        | u8, 0 lab, 1 rotating        |
//! | A(t)         | 9 f64, row-major             |
//! | value count  | u64                          |
//! | values       | re f64, im f64 per point     |
//! | checksum     | u32 CRC-32 of all bytes above|

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::groundstate::{CriticalRotation, HistoryRow};
use crate::model::{PhysicsParams, Trap};
use crate::observables::{DiagnosticsRecord, LawResidual};
use crate::spectral::{ComplexField, Grid};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"FNLSSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Lab,
    Rotating,
}

/// A complex field on disk with its grid and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
    pub params_hash: [u8; 32],
    pub t: f64,
    pub frame: FrameKind,
    pub a: [[f64; 3]; 3],
    pub values: Vec<C64>,
}

/// SHA-256 of the canonical TOML form of `params` (plus sampled trap values).
pub fn params_hash(params: &PhysicsParams) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(toml::to_string(params).unwrap_or_default().as_bytes());
    if let Trap::Sampled { values } = &params.trap {
        for v in values.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("truncated snapshot at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Snapshot {
    pub fn from_field(phi: &ComplexField, params: &PhysicsParams, t: f64, frame: FrameKind, a: [[f64; 3]; 3]) -> Self {
        let g = phi.grid();
        Snapshot {
            lo: g.lo().to_vec(),
            hi: g.hi().to_vec(),
            points: g.points().to_vec(),
            params_hash: params_hash(params),
            t,
            frame,
            a,
            values: phi.values().to_vec(),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(&self.lo, &self.hi, &self.points)?))
    }

    pub fn field(&self) -> Result<ComplexField> {
        ComplexField::new(self.grid()?, self.values.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(160 + 16 * self.values.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for i in 0..self.points.len() {
            out.extend_from_slice(&self.lo[i].to_le_bytes());
            out.extend_from_slice(&self.hi[i].to_le_bytes());
            out.extend_from_slice(&(self.points[i] as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.params_hash);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.push(match self.frame {
            FrameKind::Lab => 0,
            FrameKind::Rotating => 1,
        });
        for v in self.a.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for z in &self.values {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < 12 || &buf[..8] != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a snapshot file".into()));
        }
        let (body, tail) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Format("snapshot checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let d = r.u32()? as usize;
        if !(1..=3).contains(&d) {
            return Err(Error::Format(format!("bad dimension {d}")));
        }
        let (mut lo, mut hi, mut points) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..d {
            lo.push(r.f64()?);
            hi.push(r.f64()?);
            points.push(r.u64()? as usize);
        }
        let params_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let t = r.f64()?;
        let frame = match r.take(1)?[0] {
            0 => FrameKind::Lab,
            1 => FrameKind::Rotating,
            b => return Err(Error::Format(format!("bad frame tag {b}"))),
        };
        let mut a = [[0.0; 3]; 3];
        for v in a.iter_mut().flatten() {
            *v = r.f64()?;
        }
        let count = r.u64()? as usize;
        let expected: usize = points.iter().product();
        if count != expected {
            return Err(Error::Format(format!("payload has {count} values but the grid has {expected}")));
        }
        if body.len() - r.pos != 16 * count {
            return Err(Error::Format("payload length does not match header".into()));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let re = r.f64()?;
            let im = r.f64()?;
            values.push(C64::new(re, im));
        }
        Ok(Snapshot { lo, hi, points, params_hash, t, frame, a, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Column order of the diagnostics CSV.
pub const DIAGNOSTICS_COLUMNS: &[&str] = &[
    "t",
    "mass",
    "e_kin",
    "e_pot",
    "e_rot",
    "e_int",
    "e_non",
    "energy",
    "lz",
    "xc_x",
    "xc_y",
    "xc_z",
    "width_x",
    "width_y",
    "width_z",
    "g_x",
    "g_y",
    "g_z",
    "ame_production",
    "imag_residue",
];

fn diagnostics_row(r: &DiagnosticsRecord) -> Vec<f64> {
    let e = &r.energy;
    let mut row = vec![r.t, r.mass, e.kinetic, e.potential, e.rotation, e.interaction, e.nonlocal, r.total_energy, r.lz];
    row.extend_from_slice(&r.center);
    row.extend_from_slice(&r.widths);
    row.extend_from_slice(&r.momentum);
    row.push(r.ame_production);
    row.push(r.imag_residue);
    row
}

/// Streams CSV rows of numbers under a fixed header.
pub struct CsvSink<W: std::io::Write> {
    writer: csv::Writer<W>,
}

impl<W: std::io::Write> CsvSink<W> {
    pub fn new(inner: W, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(header).map_err(csv_err)?;
        Ok(CsvSink { writer })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.writer.serialize(values).map_err(csv_err)
    }

    pub fn diagnostics(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.row(&diagnostics_row(r))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    let mut sink = CsvSink::new(Vec::new(), DIAGNOSTICS_COLUMNS)?;
    for r in records {
        sink.diagnostics(r)?;
    }
    Ok(String::from_utf8(sink.into_inner()?).expect("ascii"))
}

pub const HISTORY_COLUMNS: &[&str] = &["step", "t", "e_kin", "e_pot", "e_rot", "e_int", "e_non", "energy", "residual", "inner_iterations"];

pub fn history_csv(rows: &[HistoryRow]) -> Result<String> {
    let mut sink = CsvSink::new(Vec::new(), HISTORY_COLUMNS)?;
    for r in rows {
        let e = &r.energy;
        sink.row(&[
            r.step as f64,
            r.t,
            e.kinetic,
            e.potential,
            e.rotation,
            e.interaction,
            e.nonlocal,
            r.total,
            r.residual,
            r.inner_iterations as f64,
        ])?;
    }
    Ok(String::from_utf8(sink.into_inner()?).expect("ascii"))
}

pub const LAW_COLUMNS: &[&str] = &["t", "first_order", "first_scale", "second_order"];

pub fn law_csv(rows: &[LawResidual]) -> Result<String> {
    let mut sink = CsvSink::new(Vec::new(), LAW_COLUMNS)?;
    for r in rows {
        sink.row(&[r.t, r.first_order, r.first_scale, r.second_order.unwrap_or(f64::NAN)])?;
    }
    Ok(String::from_utf8(sink.into_inner()?).expect("ascii"))
}

pub const SWEEP_COLUMNS: &[&str] = &["s", "omega", "energy_plain", "energy_vortex", "lz_vortex", "omega_c"];

/// One row per probe, each tagged with its order and the resulting `Omega_c`.
pub fn sweep_csv(results: &[(f64, CriticalRotation)]) -> Result<String> {
    let mut sink = CsvSink::new(Vec::new(), SWEEP_COLUMNS)?;
    for (s, c) in results {
        for p in &c.probes {
            sink.row(&[*s, p.omega, p.energy_plain, p.energy_vortex, p.lz_vortex, c.omega_c])?;
        }
    }
    Ok(String::from_utf8(sink.into_inner()?).expect("ascii"))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SliceX,
    ContourGrid,
    Timeseries,
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slice_x" => Ok(PlotKind::SliceX),
            "contour_grid" => Ok(PlotKind::ContourGrid),
            "timeseries" => Ok(PlotKind::Timeseries),
            other => Err(Error::UnknownPlotKind(other.to_string())),
        }
    }
}

// Index of the grid line closest to the origin along `axis`.
fn origin_index(grid: &Grid, axis: usize) -> usize {
    let c = grid.coords(axis);
    (0..c.len()).min_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap_or(0)
}

/// `x |phi(x, 0)|` rows along the line through the origin.
pub fn slice_x(phi: &ComplexField) -> String {
    let g = phi.grid();
    let mut out = String::from("x abs_phi\n");
    let mut base = 0;
    for axis in 1..g.dim() {
        base += origin_index(g, axis) * g.strides()[axis];
    }
    for (i, x) in g.coords(0).iter().enumerate() {
        let z = phi.values()[base + i * g.strides()[0]];
        let _ = writeln!(out, "{x} {}", z.norm());
    }
    out
}

/// `x y |phi|^2` rows over the plane through the origin, blank line between x columns.
pub fn contour_grid(phi: &ComplexField) -> Result<String> {
    let g = phi.grid();
    if g.dim() < 2 {
        return Err(Error::InvalidGrid("contour plots need at least two dimensions".into()));
    }
    let base = if g.dim() == 3 { origin_index(g, 2) * g.strides()[2] } else { 0 };
    let mut out = String::from("x y density\n");
    for (i, x) in g.coords(0).iter().enumerate() {
        for (j, y) in g.coords(1).iter().enumerate() {
            let z = phi.values()[base + i * g.strides()[0] + j * g.strides()[1]];
            let _ = writeln!(out, "{x} {y} {}", z.norm_sqr());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Selected columns of a CSV series as a space-separated table; all columns if `columns` is empty.
pub fn timeseries(csv_text: &str, columns: &[String]) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    let idx: Vec<usize> = if columns.is_empty() {
        (0..header.len()).collect()
    } else {
        columns
            .iter()
            .map(|c| header.iter().position(|h| h == c).ok_or_else(|| Error::Format(format!("no column named {c}"))))
            .collect::<Result<_>>()?
    };
    let mut out = idx.iter().map(|&i| &header[i]).collect::<Vec<_>>().join(" ");
    out.push('\n');
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line: Vec<&str> = idx.iter().map(|&i| rec.get(i).unwrap_or("")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Plot table for `kind` from a snapshot (`slice_x`, `contour_grid`) or CSV file (`timeseries`).
pub fn emit_plot_data(input: &Path, kind: &str, columns: &[String]) -> Result<String> {
    let kind: PlotKind = kind.parse()?;
    match kind {
        PlotKind::SliceX => Ok(slice_x(&Snapshot::read(input)?.field()?)),
        PlotKind::ContourGrid => contour_grid(&Snapshot::read(input)?.field()?),
        PlotKind::Timeseries => timeseries(&std::fs::read_to_string(input)?, columns),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn field() -> ComplexField {
        let g = Arc::new(Grid::cube(2, 4.0, 16).unwrap());
        ComplexField::from_fn(g, |x| C64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt(), 0.1 * x[0]))
    }

    #[test]
    fn snapshot_bytes_round_trip() {
        let p = PhysicsParams::harmonic(2, 0.8);
        let snap = Snapshot::from_field(&field(), &p, 0.25, FrameKind::Rotating, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let bytes = snap.to_bytes();
        let back = Snapshot::from_bytes(&bytes).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupted_snapshots_are_rejected() {
        let snap = Snapshot::from_field(&field(), &PhysicsParams::harmonic(2, 1.0), 0.0, FrameKind::Lab, [[0.0; 3]; 3]);
        let mut bytes = snap.to_bytes();
        bytes[100] ^= 1;
        assert!(matches!(Snapshot::from_bytes(&bytes), Err(Error::Format(_))));
        let bytes = snap.to_bytes();
        assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 20]).is_err());
        assert!(Snapshot::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn params_hash_tracks_parameters() {
        let a = PhysicsParams::harmonic(2, 1.0);
        let mut b = a.clone();
        assert_eq!(params_hash(&a), params_hash(&b));
        b.beta = 1.0;
        assert_ne!(params_hash(&a), params_hash(&b));
        assert_eq!(hex(&[0, 255, 16]), "00ff10");
    }

    #[test]
    fn unknown_plot_kind() {
        assert!(matches!("histogram".parse::<PlotKind>(), Err(Error::UnknownPlotKind(k)) if k == "histogram"));
    }

    #[test]
    fn slice_and_contour_tables() {
        let g = Arc::new(Grid::cube(2, 4.0, 16).unwrap());
        let phi = ComplexField::from_fn(g.clone(), |x| C64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt(), 0.0));
        let rows: Vec<(f64, f64)> = slice_x(&phi)
            .lines()
            .skip(1)
            .map(|l| {
                let mut it = l.split(' ').map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        let peak = rows.iter().cloned().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(peak.0, 0.0);
        assert!((peak.1 - 1.0 / PI.sqrt()).abs() < 1e-15);
        // symmetric about x = 0 (index 0 is the unpaired -L edge)
        for i in 1..8 {
            assert_eq!(rows[8 - i].1, rows[8 + i].1);
        }
        let vortex = ComplexField::from_fn(g, |x| C64::new(x[0], x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
        let table = contour_grid(&vortex).unwrap();
        assert!(table.lines().any(|l| l == "0 0 0"));
    }

    #[test]
    fn timeseries_selects_columns() {
        let text = "t,mass,energy\n0,1,2\n0.5,1,2.5\n";
        assert_eq!(timeseries(text, &["t".into(), "energy".into()]).unwrap(), "t energy\n0 2\n0.5 2.5\n");
        assert!(timeseries(text, &["nope".into()]).is_err());
    }
}
