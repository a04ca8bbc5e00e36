//! Versioned binary persistence of the GauSum fit and its tensor tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GauSumApprox, TensorCache};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GAUSUMTC";
const VERSION: u32 = 1;

pub(crate) fn save(path: &Path, key: &str, approx: &GauSumApprox, cache: &TensorCache) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut buf, key.len() as u64);
    buf.extend_from_slice(key.as_bytes());
    for v in [approx.mu(), approx.delta(), approx.eps0(), approx.r_max()] {
        put_f64(&mut buf, v);
    }
    put_u64(&mut buf, approx.len() as u64);
    approx.weights().iter().for_each(|&v| put_f64(&mut buf, v));
    approx.nodes().iter().for_each(|&v| put_f64(&mut buf, v));
    put_u64(&mut buf, cache.dims().len() as u64);
    for (axis, &m) in cache.dims().iter().enumerate() {
        put_u64(&mut buf, m as u64);
        cache.table(axis).iter().for_each(|&v| put_f64(&mut buf, v));
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn load(path: &Path, key: &str) -> Result<(GauSumApprox, TensorCache)> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Format("cache file truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != crc {
        return Err(Error::Format("cache checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a GauSum cache file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let klen = r.u64()? as usize;
    let stored = String::from_utf8_lossy(r.take(klen)?).into_owned();
    if stored != key {
        return Err(Error::CacheMismatch(format!("cache key {stored} does not match {key}")));
    }
    let mu = r.f64()?;
    let delta = r.f64()?;
    let eps0 = r.f64()?;
    let r_max = r.f64()?;
    let q = r.u64()? as usize;
    let weights = r.f64s(q)?;
    let nodes = r.f64s(q)?;
    let approx = GauSumApprox::from_parts(mu, delta, eps0, r_max, weights.clone(), nodes)?;
    let d = r.u64()? as usize;
    let mut dims = Vec::with_capacity(d);
    let mut tables = Vec::with_capacity(d);
    for _ in 0..d {
        let m = r.u64()? as usize;
        dims.push(m);
        tables.push(r.f64s(m * q)?);
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes in cache file".into()));
    }
    Ok((approx, TensorCache::from_parts(dims, weights, tables)?))
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("cache file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
