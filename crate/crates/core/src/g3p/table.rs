//! Tabulated hat parameters over `(γ, β/α)` and their on-disk cache.
//!
//! File layout, all little-endian:
//!
//! ```text
//! magic  [u8; 8]  "G3PTABLE"
//! version u32
//! n_gamma u32, n_ratio u32
//! gamma knots  n_gamma × u32
//! ratio knots  n_ratio × f64
//! records      n_gamma·n_ratio × 11 × f64   (NaN-filled when absent)
//! ```

use super::hat::HatParams;
use super::{exact_moments, hat_params, regime_of, ApproxRegime, G3pParams};
use crate::error::{G3pError, TableIoError};
use std::io::{Read, Write};
use std::path::Path;

pub const TABLE_MAGIC: [u8; 8] = *b"G3PTABLE";
pub const TABLE_VERSION: u32 = 1;

pub type TableRecord = HatParams;

const FIELDS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerTables {
    gamma_knots: Vec<u32>,
    ratio_knots: Vec<f64>,
    records: Vec<Option<TableRecord>>,
}

fn to_array(h: &TableRecord) -> [f64; FIELDS] {
    [
        h.mu, h.sigma, h.omega2, h.t1, h.t2, h.tmax, h.lap_b, h.lap_c, h.lap_delta, h.lap_l, h.lap_r,
    ]
}

fn from_array(v: [f64; FIELDS]) -> TableRecord {
    HatParams {
        mu: v[0],
        sigma: v[1],
        omega2: v[2],
        t1: v[3],
        t2: v[4],
        tmax: v[5],
        lap_b: v[6],
        lap_c: v[7],
        lap_delta: v[8],
        lap_l: v[9],
        lap_r: v[10],
    }
}

/// Index `i` with `knots[i] ≤ x ≤ knots[i+1]` and the weight of `knots[i+1]`.
fn bracket<T: Copy + Into<f64>>(knots: &[T], x: f64) -> Option<(usize, f64)> {
    let first: f64 = (*knots.first()?).into();
    let last: f64 = (*knots.last()?).into();
    if !(x >= first && x <= last) {
        return None;
    }
    let hi = knots.partition_point(|&k| k.into() < x);
    if hi < knots.len() && knots[hi].into() == x {
        return Some((hi, 0.0));
    }
    let lo = hi - 1;
    let (a, b): (f64, f64) = (knots[lo].into(), knots[hi].into());
    Some((lo, (x - a) / (b - a)))
}

impl SamplerTables {
    /// Knot grid `γ ∈ {1..10, 15, 20, 30, 50, 100, 150, 200}` × 64 ratios in
    /// `[−20, 50]`, spaced uniformly in `asinh(β/α)`.
    pub fn default_knots() -> (Vec<u32>, Vec<f64>) {
        let mut gammas: Vec<u32> = (1..=10).collect();
        gammas.extend([15, 20, 30, 50, 100, 150, 200]);
        (gammas, asinh_knots(-20.0, 50.0, 64))
    }

    pub fn tabulate_default() -> Result<Self, G3pError> {
        let (g, r) = Self::default_knots();
        Self::tabulate(&g, &r)
    }

    pub fn tabulate(gamma_knots: &[u32], ratio_knots: &[f64]) -> Result<Self, G3pError> {
        let increasing_g = gamma_knots.windows(2).all(|w| w[0] < w[1]);
        let increasing_r = ratio_knots.windows(2).all(|w| w[0] < w[1]);
        if !increasing_g || !increasing_r || gamma_knots.is_empty() || ratio_knots.is_empty() || gamma_knots[0] == 0 {
            return Err(G3pError::Hat("table knots must be non-empty and strictly increasing".into()));
        }
        let mut records = Vec::with_capacity(gamma_knots.len() * ratio_knots.len());
        for &g in gamma_knots {
            for &r in ratio_knots {
                records.push(direct_record(g, r));
            }
        }
        Ok(Self {
            gamma_knots: gamma_knots.to_vec(),
            ratio_knots: ratio_knots.to_vec(),
            records,
        })
    }

    pub fn gamma_knots(&self) -> &[u32] {
        &self.gamma_knots
    }

    pub fn ratio_knots(&self) -> &[f64] {
        &self.ratio_knots
    }

    pub fn record(&self, gi: usize, ri: usize) -> Option<TableRecord> {
        self.records[gi * self.ratio_knots.len() + ri]
    }

    /// Bilinear interpolation; `None` outside the grid or next to a knot
    /// without a record.
    pub fn lookup(&self, gamma: u32, ratio: f64) -> Option<TableRecord> {
        let (gi, gw) = bracket(&self.gamma_knots, gamma as f64)?;
        let (ri, rw) = bracket(&self.ratio_knots, ratio)?;
        let corners = [(gi, ri, (1.0 - gw) * (1.0 - rw)), (gi + 1, ri, gw * (1.0 - rw)), (gi, ri + 1, (1.0 - gw) * rw), (gi + 1, ri + 1, gw * rw)];
        let mut acc = [0.0; FIELDS];
        for (g, r, w) in corners {
            if w == 0.0 {
                continue;
            }
            let rec = self.record(g, r)?;
            for (a, v) in acc.iter_mut().zip(to_array(&rec)) {
                *a += w * v;
            }
        }
        if gw == 0.0 && rw == 0.0 {
            return self.record(gi, ri);
        }
        Some(from_array(acc))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TableIoError> {
        w.write_all(&TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.gamma_knots.len() as u32).to_le_bytes())?;
        w.write_all(&(self.ratio_knots.len() as u32).to_le_bytes())?;
        for g in &self.gamma_knots {
            w.write_all(&g.to_le_bytes())?;
        }
        for r in &self.ratio_knots {
            w.write_all(&r.to_le_bytes())?;
        }
        for rec in &self.records {
            let vals = rec.map(|h| to_array(&h)).unwrap_or([f64::NAN; FIELDS]);
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TableIoError> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if magic != TABLE_MAGIC {
            return Err(TableIoError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != TABLE_VERSION {
            return Err(TableIoError::Version(version));
        }
        let ng = read_u32(&mut r)? as usize;
        let nr = read_u32(&mut r)? as usize;
        let mut gamma_knots = Vec::with_capacity(ng);
        for _ in 0..ng {
            gamma_knots.push(read_u32(&mut r)?);
        }
        let mut ratio_knots = Vec::with_capacity(nr);
        for _ in 0..nr {
            ratio_knots.push(read_f64(&mut r)?);
        }
        let mut records = Vec::with_capacity(ng * nr);
        for _ in 0..ng * nr {
            let mut v = [0.0; FIELDS];
            for x in v.iter_mut() {
                *x = read_f64(&mut r)?;
            }
            records.push(if v.iter().all(|x| x.is_nan()) { None } else { Some(from_array(v)) });
        }
        Ok(Self {
            gamma_knots,
            ratio_knots,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TableIoError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TableIoError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// `n` knots uniformly spaced in `asinh` between `lo` and `hi`.
pub fn asinh_knots(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.asinh(), hi.asinh());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).sinh()
            }
        })
        .collect()
}

fn direct_record(gamma: u32, ratio: f64) -> Option<TableRecord> {
    if ratio == 0.0 || regime_of(gamma, ratio) != ApproxRegime::Exact {
        return None;
    }
    let p = G3pParams::new(gamma, 1.0, ratio).ok()?;
    let m = exact_moments(&p).ok()?;
    hat_params(&p, &m).ok()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TableIoError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            TableIoError::Truncated
        } else {
            TableIoError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TableIoError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, TableIoError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g3p::G3pSampler;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SamplerTables {
        SamplerTables::tabulate(&[1, 2, 3], &asinh_knots(-6.0, 10.0, 24)).unwrap()
    }

    #[test]
    fn knot_lookup_is_direct() {
        let t = small();
        let r = t.ratio_knots()[5];
        let direct = direct_record(2, r).unwrap();
        assert_eq!(t.lookup(2, r).unwrap(), direct);
    }

    #[test]
    fn midpoint_interpolation_is_close() {
        let t = SamplerTables::tabulate(&[1, 2], &asinh_knots(-20.0, 50.0, 256)).unwrap();
        for i in [40, 100, 128, 170, 220] {
            let (a, b) = (t.ratio_knots()[i], t.ratio_knots()[i + 1]);
            let mid = 0.5 * (a + b);
            if mid == 0.0 {
                continue;
            }
            let interp = t.lookup(1, mid).unwrap();
            let direct = direct_record(1, mid).unwrap();
            assert!((interp.t1 - direct.t1).abs() < 1e-3, "{mid}: {} vs {}", interp.t1, direct.t1);
        }
    }

    #[test]
    fn outside_grid_falls_through() {
        let t = small();
        assert!(t.lookup(7, 1.0).is_none());
        assert!(t.lookup(1, 30.0).is_none());
        let p = G3pParams::new(1, 1.0, 30.0).unwrap();
        let mut a = G3pSampler::with_table(&t);
        let mut b = G3pSampler::new();
        let mut ra = ChaCha8Rng::seed_from_u64(5);
        let mut rb = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            assert_eq!(a.sample(&p, &mut ra).unwrap(), b.sample(&p, &mut rb).unwrap());
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let t = small();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = SamplerTables::read_from(&buf[..]).unwrap();
        assert_eq!(back.gamma_knots, t.gamma_knots);
        for (x, y) in back.records.iter().zip(&t.records) {
            match (x, y) {
                (Some(x), Some(y)) => {
                    for (u, v) in to_array(x).iter().zip(to_array(y)) {
                        assert_eq!(u.to_bits(), v.to_bits());
                    }
                }
                (None, None) => {}
                _ => panic!("record presence changed"),
            }
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(SamplerTables::read_from(&bad[..]), Err(TableIoError::BadMagic)));
        assert!(matches!(SamplerTables::read_from(&buf[..buf.len() - 3]), Err(TableIoError::Truncated)));
        let mut v2 = buf.clone();
        v2[8] = 9;
        assert!(matches!(SamplerTables::read_from(&v2[..]), Err(TableIoError::Version(9))));
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(SamplerTables::tabulate(&[2, 1], &[0.5, 1.0]).is_err());
        assert!(SamplerTables::tabulate(&[1], &[1.0, 0.5]).is_err());
    }
}
