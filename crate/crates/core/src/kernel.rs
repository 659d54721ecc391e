//! The sparse convolution tensor `Psi` and its longitude-compressed form.
//!
//! A rotation about the z axis by one input longitude step maps the grid onto
//! itself, so `Psi[(t', p'), (t, p)]` only depends on `p - p'` (in input
//! longitude units). Rows are therefore stored once per output ring and per
//! longitude residue class `rho`; with `L_out = r L_in` the output longitude
//! `p' = r q + rho` reads row `(t', rho)` against the input shifted by `q`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{DiscoError, Result};
use crate::filter::Filter;
use crate::grid::{angular_distance, Bandlimit, Coord, RotationZY, SampleGrid, SUPPORT_EPS};

/// Environment variable naming the kernel cache directory.
pub const CACHE_ENV: &str = "DISCO_KERNEL_CACHE";

const KERNEL_MAGIC: &[u8; 4] = b"SKRN";
const KERNEL_VERSION: u32 = 1;

/// Largest input bandlimit [`densify`] will expand.
pub const DENSE_MAX_L: u32 = 16;

/// Which operator the stored values describe.
///
/// `Forward` holds `psi(R_j^{-1} w_i) dw_i` (the filter rotated to each output
/// point). `Transposed` holds `psi(R_i^{-1} w_j) dw_i` (the filter rotated to
/// each input point, weighted by that input sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelOrientation {
    Forward,
    Transposed,
}

impl KernelOrientation {
    fn tag(self) -> u32 {
        match self {
            Self::Forward => 0,
            Self::Transposed => 1,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Self::Forward),
            1 => Some(Self::Transposed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Transposed => "transposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelOptions {
    pub orientation: KernelOrientation,
    /// Keep the rotated coordinates of every nonzero (needed for training).
    pub store_coords: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            orientation: KernelOrientation::Forward,
            store_coords: true,
        }
    }
}

/// Entries of one compressed row.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub rings: &'a [u32],
    pub lons: &'a [u32],
    pub values: &'a [f64],
}

/// For each input ring, the compressed entries that read from it. Used by the
/// gather form of the adjoint product.
#[derive(Debug)]
pub(crate) struct InputRingIndex {
    pub ring_ptr: Vec<usize>,
    pub entries: Vec<u32>,
    pub entry_row: Vec<u32>,
}

#[derive(Debug)]
pub struct CompressedSparseKernel {
    orientation: KernelOrientation,
    l_in: Bandlimit,
    l_out: Bandlimit,
    residues: usize,
    // row (t', rho) lives at t' * residues + rho
    row_ptr: Vec<usize>,
    col_ring: Vec<u32>,
    col_lon: Vec<u32>,
    values: Vec<f64>,
    thetas: Option<Vec<f64>>,
    phis: Option<Vec<f64>>,
    filter: Filter,
    in_weights: Vec<f64>,
    by_input_ring: OnceLock<InputRingIndex>,
}

impl Clone for CompressedSparseKernel {
    fn clone(&self) -> Self {
        Self {
            orientation: self.orientation,
            l_in: self.l_in,
            l_out: self.l_out,
            residues: self.residues,
            row_ptr: self.row_ptr.clone(),
            col_ring: self.col_ring.clone(),
            col_lon: self.col_lon.clone(),
            values: self.values.clone(),
            thetas: self.thetas.clone(),
            phis: self.phis.clone(),
            filter: self.filter.clone(),
            in_weights: self.in_weights.clone(),
            by_input_ring: OnceLock::new(),
        }
    }
}

impl PartialEq for CompressedSparseKernel {
    fn eq(&self, o: &Self) -> bool {
        self.orientation == o.orientation
            && self.l_in == o.l_in
            && self.l_out == o.l_out
            && self.row_ptr == o.row_ptr
            && self.col_ring == o.col_ring
            && self.col_lon == o.col_lon
            && self.values == o.values
            && self.thetas == o.thetas
            && self.phis == o.phis
            && self.filter == o.filter
            && self.in_weights == o.in_weights
    }
}

/// Residue count for a resolution pair, or an error for unsupported ratios.
pub fn residue_count(l_in: Bandlimit, l_out: Bandlimit) -> Result<usize> {
    if l_out == l_in {
        Ok(1)
    } else if l_out.get() == 2 * l_in.get() {
        Ok(2)
    } else {
        Err(DiscoError::UnsupportedRatio {
            l_in: l_in.get(),
            l_out: l_out.get(),
        })
    }
}

/// Input samples `(t, p)` of the bandlimit-`l_in` grid within `cutoff` of the
/// point `(theta, phi)`, ordered by ring then longitude.
///
/// Candidates come from the colatitude band and a per-ring longitude
/// half-width; an exact distance test decides membership.
pub fn support_entries(l_in: usize, theta: f64, phi: f64, cutoff: f64) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let n_lon = 2 * l_in;
    let step = PI / l_in as f64;
    let centre = Coord::new(theta, phi);
    let reach = cutoff + 1e-9;
    let (sc, cc) = theta.sin_cos();
    let creach = reach.min(PI).cos();
    let mut cand: Vec<u32> = Vec::new();
    for t in 0..=l_in {
        let th = step * t as f64;
        if (th - theta).abs() > reach {
            continue;
        }
        let (st, ct) = th.sin_cos();
        let s = st * sc;
        cand.clear();
        let full = if s < 1e-12 {
            true
        } else {
            let ratio = (creach - ct * cc) / s;
            if ratio <= -1.0 {
                true
            } else {
                let hw = ratio.min(1.0).acos();
                let lo = ((phi - hw) / step).floor() as i64 - 1;
                let hi = ((phi + hw) / step).ceil() as i64 + 1;
                if hi - lo + 1 >= n_lon as i64 {
                    true
                } else {
                    cand.extend((lo..=hi).map(|k| k.rem_euclid(n_lon as i64) as u32));
                    cand.sort_unstable();
                    cand.dedup();
                    false
                }
            }
        };
        if full {
            cand.extend(0..n_lon as u32);
        }
        for &p in &cand {
            let c = Coord::new(th, step * p as f64);
            if angular_distance(c, centre) <= cutoff + SUPPORT_EPS {
                out.push((t as u32, p));
            }
        }
    }
    out
}

struct BuiltRow {
    rings: Vec<u32>,
    lons: Vec<u32>,
    values: Vec<f64>,
    thetas: Vec<f64>,
    phis: Vec<f64>,
}

/// Builds the forward kernel with rotated coordinates stored.
pub fn build_kernel(filter: &Filter, grid_in: &SampleGrid, grid_out: &SampleGrid) -> Result<CompressedSparseKernel> {
    build_kernel_with(filter, grid_in, grid_out, KernelOptions::default())
}

/// Builds the transposed kernel mapping `grid_in` to `grid_out`.
pub fn build_transposed_kernel(
    filter: &Filter,
    grid_in: &SampleGrid,
    grid_out: &SampleGrid,
) -> Result<CompressedSparseKernel> {
    build_kernel_with(
        filter,
        grid_in,
        grid_out,
        KernelOptions {
            orientation: KernelOrientation::Transposed,
            store_coords: true,
        },
    )
}

pub fn build_kernel_with(
    filter: &Filter,
    grid_in: &SampleGrid,
    grid_out: &SampleGrid,
    opts: KernelOptions,
) -> Result<CompressedSparseKernel> {
    let l_in = grid_in.bandlimit();
    let l_out = grid_out.bandlimit();
    let r = residue_count(l_in, l_out)?;
    let cutoff = filter.theta_cutoff();
    if !(cutoff > 0.0 && cutoff < PI) {
        return Err(DiscoError::CutoffNotLocalized(cutoff));
    }
    let n_rows = grid_out.n_rings() * r;
    let rows: Vec<BuiltRow> = (0..n_rows)
        .into_par_iter()
        .map(|row| build_row(filter, grid_in, grid_out, row / r, row % r, opts))
        .collect();

    let nnz: usize = rows.iter().map(|r| r.values.len()).sum();
    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    row_ptr.push(0);
    let mut col_ring = Vec::with_capacity(nnz);
    let mut col_lon = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    let mut thetas = Vec::with_capacity(if opts.store_coords { nnz } else { 0 });
    let mut phis = Vec::with_capacity(thetas.capacity());
    for row in rows {
        col_ring.extend(row.rings);
        col_lon.extend(row.lons);
        values.extend(row.values);
        thetas.extend(row.thetas);
        phis.extend(row.phis);
        row_ptr.push(values.len());
    }
    log::debug!(
        "built {} kernel L_in={} L_out={} with {} compressed nonzeros",
        opts.orientation.name(),
        l_in,
        l_out,
        nnz
    );
    Ok(CompressedSparseKernel {
        orientation: opts.orientation,
        l_in,
        l_out,
        residues: r,
        row_ptr,
        col_ring,
        col_lon,
        values,
        thetas: opts.store_coords.then_some(thetas),
        phis: opts.store_coords.then_some(phis),
        filter: filter.clone(),
        in_weights: (0..grid_in.n_rings()).map(|t| grid_in.sample_weight(t)).collect(),
        by_input_ring: OnceLock::new(),
    })
}

fn build_row(
    filter: &Filter,
    grid_in: &SampleGrid,
    grid_out: &SampleGrid,
    t_out: usize,
    rho: usize,
    opts: KernelOptions,
) -> BuiltRow {
    let out_pt = grid_out.coord(t_out, rho);
    let support = support_entries(grid_in.l(), out_pt.theta, out_pt.phi, filter.theta_cutoff());
    let mut row = BuiltRow {
        rings: Vec::with_capacity(support.len()),
        lons: Vec::with_capacity(support.len()),
        values: Vec::with_capacity(support.len()),
        thetas: Vec::new(),
        phis: Vec::new(),
    };
    let r_out = RotationZY::to_point(out_pt);
    for (t, p) in support {
        let in_pt = grid_in.coord(t as usize, p as usize);
        let rc = match opts.orientation {
            KernelOrientation::Forward => r_out.inverse_rotate_point(in_pt),
            KernelOrientation::Transposed => RotationZY::to_point(in_pt).inverse_rotate_point(out_pt),
        };
        row.rings.push(t);
        row.lons.push(p);
        row.values
            .push(filter.eval(rc.theta, rc.phi) * grid_in.sample_weight(t as usize));
        if opts.store_coords {
            row.thetas.push(rc.theta);
            row.phis.push(rc.phi);
        }
    }
    row
}

impl CompressedSparseKernel {
    pub fn orientation(&self) -> KernelOrientation {
        self.orientation
    }

    pub fn l_in(&self) -> Bandlimit {
        self.l_in
    }

    pub fn l_out(&self) -> Bandlimit {
        self.l_out
    }

    /// Number of longitude residue classes `L_out / L_in`.
    pub fn residues(&self) -> usize {
        self.residues
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Stored (compressed) nonzeros.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of the full uncompressed `Psi`: each compressed row stands for
    /// one row per input longitude shift.
    pub fn nnz_expanded(&self) -> usize {
        self.nnz() * self.l_in.n_lon()
    }

    pub fn filter(&self) -> &Filter {
        &self.filter
    }

    /// Quadrature weight of one sample on each input ring.
    pub fn input_weights(&self) -> &[f64] {
        &self.in_weights
    }

    pub fn has_coords(&self) -> bool {
        self.thetas.is_some()
    }

    /// Drops the rotated coordinates, leaving an inference-only kernel.
    pub fn without_coords(mut self) -> Self {
        self.thetas = None;
        self.phis = None;
        self
    }

    /// Row `(t_out, rho)` of the compressed kernel.
    pub fn row(&self, t_out: usize, rho: usize) -> RowView<'_> {
        let k = t_out * self.residues + rho;
        let (a, b) = (self.row_ptr[k], self.row_ptr[k + 1]);
        RowView {
            rings: &self.col_ring[a..b],
            lons: &self.col_lon[a..b],
            values: &self.values[a..b],
        }
    }

    pub(crate) fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.row_ptr[row]..self.row_ptr[row + 1]
    }

    pub(crate) fn columns(&self) -> (&[u32], &[u32]) {
        (&self.col_ring, &self.col_lon)
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rotated coordinates `(Theta, Phi)` of every stored entry.
    pub fn coords(&self) -> Option<(&[f64], &[f64])> {
        match (&self.thetas, &self.phis) {
            (Some(t), Some(p)) => Some((t, p)),
            _ => None,
        }
    }

    /// Reals held by the kernel: values, plus two coordinates per entry when
    /// kept for training.
    pub fn memory_values(&self) -> usize {
        if self.has_coords() {
            3 * self.nnz()
        } else {
            self.nnz()
        }
    }

    pub(crate) fn input_ring_index(&self) -> &InputRingIndex {
        self.by_input_ring.get_or_init(|| {
            let n_rings = self.l_in.n_rings();
            let mut counts = vec![0usize; n_rings + 1];
            for &t in &self.col_ring {
                counts[t as usize + 1] += 1;
            }
            for t in 0..n_rings {
                counts[t + 1] += counts[t];
            }
            let mut fill = counts.clone();
            let mut entries = vec![0u32; self.nnz()];
            let mut entry_row = vec![0u32; self.nnz()];
            for row in 0..self.n_rows() {
                for e in self.row_range(row) {
                    let t = self.col_ring[e] as usize;
                    entries[fill[t]] = e as u32;
                    entry_row[fill[t]] = row as u32;
                    fill[t] += 1;
                }
            }
            InputRingIndex {
                ring_ptr: counts,
                entries,
                entry_row,
            }
        })
    }

    /// Same support and coordinates with values recomputed for `filter`,
    /// which must share this kernel's kind, cutoff and node layout.
    pub fn with_filter(&self, filter: &Filter) -> Result<Self> {
        let (th, ph) = self.coords().ok_or(DiscoError::MissingCoordinates)?;
        let f0 = &self.filter;
        if filter.kind() != f0.kind()
            || filter.theta_cutoff() != f0.theta_cutoff()
            || filter.n_theta() != f0.n_theta()
            || filter.n_phi() != f0.n_phi()
        {
            return Err(DiscoError::InvalidFilter(
                "filter layout differs from the kernel's".into(),
            ));
        }
        let values = (0..self.nnz())
            .map(|e| filter.eval(th[e], ph[e]) * self.in_weights[self.col_ring[e] as usize])
            .collect();
        Ok(Self {
            values,
            filter: filter.clone(),
            by_input_ring: OnceLock::new(),
            ..self.clone()
        })
    }

    /// Copy keeping only entry `idx` of row `row`; used to probe gradients
    /// one term at a time.
    pub fn single_entry(&self, row: usize, idx: usize) -> Result<Self> {
        let range = self.row_range(row);
        if idx >= range.len() {
            return Err(DiscoError::ShapeMismatch(format!(
                "row {row} has {} entries",
                range.len()
            )));
        }
        let e = range.start + idx;
        let mut row_ptr = vec![0usize; self.row_ptr.len()];
        for (k, v) in row_ptr.iter_mut().enumerate() {
            *v = usize::from(k > row);
        }
        Ok(Self {
            row_ptr,
            col_ring: vec![self.col_ring[e]],
            col_lon: vec![self.col_lon[e]],
            values: vec![self.values[e]],
            thetas: self.thetas.as_ref().map(|v| vec![v[e]]),
            phis: self.phis.as_ref().map(|v| vec![v[e]]),
            by_input_ring: OnceLock::new(),
            ..self.clone()
        })
    }

    /// SHA-256 over the serialized kernel.
    pub fn content_hash(&self) -> [u8; 32] {
        let bytes = self.to_bytes();
        bytes[bytes.len() - 32..].try_into().unwrap()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nnz = self.nnz();
        let fb = self.filter.to_bytes();
        let mut out = Vec::with_capacity(96 + fb.len() + 24 * nnz + 8 * self.row_ptr.len());
        out.extend_from_slice(KERNEL_MAGIC);
        for v in [
            KERNEL_VERSION,
            self.orientation.tag(),
            self.l_in.get(),
            self.l_out.get(),
            self.residues as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.filter.content_hash());
        out.extend_from_slice(&self.filter.theta_cutoff().to_le_bytes());
        out.extend_from_slice(&u32::from(self.has_coords()).to_le_bytes());
        out.extend_from_slice(&(self.n_rows() as u32).to_le_bytes());
        out.extend_from_slice(&(nnz as u64).to_le_bytes());
        out.extend_from_slice(&(fb.len() as u32).to_le_bytes());
        out.extend_from_slice(&fb);
        for w in &self.in_weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for &p in &self.row_ptr {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for v in self.col_ring.iter().chain(&self.col_lon) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let coords = self.thetas.iter().chain(&self.phis).flatten();
        for v in self.values.iter().chain(coords) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| DiscoError::Format {
            what: "kernel file",
            reason: reason.to_string(),
        };
        if bytes.len() < 4 + 32 || &bytes[..4] != KERNEL_MAGIC {
            return Err(bad("missing SKRN header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut cur = Cursor { buf: body, pos: 4 };
        if cur.u32()? != KERNEL_VERSION {
            return Err(bad("unsupported version"));
        }
        let orientation = KernelOrientation::from_tag(cur.u32()?).ok_or_else(|| bad("unknown orientation"))?;
        let l_in = Bandlimit::new(cur.u32()?)?;
        let l_out = Bandlimit::new(cur.u32()?)?;
        let residues = cur.u32()? as usize;
        if residue_count(l_in, l_out)? != residues {
            return Err(bad("residue count does not match resolutions"));
        }
        let hash: [u8; 32] = cur.take(32)?.try_into().unwrap();
        let cutoff = cur.f64()?;
        let has_coords = match cur.u32()? {
            0 => false,
            1 => true,
            _ => return Err(bad("bad coordinate flag")),
        };
        let n_rows = cur.u32()? as usize;
        let nnz = cur.u64()? as usize;
        let flen = cur.u32()? as usize;
        let filter = Filter::from_bytes(cur.take(flen)?)?;
        if filter.content_hash() != hash || filter.theta_cutoff() != cutoff {
            return Err(bad("embedded filter does not match header"));
        }
        if n_rows != l_out.n_rings() * residues {
            return Err(bad("row count does not match resolutions"));
        }
        let in_weights = cur.f64s(l_in.n_rings())?;
        let row_ptr: Vec<usize> = (0..=n_rows)
            .map(|_| cur.u64().map(|v| v as usize))
            .collect::<Result<_>>()?;
        if row_ptr[0] != 0 || row_ptr[n_rows] != nnz || row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("row pointers are inconsistent"));
        }
        let col_ring = cur.u32s(nnz)?;
        let col_lon = cur.u32s(nnz)?;
        if col_ring.iter().any(|&t| t as usize >= l_in.n_rings()) || col_lon.iter().any(|&p| p as usize >= l_in.n_lon())
        {
            return Err(bad("column index out of range"));
        }
        let values = cur.f64s(nnz)?;
        let (thetas, phis) = if has_coords {
            (Some(cur.f64s(nnz)?), Some(cur.f64s(nnz)?))
        } else {
            (None, None)
        };
        if cur.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            orientation,
            l_in,
            l_out,
            residues,
            row_ptr,
            col_ring,
            col_lon,
            values,
            thetas,
            phis,
            filter,
            in_weights,
            by_input_ring: OnceLock::new(),
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(DiscoError::Format {
                what: "kernel file",
                reason: "truncated".into(),
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
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

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        Ok(self
            .take(n.checked_mul(4).unwrap_or(usize::MAX))?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.checked_mul(8).unwrap_or(usize::MAX))?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// On-disk kernel cache keyed by filter hash, resolutions and options.
#[derive(Debug, Clone)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache rooted at `$DISCO_KERNEL_CACHE`, if set and nonempty.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, filter: &Filter, l_in: Bandlimit, l_out: Bandlimit, opts: KernelOptions) -> PathBuf {
        let mut h = Sha256::new();
        h.update(filter.content_hash());
        h.update(l_in.get().to_le_bytes());
        h.update(l_out.get().to_le_bytes());
        h.update(opts.orientation.tag().to_le_bytes());
        h.update([u8::from(opts.store_coords)]);
        let hex: String = h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("kernel-{hex}.skrn"))
    }

    /// Loads a cached kernel or builds and stores it. A cache entry that fails
    /// its checksum is reported as an error rather than silently rebuilt.
    pub fn get_or_build(
        &self,
        filter: &Filter,
        grid_in: &SampleGrid,
        grid_out: &SampleGrid,
        opts: KernelOptions,
    ) -> Result<CompressedSparseKernel> {
        let path = self.path_for(filter, grid_in.bandlimit(), grid_out.bandlimit(), opts);
        if path.exists() {
            let k = CompressedSparseKernel::read_from(std::fs::File::open(&path)?)?;
            if k.filter() != filter || k.orientation() != opts.orientation {
                return Err(DiscoError::Format {
                    what: "kernel file",
                    reason: format!("{} does not match the requested kernel", path.display()),
                });
            }
            return Ok(k);
        }
        let k = build_kernel_with(filter, grid_in, grid_out, opts)?;
        std::fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, k.to_bytes())?;
        std::fs::rename(&tmp, &path)?;
        Ok(k)
    }
}

/// Dense `Psi`, rows indexed by output sample and columns by input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernelMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseKernelMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.n_cols + i]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.data[j * self.n_cols + i] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n_cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n_cols, self.n_rows);
        for j in 0..self.n_rows {
            for i in 0..self.n_cols {
                t.set(i, j, self.get(j, i));
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Expands the compressed kernel through the shift identity.
pub fn densify(kernel: &CompressedSparseKernel) -> Result<DenseKernelMatrix> {
    if kernel.l_in.get() > DENSE_MAX_L {
        return Err(DiscoError::DenseTooLarge(kernel.l_in.get()));
    }
    let n_lon_in = kernel.l_in.n_lon();
    let n_lon_out = kernel.l_out.n_lon();
    let r = kernel.residues;
    let mut m = DenseKernelMatrix::zeros(kernel.l_out.n_samples(), kernel.l_in.n_samples());
    for t_out in 0..kernel.l_out.n_rings() {
        for rho in 0..r {
            let row = kernel.row(t_out, rho);
            for q in 0..n_lon_in {
                let j = t_out * n_lon_out + r * q + rho;
                for e in 0..row.values.len() {
                    let p = (row.lons[e] as usize + q) % n_lon_in;
                    m.set(j, row.rings[e] as usize * n_lon_in + p, row.values[e]);
                }
            }
        }
    }
    Ok(m)
}
