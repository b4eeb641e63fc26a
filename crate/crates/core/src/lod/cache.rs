//! Binary cache of LOD bases and ω tensors.
//!
//! Layout (little endian): magic, format version, the [`CacheKey`] fields,
//! the basis functions as `(coarse_dof, first_node, len, values...)`, then
//! the stored tensor entries as `(k, j, i, value)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::linalg::SparseTensor3;
use crate::mesh::{GridHierarchy, QUADRATURE};
use crate::potential::PotentialSplit;

use super::space::{LodBasisFunction, LodSpace};
use super::LodError;

const MAGIC: &[u8; 8] = b"LODGPE\0\0";
pub const CACHE_VERSION: u32 = 2;

/// Identifies a basis: domain, mesh sizes, layers, a hash of `V₁` sampled at
/// the fine quadrature points, and the ω drop tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheKey {
    pub a: f64,
    pub b: f64,
    pub n_coarse: u64,
    pub refinement: u32,
    pub layers: u64,
    pub v1_hash: u64,
    pub omega_tolerance: f64,
}

impl CacheKey {
    pub fn new(
        grid: &GridHierarchy,
        split: &PotentialSplit,
        layers: usize,
        omega_tolerance: f64,
    ) -> Self {
        // FNV-1a over the sampled values.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let h = grid.fine_h();
        for e in 0..grid.n_fine_elements() {
            for &(lambda, _) in &QUADRATURE {
                let v = split.v1.eval(grid, grid.fine_x(e) + lambda * h);
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= u64::from(byte);
                    hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        Self {
            a: grid.a(),
            b: grid.b(),
            n_coarse: grid.n_coarse() as u64,
            refinement: grid.refinement(),
            layers: layers as u64,
            v1_hash: hash,
            omega_tolerance,
        }
    }

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_f64::<LittleEndian>(self.a)?;
        w.write_f64::<LittleEndian>(self.b)?;
        w.write_u64::<LittleEndian>(self.n_coarse)?;
        w.write_u32::<LittleEndian>(self.refinement)?;
        w.write_u64::<LittleEndian>(self.layers)?;
        w.write_u64::<LittleEndian>(self.v1_hash)?;
        w.write_f64::<LittleEndian>(self.omega_tolerance)
    }

    fn read<R: Read>(r: &mut R) -> std::io::Result<Self> {
        Ok(Self {
            a: r.read_f64::<LittleEndian>()?,
            b: r.read_f64::<LittleEndian>()?,
            n_coarse: r.read_u64::<LittleEndian>()?,
            refinement: r.read_u32::<LittleEndian>()?,
            layers: r.read_u64::<LittleEndian>()?,
            v1_hash: r.read_u64::<LittleEndian>()?,
            omega_tolerance: r.read_f64::<LittleEndian>()?,
        })
    }
}

impl LodSpace {
    pub fn cache_key(&self) -> CacheKey {
        CacheKey::new(
            self.grid(),
            self.split(),
            self.layers(),
            self.omega_tolerance(),
        )
    }

    pub fn save_cache(&self, path: &Path) -> Result<(), LodError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        self.cache_key().write(&mut w)?;
        w.write_u8(u8::from(self.translation_reuse()))?;
        w.write_u64::<LittleEndian>(self.basis().len() as u64)?;
        for phi in self.basis() {
            w.write_u64::<LittleEndian>(phi.coarse_dof as u64)?;
            w.write_u64::<LittleEndian>(phi.first_node as u64)?;
            w.write_u64::<LittleEndian>(phi.values.len() as u64)?;
            for &v in &phi.values {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.write_u64::<LittleEndian>(self.omega().nnz() as u64)?;
        for (k, j, i, v) in self.omega().iter() {
            w.write_u32::<LittleEndian>(k as u32)?;
            w.write_u32::<LittleEndian>(j as u32)?;
            w.write_u32::<LittleEndian>(i as u32)?;
            w.write_f64::<LittleEndian>(v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Restores a space saved by [`LodSpace::save_cache`]. Fails with
    /// [`LodError::Cache`] when the file was written for different parameters
    /// or by another format version.
    pub fn load_cache(
        path: &Path,
        grid: &GridHierarchy,
        split: &PotentialSplit,
        layers: usize,
        omega_tolerance: f64,
    ) -> Result<Self, LodError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LodError::Cache("not a basis cache file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(LodError::Cache(format!(
                "format version {version}, expected {CACHE_VERSION}"
            )));
        }
        let expected = CacheKey::new(grid, split, layers, omega_tolerance);
        let found = CacheKey::read(&mut r)?;
        if found != expected {
            return Err(LodError::Cache(format!(
                "key mismatch: file has {found:?}, wanted {expected:?}"
            )));
        }
        let reuse = r.read_u8()? != 0;
        let n_basis = r.read_u64::<LittleEndian>()? as usize;
        if n_basis != grid.coarse_dofs() {
            return Err(LodError::Cache(format!("{n_basis} basis functions stored")));
        }
        let n_fine = grid.fine_dofs();
        let mut basis = Vec::with_capacity(n_basis);
        for _ in 0..n_basis {
            let coarse_dof = r.read_u64::<LittleEndian>()? as usize;
            let first_node = r.read_u64::<LittleEndian>()? as usize;
            let len = r.read_u64::<LittleEndian>()? as usize;
            if first_node == 0 || len == 0 || first_node + len - 1 > n_fine {
                return Err(LodError::Cache("basis window outside the fine grid".into()));
            }
            let mut values = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut values)?;
            basis.push(LodBasisFunction {
                coarse_dof,
                first_node,
                values,
            });
        }
        let nnz = r.read_u64::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let k = r.read_u32::<LittleEndian>()? as usize;
            let j = r.read_u32::<LittleEndian>()? as usize;
            let i = r.read_u32::<LittleEndian>()? as usize;
            entries.push((k, j, i, r.read_f64::<LittleEndian>()?));
        }
        let omega = SparseTensor3::from_entries(n_basis, entries, omega_tolerance)?;
        LodSpace::from_parts(
            grid.clone(),
            split.clone(),
            layers,
            omega_tolerance,
            reuse,
            basis,
            omega,
        )
    }
}
