//! Sparse block-hashed TSDF volume.
//!
//! Voxel `g = (i, j, k)` is centered at `g * voxel_size` in world
//! coordinates and lives in block `floor(g / 8)`. Blocks are kept in an arena
//! and found through a chained hash table, so iteration order is the order in
//! which blocks were allocated.

mod integrate;
mod serial;

pub use integrate::{integrate_frame, integrate_frame_with_normals, IntegrationStats};

use crate::math::{trilinear, Vec3};

pub const BLOCK_SIDE: i32 = 8;
pub const VOXELS_PER_BLOCK: usize = 512;
pub const DEFAULT_TABLE_SIZE: usize = 1 << 20;

const NIL: u32 = u32::MAX;

pub type BlockCoord = [i32; 3];
pub type VoxelCoord = [i32; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VolumeError {
    #[error("invalid volume configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed volume file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for VolumeError {
    fn from(e: std::io::Error) -> Self {
        VolumeError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    /// Signed distance divided by the truncation distance, in `[-1, 1]`.
    pub tsdf: f32,
    /// Accumulated integration weight; zero means never observed.
    pub weight: f32,
    pub color: [u8; 3],
}

impl Default for Voxel {
    fn default() -> Self {
        Self { tsdf: 1.0, weight: 0.0, color: [0; 3] }
    }
}

impl Voxel {
    pub fn is_observed(&self) -> bool {
        self.weight > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelBlock {
    pub coord: BlockCoord,
    /// Indexed by `x + 8 y + 64 z` in block-local coordinates.
    pub voxels: Box<[Voxel; VOXELS_PER_BLOCK]>,
}

impl VoxelBlock {
    fn new(coord: BlockCoord) -> Self {
        Self { coord, voxels: Box::new([Voxel::default(); VOXELS_PER_BLOCK]) }
    }

    #[inline]
    pub fn local_index(x: usize, y: usize, z: usize) -> usize {
        x + 8 * y + 64 * z
    }

    /// Global coordinate of local voxel `idx`.
    #[inline]
    pub fn voxel_coord(&self, idx: usize) -> VoxelCoord {
        [
            self.coord[0] * BLOCK_SIDE + (idx % 8) as i32,
            self.coord[1] * BLOCK_SIDE + (idx / 8 % 8) as i32,
            self.coord[2] * BLOCK_SIDE + (idx / 64) as i32,
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.iter().all(|v| !v.is_observed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeConfig {
    pub voxel_size: f64,
    pub truncation: f64,
    pub max_weight: f64,
    /// Lower bound of the per-sample weight for grazing or normal-less samples.
    pub min_sample_weight: f64,
    pub table_size: usize,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.01,
            truncation: 0.04,
            max_weight: 128.0,
            min_sample_weight: 0.1,
            table_size: DEFAULT_TABLE_SIZE,
        }
    }
}

impl VolumeConfig {
    pub fn with_voxel_size(voxel_size: f64) -> Self {
        Self { voxel_size, truncation: 4.0 * voxel_size, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let bad = |m: &str| Err(VolumeError::InvalidConfig(m.to_string()));
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return bad("voxel size must be positive");
        }
        if !(self.truncation >= 2.0 * self.voxel_size) || !self.truncation.is_finite() {
            return bad("truncation must be at least twice the voxel size");
        }
        if !(self.max_weight > 0.0) {
            return bad("maximum weight must be positive");
        }
        if !(self.min_sample_weight > 0.0 && self.min_sample_weight <= 1.0) {
            return bad("minimum sample weight must be in (0, 1]");
        }
        if self.table_size == 0 || self.table_size > u32::MAX as usize {
            return bad("hash table size must be in 1..2^32");
        }
        Ok(())
    }
}

/// Bucket of a block coordinate: XOR of coordinate-prime products on wrapping
/// unsigned 32-bit arithmetic, reduced modulo `table_size`.
#[inline]
pub fn block_hash(coord: BlockCoord, table_size: usize) -> usize {
    let h = (coord[0] as u32).wrapping_mul(73_856_093)
        ^ (coord[1] as u32).wrapping_mul(19_349_669)
        ^ (coord[2] as u32).wrapping_mul(83_492_791);
    h as usize % table_size
}

#[inline]
pub fn block_of(voxel: VoxelCoord) -> BlockCoord {
    [voxel[0].div_euclid(BLOCK_SIDE), voxel[1].div_euclid(BLOCK_SIDE), voxel[2].div_euclid(BLOCK_SIDE)]
}

#[inline]
fn local_of(voxel: VoxelCoord) -> usize {
    let l = |c: i32| c.rem_euclid(BLOCK_SIDE) as usize;
    VoxelBlock::local_index(l(voxel[0]), l(voxel[1]), l(voxel[2]))
}

#[derive(Debug, Clone)]
pub struct HashedTsdfVolume {
    config: VolumeConfig,
    heads: Vec<u32>,
    next: Vec<u32>,
    blocks: Vec<VoxelBlock>,
}

impl HashedTsdfVolume {
    pub fn new(config: VolumeConfig) -> Result<Self, VolumeError> {
        config.validate()?;
        Ok(Self { config, heads: vec![NIL; config.table_size], next: Vec::new(), blocks: Vec::new() })
    }

    pub fn config(&self) -> &VolumeConfig {
        &self.config
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.config.truncation
    }

    pub fn block_extent(&self) -> f64 {
        self.config.voxel_size * BLOCK_SIDE as f64
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[VoxelBlock] {
        &self.blocks
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [VoxelBlock] {
        &mut self.blocks
    }

    pub fn find_block(&self, coord: BlockCoord) -> Option<usize> {
        let mut cur = self.heads[block_hash(coord, self.config.table_size)];
        while cur != NIL {
            if self.blocks[cur as usize].coord == coord {
                return Some(cur as usize);
            }
            cur = self.next[cur as usize];
        }
        None
    }

    pub fn block(&self, coord: BlockCoord) -> Option<&VoxelBlock> {
        self.find_block(coord).map(|i| &self.blocks[i])
    }

    /// Index of the block at `coord`, allocating it if absent.
    pub fn allocate_block(&mut self, coord: BlockCoord) -> usize {
        if let Some(i) = self.find_block(coord) {
            return i;
        }
        let bucket = block_hash(coord, self.config.table_size);
        let idx = self.blocks.len() as u32;
        self.blocks.push(VoxelBlock::new(coord));
        self.next.push(self.heads[bucket]);
        self.heads[bucket] = idx;
        idx as usize
    }

    pub fn voxel(&self, coord: VoxelCoord) -> Option<&Voxel> {
        self.block(block_of(coord)).map(|b| &b.voxels[local_of(coord)])
    }

    pub fn set_voxel(&mut self, coord: VoxelCoord, voxel: Voxel) {
        let b = self.allocate_block(block_of(coord));
        self.blocks[b].voxels[local_of(coord)] = voxel;
    }

    pub fn voxel_center(&self, coord: VoxelCoord) -> Vec3 {
        Vec3::new(coord[0] as f64, coord[1] as f64, coord[2] as f64) * self.config.voxel_size
    }

    /// Block containing the world point `p`.
    pub fn block_at_point(&self, p: &Vec3) -> BlockCoord {
        let s = self.block_extent();
        let h = 0.5 * self.config.voxel_size;
        [
            ((p.x + h) / s).floor() as i32,
            ((p.y + h) / s).floor() as i32,
            ((p.z + h) / s).floor() as i32,
        ]
    }

    /// Drops blocks that hold no observed voxel and rebuilds the table.
    pub fn remove_empty_blocks(&mut self) -> usize {
        let before = self.blocks.len();
        let kept: Vec<VoxelBlock> = std::mem::take(&mut self.blocks).into_iter().filter(|b| !b.is_empty()).collect();
        self.heads.iter_mut().for_each(|h| *h = NIL);
        self.next.clear();
        for b in kept {
            let c = b.coord;
            let idx = self.allocate_block(c);
            self.blocks[idx] = b;
        }
        before - self.blocks.len()
    }

    pub fn observed_voxel_count(&self) -> usize {
        self.blocks.iter().map(|b| b.voxels.iter().filter(|v| v.is_observed()).count()).sum()
    }

    /// Writes `sdf` (meters, positive outside) into every voxel of the
    /// axis-aligned box `[lo, hi]` whose distance magnitude is at most `band`.
    /// Values are stored normalized and clamped to `[-1, 1]` with weight 1.
    pub fn fill_from_sdf(&mut self, lo: &Vec3, hi: &Vec3, band: f64, sdf: impl Fn(&Vec3) -> f64) {
        let vs = self.config.voxel_size;
        let lo_i = lo.map(|c| (c / vs).floor() as i32);
        let hi_i = hi.map(|c| (c / vs).ceil() as i32);
        for z in lo_i.z..=hi_i.z {
            for y in lo_i.y..=hi_i.y {
                for x in lo_i.x..=hi_i.x {
                    let c = [x, y, z];
                    let d = sdf(&self.voxel_center(c));
                    if d.abs() <= band {
                        let tsdf = (d / self.config.truncation).clamp(-1.0, 1.0) as f32;
                        self.set_voxel(c, Voxel { tsdf, weight: 1.0, color: [128; 3] });
                    }
                }
            }
        }
    }

    /// Gathers the 8 voxels around `p` (corner index `x + 2y + 4z`) and the
    /// fractional position inside that cell. `None` if any corner is unobserved.
    fn cell_at(&self, p: &Vec3) -> Option<([&Voxel; 8], [f64; 3])> {
        let g = p / self.config.voxel_size;
        let base = [g.x.floor() as i32, g.y.floor() as i32, g.z.floor() as i32];
        let frac = [g.x - base[0] as f64, g.y - base[1] as f64, g.z - base[2] as f64];
        let mut cached: Option<(BlockCoord, &VoxelBlock)> = None;
        let mut corners: [Option<&Voxel>; 8] = [None; 8];
        for (i, slot) in corners.iter_mut().enumerate() {
            let c = [base[0] + (i & 1) as i32, base[1] + (i >> 1 & 1) as i32, base[2] + (i >> 2 & 1) as i32];
            let bc = block_of(c);
            let block = match cached {
                Some((cc, b)) if cc == bc => b,
                _ => {
                    let b = self.block(bc)?;
                    cached = Some((bc, b));
                    b
                }
            };
            let v = &block.voxels[local_of(c)];
            if !v.is_observed() {
                return None;
            }
            *slot = Some(v);
        }
        Some((corners.map(|c| c.unwrap()), frac))
    }

    /// Trilinearly interpolated normalized TSDF, or `None` if unobserved.
    pub fn sample_tsdf(&self, p: &Vec3) -> Option<f64> {
        let (c, f) = self.cell_at(p)?;
        Some(trilinear(&c.map(|v| v.tsdf as f64), f[0], f[1], f[2]))
    }

    /// Trilinearly interpolated color in `[0, 255]` per channel.
    pub fn sample_color(&self, p: &Vec3) -> Option<[f64; 3]> {
        let (c, f) = self.cell_at(p)?;
        Some(std::array::from_fn(|ch| trilinear(&c.map(|v| v.color[ch] as f64), f[0], f[1], f[2])))
    }

    /// Unit TSDF gradient from central differences one voxel apart.
    pub fn sample_gradient(&self, p: &Vec3) -> Option<Vec3> {
        let h = self.config.voxel_size;
        let mut g = Vec3::zeros();
        for axis in 0..3 {
            let mut off = Vec3::zeros();
            off[axis] = h;
            g[axis] = self.sample_tsdf(&(p + off))? - self.sample_tsdf(&(p - off))?;
        }
        let n = g.norm();
        (n > 0.0 && n.is_finite()).then(|| g / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hash_values() {
        assert_eq!(block_hash([0, 0, 0], 17), 0);
        assert_eq!(block_hash([0, 0, 0], 1 << 20), 0);
        assert_eq!(block_hash([1, 0, 0], 1 << 20), 73_856_093 % (1 << 20));
        assert_eq!(block_hash([1, 0, 0], 1 << 20), 455_773);
        // Negative coordinates wrap to unsigned before multiplying.
        let expect = ((-1i32) as u32).wrapping_mul(19_349_669) as usize % 1000;
        assert_eq!(block_hash([0, -1, 0], 1000), expect);
    }

    #[test]
    fn hash_collision_census() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        let mut counts = vec![0u32; 1 << 20];
        let mut seen = std::collections::HashSet::new();
        while seen.len() < 100_000 {
            let c = [rng.random_range(-500..500), rng.random_range(-500..500), rng.random_range(-500..500)];
            if seen.insert(c) {
                counts[block_hash(c, 1 << 20)] += 1;
                vol.allocate_block(c);
            }
        }
        assert!(*counts.iter().max().unwrap() <= 8);
        for c in &seen {
            assert_eq!(vol.block(*c).unwrap().coord, *c);
        }
        assert_eq!(vol.block_count(), 100_000);
    }

    #[test]
    fn block_and_local_indices() {
        assert_eq!(block_of([-1, 0, 8]), [-1, 0, 1]);
        assert_eq!(local_of([-1, 0, 8]), 7);
        let b = VoxelBlock::new([-1, 2, 0]);
        assert_eq!(b.voxel_coord(7 + 8 * 3 + 64 * 5), [-1, 19, 5]);
    }

    #[test]
    fn sample_at_voxel_center_and_unobserved() {
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    vol.set_voxel([x, y, z], Voxel { tsdf: (x + 2 * y + 4 * z) as f32 * 0.1, weight: 1.0, color: [10; 3] });
                }
            }
        }
        assert_eq!(vol.sample_tsdf(&Vec3::zeros()).unwrap(), 0.0);
        let v = vol.sample_tsdf(&Vec3::new(0.005, 0.005, 0.005)).unwrap();
        assert!((v - 0.35).abs() < 1e-6);
        assert!(vol.sample_tsdf(&Vec3::new(1.0, 1.0, 1.0)).is_none());
        // Corner (1,1,1) is the last observed voxel; the cell beyond it is not.
        assert!(vol.sample_tsdf(&Vec3::new(0.015, 0.0, 0.0)).is_none());
    }

    #[test]
    fn invalid_config() {
        let cfg = VolumeConfig { truncation: 0.01, ..VolumeConfig::default() };
        assert!(HashedTsdfVolume::new(cfg).is_err());
    }

    #[test]
    fn empty_blocks_removed() {
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        vol.allocate_block([0, 0, 0]);
        vol.set_voxel([9, 0, 0], Voxel { tsdf: 0.5, weight: 2.0, color: [1, 2, 3] });
        vol.allocate_block([5, 5, 5]);
        assert_eq!(vol.remove_empty_blocks(), 2);
        assert_eq!(vol.block_count(), 1);
        assert_eq!(vol.voxel([9, 0, 0]).unwrap().weight, 2.0);
        assert!(vol.block([0, 0, 0]).is_none());
    }

    #[test]
    fn sphere_gradient_is_radial() {
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        let r = 0.3;
        vol.fill_from_sdf(&Vec3::from_element(-0.4), &Vec3::from_element(0.4), 0.1, |p| p.norm() - r);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if dir.norm() < 0.1 {
                continue;
            }
            let dir = dir.normalize();
            let g = vol.sample_gradient(&(dir * r)).unwrap();
            assert!(g.dot(&dir).clamp(-1.0, 1.0).acos().to_degrees() < 3.0);
        }
        assert!(vol.sample_gradient(&Vec3::new(2.0, 0.0, 0.0)).is_none());
    }
}
