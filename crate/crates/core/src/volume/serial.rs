//! Little-endian binary dump of a volume.
//!
//! Header: `voxel_size: f64`, `truncation: f64`, `max_weight: f64`,
//! `block_count: u64`. Then per block the coordinate as three `i32` followed
//! by 512 voxels of `tsdf: f32`, `weight: f32`, `rgb: [u8; 3]`, one pad byte.

use std::io::{Read, Write};
use std::path::Path;

use super::{HashedTsdfVolume, Voxel, VolumeConfig, VolumeError, VOXELS_PER_BLOCK};

const VOXEL_BYTES: usize = 12;

impl HashedTsdfVolume {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), VolumeError> {
        let cfg = self.config();
        w.write_all(&cfg.voxel_size.to_le_bytes())?;
        w.write_all(&cfg.truncation.to_le_bytes())?;
        w.write_all(&cfg.max_weight.to_le_bytes())?;
        w.write_all(&(self.block_count() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(12 + VOXELS_PER_BLOCK * VOXEL_BYTES);
        for block in self.blocks() {
            buf.clear();
            for c in block.coord {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            for v in block.voxels.iter() {
                buf.extend_from_slice(&v.tsdf.to_le_bytes());
                buf.extend_from_slice(&v.weight.to_le_bytes());
                buf.extend_from_slice(&v.color);
                buf.push(0);
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`HashedTsdfVolume::write_to`]. Settings not
    /// stored in the file come from `VolumeConfig::default()`.
    pub fn read_from(r: &mut impl Read) -> Result<Self, VolumeError> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head).map_err(|_| VolumeError::Format("truncated header".into()))?;
        let f = |i: usize| f64::from_le_bytes(head[i * 8..i * 8 + 8].try_into().unwrap());
        let count = u64::from_le_bytes(head[24..32].try_into().unwrap());
        let cfg = VolumeConfig { voxel_size: f(0), truncation: f(1), max_weight: f(2), ..VolumeConfig::default() };
        cfg.validate().map_err(|e| VolumeError::Format(e.to_string()))?;
        let mut vol = HashedTsdfVolume::new(cfg)?;
        let mut buf = vec![0u8; 12 + VOXELS_PER_BLOCK * VOXEL_BYTES];
        for n in 0..count {
            r.read_exact(&mut buf).map_err(|_| VolumeError::Format(format!("truncated block {n} of {count}")))?;
            let i32_at = |o: usize| i32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
            let f32_at = |o: usize| f32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
            let coord = [i32_at(0), i32_at(4), i32_at(8)];
            if vol.find_block(coord).is_some() {
                return Err(VolumeError::Format(format!("duplicate block {coord:?}")));
            }
            let idx = vol.allocate_block(coord);
            for k in 0..VOXELS_PER_BLOCK {
                let o = 12 + k * VOXEL_BYTES;
                let voxel = Voxel { tsdf: f32_at(o), weight: f32_at(o + 4), color: [buf[o + 8], buf[o + 9], buf[o + 10]] };
                if !(voxel.tsdf.abs() <= 1.0) || !(voxel.weight >= 0.0) {
                    return Err(VolumeError::Format(format!("voxel out of range in block {coord:?}")));
                }
                vol.blocks_mut()[idx].voxels[k] = voxel;
            }
        }
        Ok(vol)
    }

    pub fn save(&self, path: &Path) -> Result<(), VolumeError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VolumeError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut file)
    }
}
