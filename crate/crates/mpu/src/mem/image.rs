//! Sparse global-memory image. Backs both the interpreter and the
//! simulator; can be serialized to a flat little-endian dump with a JSON
//! manifest describing the populated regions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const PAGE_SHIFT: u32 = 12;
const PAGE_SIZE: usize = 1 << PAGE_SHIFT;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemImage {
    pages: BTreeMap<u64, Box<[u8; PAGE_SIZE]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub base: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub regions: Vec<Region>,
}

impl MemImage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read_u32(&self, addr: u64) -> u32 {
        let mut b = [0u8; 4];
        self.read_bytes(addr, &mut b);
        u32::from_le_bytes(b)
    }

    pub fn write_u32(&mut self, addr: u64, val: u32) {
        self.write_bytes(addr, &val.to_le_bytes());
    }

    pub fn read_f32(&self, addr: u64) -> f32 {
        f32::from_bits(self.read_u32(addr))
    }

    pub fn write_f32(&mut self, addr: u64, val: f32) {
        self.write_u32(addr, val.to_bits());
    }

    pub fn read_bytes(&self, addr: u64, out: &mut [u8]) {
        for (i, b) in out.iter_mut().enumerate() {
            let a = addr + i as u64;
            let page = a >> PAGE_SHIFT;
            let off = (a as usize) & (PAGE_SIZE - 1);
            *b = self.pages.get(&page).map_or(0, |p| p[off]);
        }
    }

    pub fn write_bytes(&mut self, addr: u64, data: &[u8]) {
        for (i, &b) in data.iter().enumerate() {
            let a = addr + i as u64;
            let page = a >> PAGE_SHIFT;
            let off = (a as usize) & (PAGE_SIZE - 1);
            self.pages
                .entry(page)
                .or_insert_with(|| Box::new([0; PAGE_SIZE]))[off] = b;
        }
    }

    /// Populated regions, merged into maximal page-aligned runs.
    pub fn regions(&self) -> Vec<Region> {
        let mut out: Vec<Region> = Vec::new();
        for &page in self.pages.keys() {
            let base = page << PAGE_SHIFT;
            match out.last_mut() {
                Some(r) if r.base + r.len == base => r.len += PAGE_SIZE as u64,
                _ => out.push(Region { base, len: PAGE_SIZE as u64 }),
            }
        }
        out
    }

    /// Flat dump: manifest JSON, then each region's bytes in order.
    pub fn to_dump(&self) -> (Manifest, Vec<u8>) {
        let regions = self.regions();
        let mut data = Vec::new();
        for r in &regions {
            let mut buf = vec![0u8; r.len as usize];
            self.read_bytes(r.base, &mut buf);
            data.extend_from_slice(&buf);
        }
        (Manifest { regions }, data)
    }

    pub fn from_dump(manifest: &Manifest, data: &[u8]) -> Result<Self, String> {
        let total: u64 = manifest.regions.iter().map(|r| r.len).sum();
        if total != data.len() as u64 {
            return Err(format!(
                "manifest covers {total} bytes but dump holds {}",
                data.len()
            ));
        }
        let mut img = Self::new();
        let mut off = 0usize;
        for r in &manifest.regions {
            img.write_bytes(r.base, &data[off..off + r.len as usize]);
            off += r.len as usize;
        }
        Ok(img)
    }

    /// Compares only explicitly written ranges; untouched memory is zero
    /// everywhere so whole-image equality is region equality.
    pub fn diff(&self, other: &Self) -> Vec<u64> {
        let mut pages: Vec<u64> = self.pages.keys().chain(other.pages.keys()).copied().collect();
        pages.sort_unstable();
        pages.dedup();
        let mut bad = Vec::new();
        for page in pages {
            let base = page << PAGE_SHIFT;
            let mut a = vec![0u8; PAGE_SIZE];
            let mut b = vec![0u8; PAGE_SIZE];
            self.read_bytes(base, &mut a);
            other.read_bytes(base, &mut b);
            for i in 0..PAGE_SIZE {
                if a[i] != b[i] {
                    bad.push(base + i as u64);
                }
            }
        }
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwritten_reads_zero() {
        let img = MemImage::new();
        assert_eq!(img.read_u32(0x1234_5678), 0);
    }

    #[test]
    fn read_back_and_cross_page_write() {
        let mut img = MemImage::new();
        img.write_f32(100, 1.5);
        assert_eq!(img.read_f32(100), 1.5);
        let addr = (PAGE_SIZE - 2) as u64;
        img.write_u32(addr, 0xDEAD_BEEF);
        assert_eq!(img.read_u32(addr), 0xDEAD_BEEF);
    }

    #[test]
    fn dump_round_trip() {
        let mut img = MemImage::new();
        img.write_u32(0, 7);
        img.write_u32(0x10_0000, 9);
        let (m, data) = img.to_dump();
        assert_eq!(m.regions.len(), 2);
        let back = MemImage::from_dump(&m, &data).unwrap();
        assert!(img.diff(&back).is_empty());
        assert_eq!(back.read_u32(0x10_0000), 9);
    }

    #[test]
    fn diff_locates_mismatch() {
        let mut a = MemImage::new();
        let mut b = MemImage::new();
        a.write_u32(64, 1);
        b.write_u32(64, 2);
        let d = a.diff(&b);
        assert_eq!(d, vec![64]);
    }
}
