//! Flat parameter storage shared by every differentiable component.
//!
//! Layers never own their weights. They hold [`Block`] handles into a
//! [`ParamSet`], which keeps every trainable value in one contiguous `Vec<f64>`
//! so whole networks can be pushed, pulled and checkpointed as a single vector.
//!
//! # Checkpoint layout
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes   b"QTPARAM1"
//! n_blocks   u32
//! per block:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (ndim x u64)
//! values     sum(prod(dims)) x f64, blocks in header order, row-major
//! ```

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QTPARAM1";

/// Handle to a contiguous run of parameters inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn slice<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.range()]
    }

    pub fn slice_mut<'a>(&self, values: &'a mut [f64]) -> &'a mut [f64] {
        &mut values[self.range()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    FanIn(usize),
    Uniform(f64),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub block: Block,
    pub init: Init,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    blocks: Vec<BlockInfo>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Block {
        let len = shape.iter().product();
        let block = Block {
            offset: self.total,
            len,
        };
        self.total += len;
        self.blocks.push(BlockInfo {
            name: name.into(),
            shape: shape.to_vec(),
            block,
            init,
        });
        block
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn find(&self, name: &str) -> Option<&BlockInfo> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.len()];
        ParamSet { layout, values }
    }

    /// Draws every block from its declared initializer.
    pub fn init<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let mut values = vec![0.0; layout.len()];
        for info in layout.blocks() {
            let dst = info.block.slice_mut(&mut values);
            match info.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    dst.iter_mut()
                        .for_each(|v| *v = rng.random_range(-bound..bound));
                }
                Init::Uniform(a) => dst.iter_mut().for_each(|v| *v = rng.random_range(-a..a)),
                Init::Const(c) => dst.fill(c),
            }
        }
        ParamSet { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::usage(format!(
                "layout expects {} parameters, got {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(ParamSet { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, block: Block) -> &[f64] {
        block.slice(&self.values)
    }

    pub fn get_mut(&mut self, block: Block) -> &mut [f64] {
        block.slice_mut(&mut self.values)
    }

    /// Overwrites all values (the "pull" of a worker).
    pub fn load(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::usage(format!(
                "cannot load {} values into a parameter set of {}",
                values.len(),
                self.values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::Checkpoint(format!("write failed: {e}"));
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.layout.blocks.len() as u32).to_le_bytes())
            .map_err(io)?;
        for info in &self.layout.blocks {
            let name = info.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())
                .map_err(io)?;
            w.write_all(name).map_err(io)?;
            w.write_all(&(info.shape.len() as u32).to_le_bytes())
                .map_err(io)?;
            for d in &info.shape {
                w.write_all(&(*d as u64).to_le_bytes()).map_err(io)?;
            }
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    /// Reads a checkpoint. Initializers are not stored; loaded blocks carry
    /// `Init::Const(0.0)`.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let n_blocks = read_u32(&mut r)? as usize;
        let mut layout = Layout::new();
        for _ in 0..n_blocks {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            layout.add(name, &shape, Init::Const(0.0));
        }
        let mut values = Vec::with_capacity(layout.len());
        let mut buf = [0u8; 8];
        for _ in 0..layout.len() {
            read_exact(&mut r, &mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(ParamSet { layout, values })
    }

    /// Loads values from a checkpoint whose block names and shapes match
    /// this set's layout.
    pub fn restore_from(&mut self, saved: &ParamSet) -> Result<()> {
        let ours = self.layout.blocks();
        let theirs = saved.layout.blocks();
        if ours.len() != theirs.len()
            || ours
                .iter()
                .zip(theirs)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(Error::Checkpoint(
                "checkpoint layout does not match the network architecture".into(),
            ));
        }
        self.values.copy_from_slice(&saved.values);
        Ok(())
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
