use std::ops::Range;

use crate::error::{GhostError, Result};
use crate::rng::RngStream;

use super::config::DynGhostConfig;

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub name: String,
    pub dims: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BlockSlots {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ModelSlots {
    pub embed_w: Range<usize>,
    pub embed_b: Range<usize>,
    pub pos_spatial: Range<usize>,
    pub pos_temporal: Range<usize>,
    pub blocks: Vec<BlockSlots>,
    pub head_w1: Range<usize>,
    pub head_b1: Range<usize>,
    pub head_w2: Range<usize>,
    pub head_b2: Range<usize>,
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// Normal with standard deviation `1 / sqrt(fan_in)`.
    FanIn(usize),
    Normal(f64),
}

struct Builder {
    slots: Vec<Slot>,
    inits: Vec<Init>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, dims: &[usize], init: Init) -> Range<usize> {
        let len: usize = dims.iter().product();
        let range = self.total..self.total + len;
        self.total += len;
        self.slots.push(Slot {
            name,
            dims: dims.to_vec(),
            range: range.clone(),
        });
        self.inits.push(init);
        range
    }
}

fn build(cfg: &DynGhostConfig) -> (Vec<Slot>, Vec<Init>, ModelSlots, usize) {
    let d = cfg.embed_dim;
    let n = cfg.pixels();
    let mut b = Builder {
        slots: Vec::new(),
        inits: Vec::new(),
        total: 0,
    };
    let embed_w = b.push("embed.weight".into(), &[n, d - 1], Init::FanIn(n));
    let embed_b = b.push("embed.bias".into(), &[d - 1], Init::Zeros);
    let pos_spatial = b.push("pos.spatial".into(), &[cfg.patterns, d], Init::Normal(cfg.pos_init_std));
    let pos_temporal = b.push("pos.temporal".into(), &[cfg.max_frames, d], Init::Normal(cfg.pos_init_std));
    let mut blocks = Vec::new();
    for (k, kind) in cfg.blocks.iter().enumerate() {
        let tag = match kind {
            super::config::BlockKind::Spatial => "spatial",
            super::config::BlockKind::Temporal => "temporal",
        };
        let p = |s: &str| format!("blocks.{k}.{tag}.{s}");
        let h = cfg.mlp_hidden;
        blocks.push(BlockSlots {
            ln1_g: b.push(p("ln1.gamma"), &[d], Init::Ones),
            ln1_b: b.push(p("ln1.beta"), &[d], Init::Zeros),
            wq: b.push(p("attn.wq"), &[d, d], Init::FanIn(d)),
            bq: b.push(p("attn.bq"), &[d], Init::Zeros),
            wk: b.push(p("attn.wk"), &[d, d], Init::FanIn(d)),
            bk: b.push(p("attn.bk"), &[d], Init::Zeros),
            wv: b.push(p("attn.wv"), &[d, d], Init::FanIn(d)),
            bv: b.push(p("attn.bv"), &[d], Init::Zeros),
            wo: b.push(p("attn.wo"), &[d, d], Init::FanIn(d)),
            bo: b.push(p("attn.bo"), &[d], Init::Zeros),
            ln2_g: b.push(p("ln2.gamma"), &[d], Init::Ones),
            ln2_b: b.push(p("ln2.beta"), &[d], Init::Zeros),
            w1: b.push(p("mlp.w1"), &[d, h], Init::FanIn(d)),
            b1: b.push(p("mlp.b1"), &[h], Init::Zeros),
            w2: b.push(p("mlp.w2"), &[h, d], Init::FanIn(h)),
            b2: b.push(p("mlp.b2"), &[d], Init::Zeros),
        });
    }
    let flat = cfg.patterns * d;
    let head_w1 = b.push("head.w1".into(), &[flat, cfg.head_hidden], Init::FanIn(flat));
    let head_b1 = b.push("head.b1".into(), &[cfg.head_hidden], Init::Zeros);
    let head_w2 = b.push("head.w2".into(), &[cfg.head_hidden, n], Init::FanIn(cfg.head_hidden));
    let head_b2 = b.push("head.b2".into(), &[n], Init::Zeros);
    let slots = ModelSlots {
        embed_w,
        embed_b,
        pos_spatial,
        pos_temporal,
        blocks,
        head_w1,
        head_b1,
        head_w2,
        head_b2,
    };
    (b.slots, b.inits, slots, b.total)
}

/// Named model parameters over one flat vector.
///
/// Gradients use the same type and layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    slots: Vec<Slot>,
    pub(crate) model: ModelSlots,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn zeros(cfg: &DynGhostConfig) -> Result<Self> {
        cfg.validate()?;
        let (slots, _, model, total) = build(cfg);
        Ok(ParamStore {
            slots,
            model,
            values: vec![0.0; total],
        })
    }

    /// Deterministic initialization; slot `k` draws from substream `k` of `seed`.
    pub fn init(cfg: &DynGhostConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (slots, inits, model, total) = build(cfg);
        let mut values = vec![0.0; total];
        for (k, (slot, init)) in slots.iter().zip(&inits).enumerate() {
            let mut rng = RngStream::substream(seed, k as u64);
            let dst = &mut values[slot.range.clone()];
            match *init {
                Init::Zeros => {}
                Init::Ones => dst.iter_mut().for_each(|v| *v = 1.0),
                Init::FanIn(fan) => {
                    let s = 1.0 / (fan as f64).sqrt();
                    dst.iter_mut().for_each(|v| *v = s * rng.standard_normal());
                }
                Init::Normal(s) => dst.iter_mut().for_each(|v| *v = s * rng.standard_normal()),
            }
        }
        Ok(ParamStore { slots, model, values })
    }

    pub fn zeros_like(&self) -> Self {
        ParamStore {
            slots: self.slots.clone(),
            model: self.model.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.slots.iter().find(|s| s.name == name).map(|s| &self.values[s.range.clone()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.slots.iter().find(|s| s.name == name)?.range.clone();
        Some(&mut self.values[range])
    }

    /// Name of the slot holding flat index `k`.
    pub fn name_of(&self, k: usize) -> Option<&str> {
        self.slots.iter().find(|s| s.range.contains(&k)).map(|s| s.name.as_str())
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.slots == other.slots
    }

    /// First slot holding a non-finite value, reported by name.
    pub fn check_finite(&self) -> Result<()> {
        for s in &self.slots {
            if self.values[s.range.clone()].iter().any(|v| !v.is_finite()) {
                return Err(GhostError::NonFinite { name: s.name.clone() });
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &ParamStore, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}
