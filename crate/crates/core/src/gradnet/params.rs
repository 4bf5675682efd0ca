/// Named parameter blocks stored contiguously, with matching gradient and
/// Adam moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    /// Blocks excluded from optimizer updates.
    frozen: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Appends a zero-initialized block and returns its offset.
    ///
    /// Panics if the name is already taken.
    pub fn add_block(&mut self, name: &str, len: usize) -> usize {
        assert!(self.block(name).is_none(), "duplicate parameter block {name}");
        let offset = self.values.len();
        self.blocks.push(ParamBlock { name: name.to_string(), offset, len });
        self.frozen.push(false);
        self.values.resize(offset + len, 0.0);
        self.grads.resize(offset + len, 0.0);
        self.m.resize(offset + len, 0.0);
        self.v.resize(offset + len, 0.0);
        offset
    }

    pub fn block(&self, name: &str) -> Option<(usize, usize)> {
        self.blocks.iter().find(|b| b.name == name).map(|b| (b.offset, b.len))
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn values_mut(&mut self, offset: usize, len: usize) -> &mut [f64] {
        &mut self.values[offset..offset + len]
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn set_frozen(&mut self, name_prefix: &str, frozen: bool) {
        for (b, f) in self.blocks.iter().zip(self.frozen.iter_mut()) {
            if b.name.starts_with(name_prefix) {
                *f = frozen;
            }
        }
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Per-block L2 norms of the values.
    pub fn block_norms(&self) -> Vec<(String, f64)> {
        self.blocks
            .iter()
            .map(|b| {
                let n = self.values[b.offset..b.offset + b.len].iter().map(|v| v * v).sum::<f64>().sqrt();
                (b.name.clone(), n)
            })
            .collect()
    }

    pub fn reset_optimizer_state(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }
}
