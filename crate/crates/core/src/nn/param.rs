use crate::error::{Error, Result};

/// Handle to one named parameter block in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// What a parameter block is for; drives clamping and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Slope,
    AsauA,
    AsauB,
    AsauAlpha,
    AsauBeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub role: ParamRole,
    pub trainable: bool,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

/// Flat registry of every scalar the network owns, grouped into named blocks.
///
/// Individual scalars are addressed as `name` for single-value blocks and
/// `name[i]` otherwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        role: ParamRole,
        trainable: bool,
        values: Vec<f64>,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::param(format!("duplicate parameter name {name:?}")));
        }
        let grads = vec![0.0; values.len()];
        self.params.push(Param {
            name,
            role,
            trainable,
            values,
            grads,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// `(name, value, grad, trainable)` for every scalar, in registration order.
    pub fn scalars(&self) -> Vec<(String, f64, f64, bool)> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for p in &self.params {
            for (i, (v, g)) in p.values.iter().zip(&p.grads).enumerate() {
                out.push((scalar_name(&p.name, i, p.values.len()), *v, *g, p.trainable));
            }
        }
        out
    }

    /// Copies every value out, block by block.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.values.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.params.len()
            || snapshot
                .iter()
                .zip(&self.params)
                .any(|(s, p)| s.len() != p.values.len())
        {
            return Err(Error::Misaligned("snapshot layout differs from store".into()));
        }
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.values.copy_from_slice(s);
        }
        Ok(())
    }
}

pub fn scalar_name(block: &str, i: usize, len: usize) -> String {
    if len == 1 {
        block.to_string()
    } else {
        format!("{block}[{i}]")
    }
}
