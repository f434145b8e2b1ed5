use super::env::Env;
use super::model::{Instance, ModelGraph, VarId};
use crate::error::{Error, Result};
use crate::kernels::transform::Transform;

/// The conditional density of a set of continuous variables, on the
/// unconstrained scale they are sampled in.
#[derive(Debug, Clone)]
pub struct BlockTarget {
    vars: Vec<VarId>,
    transforms: Vec<Transform>,
    /// Start of each variable in the unconstrained vector.
    offsets: Vec<usize>,
    instances: Vec<Instance>,
    /// Position of each graph variable within `vars`.
    slot: Vec<Option<usize>>,
    dim: usize,
    dtheta: Vec<Vec<f64>>,
}

impl BlockTarget {
    pub fn new(graph: &ModelGraph, vars: &[VarId]) -> Result<Self> {
        let mut transforms = Vec::new();
        let mut offsets = Vec::new();
        let mut slot = vec![None; graph.vars.len()];
        let mut dim = 0;
        for (k, &v) in vars.iter().enumerate() {
            let node = graph.var(v);
            if !node.is_unknown() || !node.is_continuous() {
                return Err(Error::InvalidArgument(format!(
                    "`{}` is not a continuous unknown and has no gradient",
                    node.name
                )));
            }
            let t = node
                .support
                .transform(node.len(), node.row_len())
                .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no transform", node.name)))?;
            offsets.push(dim);
            dim += t.unconstrained_len(node.len());
            transforms.push(t);
            slot[v] = Some(k);
        }
        let dtheta = vars.iter().map(|&v| vec![0.0; graph.var(v).len()]).collect();
        Ok(Self {
            vars: vars.to_vec(),
            transforms,
            offsets,
            instances: graph.touching(vars),
            slot,
            dim,
            dtheta,
        })
    }

    /// The same target restricted to the instances of one factor.
    pub fn only_factor(&self, factor: super::model::FactorId) -> Self {
        let mut t = self.clone();
        t.instances.retain(|&(f, _)| f == factor);
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    fn range(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.dim);
        self.offsets[k]..end
    }

    /// Unconstrained coordinates of the values currently in `env`.
    pub fn read(&self, env: &Env) -> Result<Vec<f64>> {
        let mut u = Vec::with_capacity(self.dim);
        for (k, &v) in self.vars.iter().enumerate() {
            u.extend(self.transforms[k].inverse(&env.values[v])?);
        }
        Ok(u)
    }

    /// Writes the constrained image of `u` into `env`; returns the log-Jacobian.
    pub fn write(&self, u: &[f64], env: &mut Env) -> Result<f64> {
        let mut log_j = 0.0;
        for (k, &v) in self.vars.iter().enumerate() {
            log_j += self.transforms[k].forward(&u[self.range(k)], &mut env.values[v])?;
        }
        Ok(log_j)
    }

    /// Unconstrained log-density (Jacobian included) at `u`. `env` is left holding the image of `u`.
    pub fn logp(&self, graph: &ModelGraph, u: &[f64], env: &mut Env) -> Result<f64> {
        let log_j = self.write(u, env)?;
        Ok(graph.sum_logp(env, &self.instances)? + log_j)
    }

    /// Log-density and its gradient with respect to `u`.
    pub fn logp_grad(&mut self, graph: &ModelGraph, u: &[f64], env: &mut Env, grad: &mut [f64]) -> Result<f64> {
        let log_j = self.write(u, env)?;
        self.dtheta.iter_mut().for_each(|d| d.fill(0.0));
        let slot = &self.slot;
        let dtheta = &mut self.dtheta;
        let lp = graph.sum_logp_grad(env, &self.instances, &mut |v, k, g| {
            if let Some(s) = slot[v] {
                dtheta[s][k] += g;
            }
        })?;
        for k in 0..self.vars.len() {
            let r = self.range(k);
            self.transforms[k].backprop(&u[r.clone()], &self.dtheta[k], &mut grad[r]);
        }
        Ok(lp + log_j)
    }
}
