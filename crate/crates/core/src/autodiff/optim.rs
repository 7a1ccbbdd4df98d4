use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{AutodiffError, GradientMap, ParamStore, Tensor};

/// Checks every gradient against its parameter before anything is mutated.
fn validate(params: &ParamStore, grads: &GradientMap) -> Result<(), AutodiffError> {
    for (name, g) in grads.iter() {
        let p = params
            .get(name)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))?;
        if p.shape() != g.shape() {
            return Err(AutodiffError::ShapeMismatch {
                name: name.to_string(),
                expected: p.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Plain gradient descent: `theta <- theta - lr * g` on trainable parameters.
pub fn sgd_step(params: &mut ParamStore, grads: &GradientMap, lr: f64) -> Result<(), AutodiffError> {
    validate(params, grads)?;
    for (name, g) in grads.iter() {
        if params.is_frozen(name) {
            continue;
        }
        let p = params.get_mut(name).expect("validated");
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: BTreeMap<String, Tensor>,
    second_moment: BTreeMap<String, Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first_moment.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second_moment.get(name)
    }

    /// Restores saved moments (checkpoint loading).
    pub fn restore(
        &mut self,
        step_count: u64,
        moments: impl IntoIterator<Item = (String, Tensor, Tensor)>,
    ) {
        self.step_count = step_count;
        self.first_moment.clear();
        self.second_moment.clear();
        for (name, m, v) in moments {
            self.first_moment.insert(name.clone(), m);
            self.second_moment.insert(name, v);
        }
    }

    pub fn moment_names(&self) -> impl Iterator<Item = &str> {
        self.first_moment.keys().map(String::as_str)
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradientMap,
        lr: f64,
    ) -> Result<(), AutodiffError> {
        validate(params, grads)?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads.iter() {
            if params.is_frozen(name) {
                continue;
            }
            let p = params.get_mut(name).expect("validated");
            let m = self
                .first_moment
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .second_moment
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for (((w, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradientMap,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), AutodiffError> {
    state.step(params, grads, lr)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer '{other}' (expected adam or sgd)")),
        }
    }
}

/// An optimizer together with whatever state it carries between steps.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::default()),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradientMap,
        lr: f64,
    ) -> Result<(), AutodiffError> {
        match self {
            Optimizer::Adam(state) => state.step(params, grads, lr),
            Optimizer::Sgd => sgd_step(params, grads, lr),
        }
    }
}
