use crate::model::ModelParams;
use crate::numerics::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self::for_shapes(params.matrices().iter().map(|m| m.shape()))
    }

    pub fn for_shapes(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let zeros: Vec<Matrix> = shapes
            .into_iter()
            .map(|(r, c)| Matrix::zeros(r, c))
            .collect();
        Self {
            second: zeros.clone(),
            first: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update. On a non-finite gradient or result
    /// returns the offending parameter's index, leaving every parameter as
    /// it was.
    pub fn update(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Matrix],
        lr: f64,
    ) -> Result<(), usize> {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        assert_eq!(params.len(), self.first.len(), "state matches parameters");
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(i);
        }
        let t = self.step + 1;
        let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
        let mut updated = Vec::with_capacity(params.len());
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape for parameter {i}");
            let m = self.first[i]
                .zip_map(g, |m, g| ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g)
                .expect("shape checked");
            let v = self.second[i]
                .zip_map(g, |v, g| ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g)
                .expect("shape checked");
            let mut next = (*p).clone();
            for ((x, &m), &v) in next
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_slice())
                .zip(v.as_slice())
            {
                *x -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_GUARD);
            }
            if !next.is_finite() {
                return Err(i);
            }
            updated.push((m, v, next));
        }
        for (i, (m, v, next)) in updated.into_iter().enumerate() {
            self.first[i] = m;
            self.second[i] = v;
            *params[i] = next;
        }
        self.step = t;
        Ok(())
    }
}

/// Adam update of every model parameter, in [`ModelParams::named`] order.
/// Errors carry the name of the parameter with a non-finite gradient.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), String> {
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let mut refs = params.matrices_mut();
    state
        .update(&mut refs, grads, lr)
        .map_err(|i| names[i].clone())
}
