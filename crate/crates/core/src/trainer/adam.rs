/// First and second moment estimates for one parameter class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments { m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam step; `step` counts from 1.
    pub fn update<'a>(
        &mut self,
        adam: &Adam,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = f64>,
        lr: f64,
        step: u64,
    ) {
        let c1 = 1.0 - adam.beta1.powi(step as i32);
        let c2 = 1.0 - adam.beta2.powi(step as i32);
        for (((p, g), m), v) in params.zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
            *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + adam.eps);
        }
    }

    /// Rebuilds the moments for a reindexed parameter array; `None` entries
    /// start from zero. `stride` is the number of scalars per element.
    pub fn reindex(&self, source: &[Option<usize>], stride: usize) -> Moments {
        let mut out = Moments::zeros(source.len() * stride);
        for (dst, src) in source.iter().enumerate() {
            if let Some(s) = src {
                out.m[dst * stride..(dst + 1) * stride].copy_from_slice(&self.m[s * stride..(s + 1) * stride]);
                out.v[dst * stride..(dst + 1) * stride].copy_from_slice(&self.v[s * stride..(s + 1) * stride]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut m = Moments::zeros(2);
        m.update(&Adam::default(), p.iter_mut(), [0.0, 0.0].into_iter(), 0.1, 1);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn reindex_moves_state() {
        let m = Moments { m: vec![1.0, 2.0, 3.0, 4.0], v: vec![5.0, 6.0, 7.0, 8.0] };
        let r = m.reindex(&[Some(1), None], 2);
        assert_eq!(r.m, vec![3.0, 4.0, 0.0, 0.0]);
        assert_eq!(r.v, vec![7.0, 8.0, 0.0, 0.0]);
    }
}
