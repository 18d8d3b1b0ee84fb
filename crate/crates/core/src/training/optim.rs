use crate::autodiff::{Gradients, Mat, ParamStore};

const EPS: f64 = 1e-10;

/// Adagrad: `acc += g²; θ -= lr · g / √acc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    learning_rate: f64,
    accumulators: Vec<Mat>,
}

impl Adagrad {
    pub fn new(params: &ParamStore, learning_rate: f64, initial: f64) -> Self {
        let accumulators = params
            .iter()
            .map(|(_, _, m)| Mat::filled(m.rows, m.cols, initial))
            .collect();
        Adagrad {
            learning_rate,
            accumulators,
        }
    }

    pub fn accumulators(&self) -> &[Mat] {
        &self.accumulators
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        for (id, g) in grads.iter() {
            let acc = &mut self.accumulators[id.0];
            let p = params.get_mut(id);
            for ((w, a), &gi) in p.data.iter_mut().zip(acc.data.iter_mut()).zip(&g.data) {
                *a += gi * gi;
                *w -= self.learning_rate * gi / (a.sqrt() + EPS);
            }
        }
    }
}
