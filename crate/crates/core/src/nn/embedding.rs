//! Token embedding lookup with optional gradient scatter.

use ndarray::{Array2, Array3};

use super::Param;

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Param, // [V, d]
    pub trainable: bool,
    /// Rows excluded from updates (the padding row stays zero).
    pub frozen_rows: Vec<usize>,
    cache: Option<Array2<usize>>,
}

impl Embedding {
    pub fn new(table: Array2<f64>, trainable: bool, frozen_rows: Vec<usize>) -> Self {
        Embedding {
            table: Param::new(table),
            trainable,
            frozen_rows,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.value.ncols()
    }

    /// `ids` is `[B, T]`; output `[B, T, d]`.
    pub fn forward(&mut self, ids: &Array2<usize>, train: bool) -> Array3<f64> {
        let (b, t) = ids.dim();
        let d = self.dim();
        let mut out = Array3::zeros((b, t, d));
        for bi in 0..b {
            for ti in 0..t {
                let row = self.table.value.row(ids[[bi, ti]]);
                out.slice_mut(ndarray::s![bi, ti, ..]).assign(&row);
            }
        }
        if train {
            self.cache = Some(ids.clone());
        }
        out
    }

    pub fn backward(&mut self, gy: &Array3<f64>) {
        if !self.trainable {
            return;
        }
        let ids = self.cache.as_ref().expect("forward(train) before backward");
        let (b, t) = ids.dim();
        for bi in 0..b {
            for ti in 0..t {
                let row = ids[[bi, ti]];
                if self.frozen_rows.contains(&row) {
                    continue;
                }
                let mut grad_row = self.table.grad.row_mut(row);
                grad_row += &gy.slice(ndarray::s![bi, ti, ..]);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        if self.trainable {
            vec![&mut self.table]
        } else {
            vec![]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn lookup_and_scatter() {
        let table = arr2(&[[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]]);
        let mut layer = Embedding::new(table, true, vec![0]);
        let ids = arr2(&[[1usize, 2], [0, 1]]);
        let out = layer.forward(&ids, true);
        assert_eq!(out[[0, 0, 1]], 2.0);
        assert_eq!(out[[1, 0, 0]], 0.0);

        let mut gy = ndarray::Array3::zeros((2, 2, 2));
        gy.fill(1.0);
        layer.backward(&gy);
        // Row 1 referenced twice, row 0 frozen.
        assert_eq!(layer.table.grad[[1, 0]], 2.0);
        assert_eq!(layer.table.grad[[2, 0]], 1.0);
        assert_eq!(layer.table.grad[[0, 0]], 0.0);
    }

    #[test]
    fn frozen_embedding_accumulates_nothing() {
        let table = arr2(&[[0.0, 0.0], [1.0, 2.0]]);
        let mut layer = Embedding::new(table, false, vec![0]);
        let ids = arr2(&[[1usize]]);
        layer.forward(&ids, true);
        let mut gy = ndarray::Array3::zeros((1, 1, 2));
        gy.fill(5.0);
        layer.backward(&gy);
        assert_eq!(layer.table.grad[[1, 0]], 0.0);
        assert!(layer.params_mut().is_empty());
    }
}
