//! Chebyshev–Gauss–Lobatto collocation on the unit interval.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Collocation in `s ∈ [0, 1]` with nodes `s_i = (1 + cos(pi i / M)) / 2`,
/// so `s_0 = 1` and `s_M = 0`.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    nodes: Vec<f64>,
    ds: DMatrix<f64>,
    dss: DMatrix<f64>,
    bary: Vec<f64>,
}

impl Chebyshev {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "need at least three Chebyshev nodes");
        let t: Vec<f64> = (0..=m).map(|i| (PI * i as f64 / m as f64).cos()).collect();
        let c = |i: usize| {
            let base = if i == 0 || i == m { 2.0 } else { 1.0 };
            if i % 2 == 0 {
                base
            } else {
                -base
            }
        };
        let mut dt = DMatrix::zeros(m + 1, m + 1);
        for i in 0..=m {
            for j in 0..=m {
                if i != j {
                    dt[(i, j)] = c(i) / c(j) / (t[i] - t[j]);
                }
            }
        }
        for i in 0..=m {
            let off: f64 = (0..=m).filter(|&j| j != i).map(|j| dt[(i, j)]).sum();
            dt[(i, i)] = -off;
        }
        // s = (1 + t) / 2
        let ds = dt * 2.0;
        let dss = &ds * &ds;
        let bary = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                if i % 2 == 0 {
                    w
                } else {
                    -w
                }
            })
            .collect();
        Self {
            nodes: t.iter().map(|ti| 0.5 * (1.0 + ti)).collect(),
            ds,
            dss,
            bary,
        }
    }

    /// Polynomial degree `M`.
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn ds(&self) -> &DMatrix<f64> {
        &self.ds
    }

    pub fn dss(&self) -> &DMatrix<f64> {
        &self.dss
    }

    /// Weights `w` with `p(s) = sum_i w_i p(s_i)` for the interpolant `p`.
    pub fn interpolation_weights(&self, s: f64) -> Vec<f64> {
        if let Some(i) = self.nodes.iter().position(|&si| si == s) {
            let mut w = vec![0.0; self.nodes.len()];
            w[i] = 1.0;
            return w;
        }
        let raw: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.bary)
            .map(|(si, bi)| bi / (s - si))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }
}
