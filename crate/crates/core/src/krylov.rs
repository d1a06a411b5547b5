//! Restarted GMRES advancing several independent right-hand sides in
//! lock-step, so that operator applications can be batched.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresSettings {
    /// Relative residual target `||b - Ax|| <= tol ||b||`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            restart: 60,
            max_iter: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresFailure {
    pub column: usize,
    pub relative_residual: f64,
    pub iterations: usize,
}

struct Column {
    rhs_norm: f64,
    solution: DVector<f64>,
    basis: Vec<DVector<f64>>,
    hess: Vec<Vec<f64>>,
    cs: Vec<f64>,
    sn: Vec<f64>,
    g: Vec<f64>,
    estimate: f64,
    in_cycle: bool,
    done: bool,
}

impl Column {
    fn finish_cycle(&mut self) {
        let k = self.hess.len();
        if k == 0 {
            return;
        }
        // back substitution on the rotated Hessenberg matrix
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = self.g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= self.hess[l][i] * yl;
            }
            y[i] = acc / self.hess[i][i];
        }
        for (v, yi) in self.basis.iter().zip(&y) {
            self.solution.axpy(*yi, v, 1.0);
        }
        self.basis.clear();
        self.hess.clear();
        self.cs.clear();
        self.sn.clear();
        self.in_cycle = false;
    }
}

/// Solves `A x_c = b_c` for every column, where `apply` evaluates `A` on a
/// batch of vectors. Returns the solutions or the first column that failed.
pub fn gmres_batch<F>(
    apply: F,
    rhs: &[DVector<f64>],
    settings: &GmresSettings,
) -> Result<(Vec<DVector<f64>>, usize), GmresFailure>
where
    F: Fn(&[&DVector<f64>]) -> Vec<DVector<f64>>,
{
    let n = rhs.first().map_or(0, |b| b.len());
    let mut cols: Vec<Column> = rhs
        .iter()
        .map(|b| {
            let rhs_norm = b.norm();
            Column {
                rhs_norm,
                solution: DVector::zeros(n),
                basis: Vec::new(),
                hess: Vec::new(),
                cs: Vec::new(),
                sn: Vec::new(),
                g: Vec::new(),
                estimate: rhs_norm,
                in_cycle: false,
                done: rhs_norm == 0.0 || !rhs_norm.is_finite(),
            }
        })
        .collect();
    if cols.iter().any(|c| !c.rhs_norm.is_finite()) {
        let column = cols.iter().position(|c| !c.rhs_norm.is_finite()).unwrap();
        return Err(GmresFailure {
            column,
            relative_residual: f64::NAN,
            iterations: 0,
        });
    }

    let mut iterations = 0;
    let mut first_cycle = true;
    loop {
        let active: Vec<usize> = (0..cols.len()).filter(|&c| !cols[c].done).collect();
        if active.is_empty() {
            break;
        }
        if iterations >= settings.max_iter {
            let c = active[0];
            return Err(GmresFailure {
                column: c,
                relative_residual: cols[c].estimate / cols[c].rhs_norm,
                iterations,
            });
        }
        // residuals for the new cycle
        let residuals: Vec<DVector<f64>> = if first_cycle {
            active.iter().map(|&c| rhs[c].clone()).collect()
        } else {
            let xs: Vec<&DVector<f64>> = active.iter().map(|&c| &cols[c].solution).collect();
            let ax = apply(&xs);
            active
                .iter()
                .zip(ax)
                .map(|(&c, axc)| &rhs[c] - axc)
                .collect()
        };
        first_cycle = false;
        for (&c, r) in active.iter().zip(residuals) {
            let col = &mut cols[c];
            let beta = r.norm();
            col.estimate = beta;
            if beta <= settings.tol * col.rhs_norm {
                col.done = true;
                continue;
            }
            col.basis.push(r / beta);
            col.g = vec![beta];
            col.in_cycle = true;
        }

        for _ in 0..settings.restart {
            let cycling: Vec<usize> = (0..cols.len()).filter(|&c| cols[c].in_cycle).collect();
            if cycling.is_empty() {
                break;
            }
            iterations += 1;
            let vs: Vec<&DVector<f64>> = cycling
                .iter()
                .map(|&c| cols[c].basis.last().unwrap())
                .collect();
            let ws = apply(&vs);
            for (&c, mut w) in cycling.iter().zip(ws) {
                let col = &mut cols[c];
                let j = col.basis.len() - 1;
                let mut h = vec![0.0; j + 2];
                for (l, v) in col.basis.iter().enumerate() {
                    h[l] = w.dot(v);
                    w.axpy(-h[l], v, 1.0);
                }
                // one reorthogonalization pass keeps the basis clean at tight tolerances
                for (l, v) in col.basis.iter().enumerate() {
                    let corr = w.dot(v);
                    h[l] += corr;
                    w.axpy(-corr, v, 1.0);
                }
                let wn = w.norm();
                h[j + 1] = wn;
                for l in 0..j {
                    let (a, b) = (h[l], h[l + 1]);
                    h[l] = col.cs[l] * a + col.sn[l] * b;
                    h[l + 1] = -col.sn[l] * a + col.cs[l] * b;
                }
                let denom = h[j].hypot(h[j + 1]);
                let (cs, sn) = if denom == 0.0 {
                    (1.0, 0.0)
                } else {
                    (h[j] / denom, h[j + 1] / denom)
                };
                h[j] = denom;
                h[j + 1] = 0.0;
                col.cs.push(cs);
                col.sn.push(sn);
                let gj = col.g[j];
                col.g[j] = cs * gj;
                col.g.push(-sn * gj);
                col.estimate = col.g[j + 1].abs();
                col.hess.push(h);
                let converged = col.estimate <= settings.tol * col.rhs_norm;
                let breakdown = wn <= 1e-300 || denom == 0.0;
                if converged || breakdown || iterations >= settings.max_iter {
                    col.finish_cycle();
                    if converged || breakdown {
                        col.done = true;
                    }
                } else {
                    col.basis.push(w / wn);
                }
            }
        }
        for col in cols.iter_mut().filter(|c| c.in_cycle) {
            col.finish_cycle();
        }
    }
    Ok((cols.into_iter().map(|c| c.solution).collect(), iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn solves_nonsymmetric_batch() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64 * 0.1
            } else {
                ((i * 7 + j * 3) % 11) as f64 / 40.0 - 0.12
            }
        });
        let rhs: Vec<DVector<f64>> = (0..3)
            .map(|c| DVector::from_fn(n, |i, _| ((i + c) as f64).sin()))
            .collect();
        let settings = GmresSettings {
            tol: 1e-13,
            restart: 7,
            max_iter: 500,
        };
        let (xs, _) = gmres_batch(
            |vs| vs.iter().map(|v| &a * *v).collect(),
            &rhs,
            &settings,
        )
        .unwrap();
        for (x, b) in xs.iter().zip(&rhs) {
            assert!((&a * x - b).norm() < 1e-11 * b.norm());
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (xs, it) = gmres_batch(
            |vs| vs.iter().map(|v| (*v).clone()).collect(),
            &[DVector::zeros(5)],
            &GmresSettings::default(),
        )
        .unwrap();
        assert_eq!(it, 0);
        assert_eq!(xs[0], DVector::zeros(5));
    }
}
