//! Composite Gauss-Legendre quadrature on uniform panels with cumulative
//! (running) integrals evaluated at every node.
//!
//! Within a panel the running integral uses the spectral integration matrix
//! of the Gauss-Legendre nodes, so cumulative tables carry the same order of
//! accuracy as the definite integral.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `integration[j][l] = int_{-1}^{x_j} L_l(x) dx` for the Lagrange basis `L_l`.
    pub integration: Vec<Vec<f64>>,
}

fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n > 0 {
        p[1] = x;
    }
    for k in 1..n {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre_all(n, x);
                let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
                let dx = p[n] / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let p = legendre_all(n, x);
            let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }

        // L_l(x) = sum_k c_lk P_k(x), with c_lk = (2k+1)/2 * w_l * P_k(x_l).
        let p_at_nodes: Vec<Vec<f64>> = nodes.iter().map(|&x| legendre_all(n, x)).collect();
        let mut integration = vec![vec![0.0; n]; n];
        for j in 0..n {
            let pj = &p_at_nodes[j];
            // int_{-1}^{x} P_k = (P_{k+1}(x) - P_{k-1}(x)) / (2k+1), k >= 1; x + 1 for k = 0.
            let mut ip = vec![0.0; n];
            ip[0] = nodes[j] + 1.0;
            for k in 1..n {
                ip[k] = (pj[k + 1] - pj[k - 1]) / (2 * k + 1) as f64;
            }
            for l in 0..n {
                let pl = &p_at_nodes[l];
                integration[j][l] = (0..n)
                    .map(|k| 0.5 * (2 * k + 1) as f64 * weights[l] * pl[k] * ip[k])
                    .sum();
            }
        }
        GaussLegendre {
            nodes,
            weights,
            integration,
        }
    }
}

/// Uniform panels over `[t0, tf]` with `order` Gauss-Legendre nodes each.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    pub t0: f64,
    pub tf: f64,
    pub n_panels: usize,
    pub order: usize,
    /// Quadrature nodes, panel-major, increasing.
    pub nodes: Vec<f64>,
    /// Definite-integral weights matching `nodes`.
    pub weights: Vec<f64>,
    rule: GaussLegendre,
}

/// Default Gauss-Legendre order per panel.
pub const DEFAULT_ORDER: usize = 8;
/// Default number of panels per detuning period `2 pi / mu`.
pub const DEFAULT_PANELS_PER_PERIOD: f64 = 12.0;

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, n_panels: usize, order: usize) -> Self {
        assert!(tf > t0 && n_panels >= 1);
        let rule = GaussLegendre::new(order);
        let h = (tf - t0) / n_panels as f64;
        let mut nodes = Vec::with_capacity(n_panels * order);
        let mut weights = Vec::with_capacity(n_panels * order);
        for p in 0..n_panels {
            let a = t0 + h * p as f64;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(a + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        TimeGrid {
            t0,
            tf,
            n_panels,
            order,
            nodes,
            weights,
            rule,
        }
    }

    /// Grid resolving the detuning `mu` with `panels_per_period` panels per
    /// `2 pi / mu`.
    pub fn for_detuning(t0: f64, tf: f64, mu: f64, panels_per_period: f64, order: usize) -> Self {
        let periods = (tf - t0) * mu / (2.0 * PI);
        let n_panels = ((periods * panels_per_period).ceil() as usize).max(4);
        Self::new(t0, tf, n_panels, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panel_width(&self) -> f64 {
        (self.tf - self.t0) / self.n_panels as f64
    }

    /// Definite integral over `[t0, tf]` of samples taken at `nodes`.
    pub fn integrate<T>(&self, values: &[T]) -> T
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
    {
        debug_assert_eq!(values.len(), self.len());
        values
            .iter()
            .zip(&self.weights)
            .fold(T::default(), |acc, (&v, &w)| acc + v * w)
    }

    /// Running integral `int_{t0}^{t} f` at every node, plus the total.
    pub fn cumulative<T>(&self, values: &[T]) -> (Vec<T>, T)
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
    {
        debug_assert_eq!(values.len(), self.len());
        let n = self.order;
        let half = 0.5 * self.panel_width();
        let mut out = Vec::with_capacity(values.len());
        let mut edge = T::default();
        for panel in values.chunks_exact(n) {
            for row in &self.rule.integration {
                let mut acc = edge;
                for (&v, &s) in panel.iter().zip(row) {
                    acc = acc + v * (s * half);
                }
                out.push(acc);
            }
            let mut total = T::default();
            for (&v, &w) in panel.iter().zip(&self.rule.weights) {
                total = total + v * (w * half);
            }
            edge = edge + total;
        }
        (out, edge)
    }
}

/// Convenience for complex sample vectors.
pub fn cumulative_complex(grid: &TimeGrid, values: &[Complex64]) -> (Vec<Complex64>, Complex64) {
    grid.cumulative(values)
}
