//! Influence (iid) decomposition of `n^{1/2}(B̂ - B)`.
//!
//! Linearising one step of the recursion around the truth gives
//! `B̂(t_k) - B(t_k) ≈ (1 + d_k){B̂(t_{k-1}) - B(t_{k-1})} + n⁻¹ Σ_i n h_{i,k} dM_i(t_k)`
//! with `h_{i,k} = G^c_i e^{B̂(t_{k-1}) X_i} / den_k` and the residual
//! `dM_i = dN_i - R_i X_i ΔB̂`. Unrolling produces the product-integral
//! propagator `F(t_l, t_k) = ∏_{l<j<=k} (1 + d_j)`; the estimated centering
//! adds `D_k ε^θ_i`.

use nalgebra::DMatrix;

use crate::dataset::{SurvivalDataset, PRIMARY_EVENT};
use crate::estimators::RecursionTrace;
use crate::inference::InferenceError;
use crate::instrument::InstrumentModelFit;

#[derive(Debug, Clone, PartialEq)]
pub struct IidDecomposition {
    grid: Vec<f64>,
    /// n × m, `eps[(i, k)] = ε̂_i(t_k)` including the θ correction.
    eps: DMatrix<f64>,
    /// `1 + d_k`.
    one_step: Vec<f64>,
    theta_gradient: Vec<Vec<f64>>,
    /// n × dim(θ)
    theta_influence: DMatrix<f64>,
    ranks: Vec<usize>,
}

impl IidDecomposition {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eps(&self) -> &DMatrix<f64> {
        &self.eps
    }

    pub fn n_subjects(&self) -> usize {
        self.eps.nrows()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `F(t_l, t_k) = ∏_{j=l+1}^{k} (1 + d_j)`; 1 when `l >= k`.
    pub fn propagation(&self, l: usize, k: usize) -> f64 {
        self.one_step.iter().take(k + 1).skip(l + 1).product()
    }

    /// `D_k · ε^θ_i`.
    pub fn theta_correction(&self, i: usize, k: usize) -> f64 {
        self.theta_gradient[k].iter().enumerate().map(|(j, d)| d * self.theta_influence[(i, j)]).sum()
    }

    /// Canonical rank of each subject; multipliers are indexed by it.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Index of the largest grid time `<= t`.
    pub fn column_at(&self, t: f64) -> Option<usize> {
        self.grid.partition_point(|&g| g <= t).checked_sub(1)
    }

    /// First differences `Δε̂_i(t_k)` along the grid.
    pub fn increments(&self) -> DMatrix<f64> {
        let mut d = self.eps.clone();
        for k in (1..d.ncols()).rev() {
            let prev = self.eps.column(k - 1).clone_owned();
            d.column_mut(k).axpy(-1.0, &prev, 1.0);
        }
        d
    }
}

pub fn iid_decomposition(
    trace: &RecursionTrace,
    ds: &SurvivalDataset,
    fit: &InstrumentModelFit,
) -> Result<IidDecomposition, InferenceError> {
    let n = ds.len();
    let ranks = ds.canonical_ranks();
    let theta_influence = fit.influence().clone();
    if trace.n_subjects != n || fit.residuals().len() != n {
        return Err(InferenceError::TraceMismatch);
    }
    let grid = match ds.event_grid(PRIMARY_EVENT) {
        Ok(g) => g,
        Err(_) if trace.is_empty() => {
            return Ok(IidDecomposition {
                grid: vec![],
                eps: DMatrix::zeros(n, 0),
                one_step: vec![],
                theta_gradient: vec![],
                theta_influence,
                ranks,
            })
        }
        Err(_) => return Err(InferenceError::TraceMismatch),
    };
    if grid.times() != trace.times.as_slice() {
        return Err(InferenceError::TraceMismatch);
    }

    let m = grid.len();
    let nf = n as f64;
    let gc = fit.residuals();
    let x: Vec<f64> = ds.subjects().iter().map(|s| s.exposure).collect();
    let one_step: Vec<f64> = trace.slope.iter().map(|d| 1.0 + d).collect();

    // first component by forward recurrence, stored column by column
    let mut eps = DMatrix::<f64>::zeros(n, m);
    let mut running = vec![0.0; n];
    for k in 0..m {
        let f = one_step[k];
        running.iter_mut().for_each(|e| *e *= f);
        let (b, den, jump) = (trace.b_prev[k], trace.denominator[k], trace.jump[k]);
        for &i in grid.at_risk(k) {
            let h = gc[i] * (b * x[i]).exp() / den;
            running[i] -= nf * h * x[i] * jump;
        }
        for &i in grid.events(k) {
            running[i] += nf * gc[i] * (b * x[i]).exp() / den;
        }
        eps.column_mut(k).copy_from_slice(&running);
    }

    let p = fit.dim();
    for k in 0..m {
        let dk = &trace.theta_gradient[k];
        for i in 0..n {
            let mut c = 0.0;
            for j in 0..p {
                c += dk[j] * theta_influence[(i, j)];
            }
            eps[(i, k)] += c;
        }
    }

    Ok(IidDecomposition { grid: trace.times.clone(), eps, one_step, theta_gradient: trace.theta_gradient.clone(), theta_influence, ranks })
}
