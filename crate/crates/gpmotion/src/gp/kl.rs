//! Closed-form KL divergence between the block-structured posterior and the
//! GP prior, plus the dense oracle it is checked against.

use nalgebra::{DMatrix, DVector};

use super::{GpError, PosteriorParams, TemporalKernel};

/// KL between `N(μ, Diag_i(s_i·K))` and the prior `N(0, Diag_i(K))`:
///
/// `½·Σ_i [ s_i·T + μ̄_iᵀ·K⁻¹·μ̄_i − T − T·ln s_i ]`.
///
/// Zero exactly when `μ = 0` and `s = 1` (posterior equals the prior).
pub fn kl_gp(params: &PosteriorParams, kernel: &TemporalKernel) -> Result<f64, GpError> {
    let d = params.latent_dims();
    let t = params.t_lat();
    if kernel.t_lat() != t {
        return Err(GpError::Dimension {
            context: format!("kl_gp: kernel T={} vs params T={t}", kernel.t_lat()),
        });
    }
    for (i, &v) in params.s.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GpError::NonPositiveScale { index: i, value: v });
        }
    }
    let kinv = kernel.inverse();
    let tf = t as f64;
    let mut total = 0.0;
    for i in 0..d {
        let seg = params.mu_segment(i);
        let mut quad = 0.0;
        for r in 0..t {
            let mut acc = 0.0;
            for c in 0..t {
                acc += kinv[(r, c)] * seg[c];
            }
            quad += seg[r] * acc;
        }
        total += params.s[i] * tf + quad - tf - tf * params.s[i].ln();
    }
    Ok(0.5 * total)
}

/// Dense ground-truth oracle:
/// `½·(tr(Σ_p⁻¹Σ_q) + (μ_p−μ_q)ᵀΣ_p⁻¹(μ_p−μ_q) − n + ln(det Σ_p / det Σ_q))`.
///
/// Factorizations use nalgebra's own Cholesky, keeping this route independent
/// of the hand-written one it cross-checks.
pub fn kl_dense(
    mu_q: &DVector<f64>,
    sigma_q: &DMatrix<f64>,
    mu_p: &DVector<f64>,
    sigma_p: &DMatrix<f64>,
) -> Result<f64, GpError> {
    let n = mu_q.len();
    if sigma_q.nrows() != n || sigma_p.nrows() != n || mu_p.len() != n {
        return Err(GpError::Dimension { context: "kl_dense: dimension mismatch".into() });
    }
    let chol_p = sigma_p
        .clone()
        .cholesky()
        .ok_or(GpError::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
    let chol_q = sigma_q
        .clone()
        .cholesky()
        .ok_or(GpError::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;

    let trace = chol_p.solve(sigma_q).trace();
    let diff = mu_p - mu_q;
    let quad = diff.dot(&chol_p.solve(&DMatrix::from_column_slice(n, 1, diff.as_slice())).column(0).into_owned());
    let ln_det_p = 2.0 * chol_p.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ln_det_q = 2.0 * chol_q.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (trace + quad - n as f64 + ln_det_p - ln_det_q))
}
