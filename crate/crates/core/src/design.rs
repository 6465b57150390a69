//! Truncation, pole placement and the small-gain robustness certificate.
//!
//! For the truncated model `ẋ = Λx + w(t − D₀) + Δ(t)` the predictor gain is
//! `K = e^{D₀Λ}(A_cl − Λ)`. Given an envelope `‖e^{A_cl t}‖ ≤ M e^{−σt}`,
//! every delay with `|D − D₀| ≤ δ` is tolerated as long as
//!
//! ```text
//! max(M, e^{‖A_cl‖δ}) √N / σ · Σ_k ‖K_k‖ · {(e^{‖A_cl‖δ} − 1) + σδ e^{σδ}} < 1
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{expm, norm2, schur_departure, spectral_abscissa};
use crate::spectral::SpectralBasis;
use crate::{Error, Result};

/// Fraction of the spectral abscissa used as the default envelope rate.
pub const SIGMA_FRACTION: f64 = 0.99;
/// Number of log-spaced σ candidates in the certificate search.
pub const SIGMA_CANDIDATES: usize = 32;
pub const DEFAULT_ENVELOPE_SAMPLES: usize = 2000;
const DELTA_FLOOR: f64 = 1e-9;
const DELTA_CAP_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDesign {
    pub n: usize,
    /// Diagonal of Λ.
    pub lambda: Vec<f64>,
    pub gamma: f64,
    pub d0: f64,
    pub poles: Vec<f64>,
    pub acl: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub t0: f64,
}

impl ControllerDesign {
    /// Truncates `basis` at `margin` and places real poles for the nominal delay.
    pub fn from_basis(
        basis: &SpectralBasis,
        margin: f64,
        d0: f64,
        poles: &[f64],
        t0: f64,
    ) -> Result<Self> {
        let (n, gamma) = select_truncation(basis, margin)?;
        if poles.len() != n {
            return Err(Error::InvalidDesign(format!(
                "{} desired poles supplied for truncation order {n}",
                poles.len()
            )));
        }
        Self::new(basis.eigenvalues()[..n].to_vec(), gamma, d0, poles, t0)
    }

    pub fn new(lambda: Vec<f64>, gamma: f64, d0: f64, poles: &[f64], t0: f64) -> Result<Self> {
        if !(d0 > 0.0) {
            return Err(Error::InvalidDesign(format!(
                "nominal delay must be positive, got {d0}"
            )));
        }
        if !(t0 > 0.0) {
            return Err(Error::InvalidDesign(format!(
                "transition time must be positive, got {t0}"
            )));
        }
        let (acl, k) = place_poles(&lambda, d0, poles)?;
        Ok(Self {
            n: lambda.len(),
            lambda,
            gamma,
            d0,
            poles: poles.to_vec(),
            acl,
            k,
            t0,
        })
    }

    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.lambda))
    }

    /// `‖Λ + e^{−D₀Λ}K − A_cl‖₂`, zero up to rounding for a consistent design.
    pub fn identity_residual(&self) -> f64 {
        let lam = self.lambda_matrix();
        let recovered = &lam + expm(&(-self.d0 * &lam)) * &self.k;
        norm2(&(recovered - &self.acl))
    }

    /// `min(σ, γ/2)`, an indicative bound on the certified decay rate.
    pub fn kappa_bound(&self, sigma: f64) -> f64 {
        sigma.min(0.5 * self.gamma)
    }
}

/// Truncation order `N` (modes with `λ ≥ −margin`, at least one) and
/// `γ = −λ_{N+1}`.
pub fn select_truncation(basis: &SpectralBasis, margin: f64) -> Result<(usize, f64)> {
    truncate_spectrum(basis.eigenvalues(), margin)
}

pub fn truncate_spectrum(eigenvalues: &[f64], margin: f64) -> Result<(usize, f64)> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidDesign(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let n = eigenvalues
        .iter()
        .take_while(|&&l| l >= -margin)
        .count()
        .max(1);
    match eigenvalues.get(n) {
        Some(&next) => Ok((n, -next)),
        None => Err(Error::InsufficientBasis(format!(
            "all {} supplied modes satisfy λ ≥ −{margin}; compute more modes",
            eigenvalues.len()
        ))),
    }
}

/// Diagonal closed loop `A_cl = diag(poles)` and `K = e^{D₀Λ}(A_cl − Λ)`.
pub fn place_poles(lambda: &[f64], d0: f64, poles: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if poles.len() != lambda.len() {
        return Err(Error::InvalidDesign(format!(
            "expected {} poles, got {}",
            lambda.len(),
            poles.len()
        )));
    }
    if let Some(p) = poles.iter().find(|p| !(**p < 0.0)) {
        return Err(Error::InvalidDesign(format!(
            "desired pole {p} is not strictly negative"
        )));
    }
    let n = lambda.len();
    let acl = DMatrix::from_diagonal(&DVector::from_column_slice(poles));
    let k = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (d0 * lambda[i]).exp() * (poles[i] - lambda[i])
        } else {
            0.0
        }
    });
    Ok((acl, k))
}

/// `(M, σ)` with `‖e^{A_cl t}‖ ≤ M e^{−σt}` for all `t ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub m: f64,
    pub sigma: f64,
    /// Sampled horizon; beyond it the analytic tail bound stays below 1.
    pub horizon: f64,
}

/// Envelope with `σ = 0.99 |α(A_cl)|`.
pub fn decay_envelope(
    acl: &DMatrix<f64>,
    horizon: Option<f64>,
    samples: usize,
) -> Result<Envelope> {
    let a = hurwitz_abscissa(acl)?;
    envelope_for_rate(acl, SIGMA_FRACTION * a.abs(), horizon, samples)
}

fn hurwitz_abscissa(acl: &DMatrix<f64>) -> Result<f64> {
    if !acl.is_square() || acl.nrows() == 0 {
        return Err(Error::InvalidDesign(
            "closed-loop matrix must be square and non-empty".into(),
        ));
    }
    let a = spectral_abscissa(acl);
    if !(a < 0.0) {
        return Err(Error::InvalidDesign(format!(
            "A_cl is not Hurwitz (spectral abscissa {a})"
        )));
    }
    Ok(a)
}

/// Smallest `M ≥ 1` for a prescribed rate `0 < σ < |α(A_cl)|`.
pub fn envelope_for_rate(
    acl: &DMatrix<f64>,
    sigma: f64,
    horizon: Option<f64>,
    samples: usize,
) -> Result<Envelope> {
    let a = hurwitz_abscissa(acl)?;
    if !(sigma > 0.0 && sigma < a.abs()) {
        return Err(Error::InvalidDesign(format!(
            "σ = {sigma} must lie in (0, {})",
            a.abs()
        )));
    }
    let samples = samples.max(16);
    let tail = tail_horizon(schur_departure(acl)?, acl.nrows(), a.abs() - sigma);
    let horizon = horizon.unwrap_or(0.0).max(tail).max(1.0 / a.abs());

    // ‖e^{A t}‖ e^{σ t} = ‖e^{(A + σI) t}‖ without overflow at long horizons
    let shifted = acl + DMatrix::identity(acl.nrows(), acl.ncols()) * sigma;
    let weighted = |t: f64| norm2(&expm(&(&shifted * t)));
    let step = horizon / (samples - 1) as f64;
    let values: Vec<f64> = (0..samples).map(|i| weighted(i as f64 * step)).collect();
    let (best, mut m) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    if best > 0 {
        let lo = (best as f64 - 1.0) * step;
        let hi = ((best + 1) as f64 * step).min(horizon);
        m = m.max(golden_max(&weighted, lo, hi));
    }
    Ok(Envelope {
        m: m.max(1.0),
        sigma,
        horizon,
    })
}

/// First `t` after which `p(t) e^{−gap·t}` stays below one, where
/// `p(t) = Σ_{k<n} (νt)^k / k!`.
fn tail_horizon(nu: f64, n: usize, gap: f64) -> f64 {
    if nu == 0.0 || n < 2 {
        return 0.0;
    }
    let poly = |t: f64| {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut top = 1.0;
        for k in 1..n {
            term *= nu * t / k as f64;
            sum += term;
            if k == n - 1 {
                top = term;
            }
        }
        (sum, top)
    };
    // p'/p = ν (1 − top/p) decreases in t, so once the bound is decreasing
    // and below one it stays there.
    let below = |t: f64| {
        let (p, top) = poly(t);
        let dlog = nu * (1.0 - top / p);
        p * (-gap * t).exp() <= 1.0 && dlog <= gap
    };
    let mut hi = 1.0 / gap;
    while !below(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

/// Norm data of a design that the small-gain condition depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTerms {
    pub n: usize,
    pub acl_norm: f64,
    /// Σ_k ‖K_k‖ over the rows of K.
    pub row_norm_sum: f64,
}

impl GainTerms {
    pub fn new(acl: &DMatrix<f64>, k: &DMatrix<f64>) -> Self {
        Self {
            n: k.nrows(),
            acl_norm: norm2(acl),
            row_norm_sum: k.row_iter().map(|r| r.norm()).sum(),
        }
    }

    /// `C₀ = √N Σ_k ‖K_k‖`.
    pub fn c0(&self) -> f64 {
        (self.n as f64).sqrt() * self.row_norm_sum
    }

    /// `M_δ = max(M, e^{‖A_cl‖δ})`.
    pub fn m_delta(&self, m: f64, delta: f64) -> f64 {
        m.max((self.acl_norm * delta).exp())
    }

    pub fn lhs(&self, m: f64, sigma: f64, delta: f64) -> f64 {
        let growth = (self.acl_norm * delta).exp();
        let bracket = (growth - 1.0) + sigma * delta * (sigma * delta).exp();
        self.m_delta(m, delta) * self.c0() / sigma * bracket
    }
}

/// Left side of the small-gain condition.
pub fn small_gain_lhs(acl: &DMatrix<f64>, k: &DMatrix<f64>, m: f64, sigma: f64, delta: f64) -> f64 {
    GainTerms::new(acl, k).lhs(m, sigma, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSearch {
    pub delta_max: f64,
    pub envelope: Envelope,
}

/// Largest δ with a satisfied small-gain condition, capped at `D₀ − 10⁻⁶`.
///
/// With `sigma_search`, σ runs over [`SIGMA_CANDIDATES`] log-spaced values in
/// `[0.01|α|, 0.99|α|]` and the δ-maximizing envelope wins (ties go to the
/// smallest σ). Otherwise the envelope of [`decay_envelope`] is used.
pub fn max_delta(
    acl: &DMatrix<f64>,
    k: &DMatrix<f64>,
    d0: f64,
    sigma_search: bool,
    samples: usize,
) -> Result<DeltaSearch> {
    let a = hurwitz_abscissa(acl)?.abs();
    let terms = GainTerms::new(acl, k);
    if !sigma_search {
        let envelope = decay_envelope(acl, None, samples)?;
        let delta_max = delta_for_envelope(&terms, envelope, d0)?;
        return Ok(DeltaSearch {
            delta_max,
            envelope,
        });
    }
    let ratio = SIGMA_FRACTION / 0.01;
    let candidates: Vec<f64> = (0..SIGMA_CANDIDATES)
        .map(|i| 0.01 * a * ratio.powf(i as f64 / (SIGMA_CANDIDATES - 1) as f64))
        .collect();
    let results: Vec<DeltaSearch> = candidates
        .par_iter()
        .map(|&sigma| {
            let envelope = envelope_for_rate(acl, sigma, None, samples)?;
            let delta_max = delta_for_envelope(&terms, envelope, d0)?;
            Ok(DeltaSearch {
                delta_max,
                envelope,
            })
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, r| {
            if r.delta_max > best.delta_max {
                r
            } else {
                best
            }
        })
        .expect("at least one σ candidate"))
}

fn delta_for_envelope(terms: &GainTerms, env: Envelope, d0: f64) -> Result<f64> {
    let below = |delta: f64| {
        let v = terms.lhs(env.m, env.sigma, delta);
        v.is_finite() && v < 1.0
    };
    if !below(DELTA_FLOOR) {
        return Err(Error::Degenerate(format!(
            "small-gain condition already violated at δ = {DELTA_FLOOR}"
        )));
    }
    let cap = d0 - DELTA_CAP_GAP;
    if below(cap) {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (DELTA_FLOOR, cap);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Certificate document emitted by the `certify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallGainCertificate {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D0")]
    pub d0: f64,
    pub poles: Vec<f64>,
    /// Row-major gain.
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    pub sigma: f64,
    pub delta_max: f64,
    pub lhs_at_delta: f64,
    pub satisfied: bool,
    #[serde(rename = "Mdelta")]
    pub m_delta: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub gamma: f64,
    pub kappa_bound: f64,
    pub sigma_search: bool,
}

impl SmallGainCertificate {
    pub fn certify(design: &ControllerDesign, sigma_search: bool, samples: usize) -> Result<Self> {
        let search = max_delta(&design.acl, &design.k, design.d0, sigma_search, samples)?;
        let terms = GainTerms::new(&design.acl, &design.k);
        let Envelope { m, sigma, .. } = search.envelope;
        let lhs = terms.lhs(m, sigma, search.delta_max);
        Ok(Self {
            n: design.n,
            d0: design.d0,
            poles: design.poles.clone(),
            k: design.k.transpose().iter().copied().collect(),
            m,
            sigma,
            delta_max: search.delta_max,
            lhs_at_delta: lhs,
            satisfied: lhs < 1.0,
            m_delta: terms.m_delta(m, search.delta_max),
            c0: terms.c0(),
            gamma: design.gamma,
            kappa_bound: design.kappa_bound(sigma),
            sigma_search,
        })
    }
}
