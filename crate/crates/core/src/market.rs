//! Operator and market descriptions, served-demand moments under a licensed
//! channel cap, and the trivariate (demand, licensed revenue, bid) sampler.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, normal_cdf, normal_pdf, normal_sf};

/// Standard-normal half-width beyond which the density is treated as zero.
const Z_LIMIT: f64 = 38.5;
const QUAD_REL_TOL: f64 = 1e-13;
/// Jitter scale applied once when a covariance fails to factor.
const PSD_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorId(pub u32);

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Everything that characterises one operator: latent demand statistics,
/// the affine revenue map `h(μ) = a·μ`, the revenue noise, the two
/// correlations and the minimum expected revenue as a fraction of the
/// full-service revenue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorProfile {
    pub id: OperatorId,
    pub mu_theta: f64,
    pub sigma_theta: f64,
    pub revenue_slope: f64,
    pub revenue_cv: f64,
    pub rho: f64,
    pub omega: f64,
    pub mer_fraction: f64,
}

impl OperatorProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidProfile { id: self.id, reason: reason.into() });
        let fields = [
            self.mu_theta,
            self.sigma_theta,
            self.revenue_slope,
            self.revenue_cv,
            self.rho,
            self.omega,
            self.mer_fraction,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.sigma_theta <= 0.0 {
            return bad("sigma_theta must be positive");
        }
        if self.revenue_slope <= 0.0 {
            return bad("revenue_slope must be positive");
        }
        if self.revenue_cv < 0.0 {
            return bad("revenue_cv must be non-negative");
        }
        if !(0.0..1.0).contains(&self.rho) || !(0.0..1.0).contains(&self.omega) {
            return bad("rho and omega must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.mer_fraction) {
            return bad("mer_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Mean revenue for a mean served demand (per epoch).
    pub fn revenue(&self, mean_served: f64) -> f64 {
        self.revenue_slope * mean_served
    }

    /// Revenue standard deviation for a given mean served demand.
    pub fn revenue_sd(&self, mean_served: f64) -> f64 {
        self.revenue_cv * self.revenue(mean_served)
    }

    /// Minimum expected revenue per epoch of `t_slots` slots.
    pub fn mer(&self, t_slots: u32) -> f64 {
        self.mer_fraction * self.revenue(self.mu_theta * f64::from(t_slots))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Osa {
    Overlay,
    Interweave,
}

impl fmt::Display for Osa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Osa::Overlay => "overlay",
            Osa::Interweave => "interweave",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    #[serde(default = "one")]
    pub m: u32,
    #[serde(default)]
    pub p: u32,
    pub t_slots: u32,
    pub d_total: f64,
    /// 1 when Tier-1 operators may also use channels opportunistically.
    pub phi: u8,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub osa: Osa,
    /// Total bandwidth in Hz. Informational only; capacities are expressed through `d_total`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_hz: Option<f64>,
}

fn one() -> u32 {
    1
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidParams(s.into()));
        if self.m == 0 {
            return bad("M must be at least 1");
        }
        if self.p > self.m {
            return bad("P must not exceed M");
        }
        if self.t_slots == 0 {
            return bad("T must be at least 1");
        }
        if !(self.d_total.is_finite() && self.d_total > 0.0) {
            return bad("D must be positive and finite");
        }
        if self.phi > 1 {
            return bad("phi must be 0 or 1");
        }
        for a in [self.alpha_l, self.alpha_u] {
            if !(0.0..=1.0).contains(&a) {
                return bad("interference parameters must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Capacity `D/M` of a single channel under licensed use.
    pub fn channel_capacity(&self) -> f64 {
        self.d_total / f64::from(self.m)
    }

    pub fn with_partition(&self, m: u32, p: u32) -> MarketParams {
        MarketParams { m, p, ..self.clone() }
    }
}

/// Candidate licensed and unlicensed operators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketScenario {
    pub licensed_candidates: Vec<OperatorProfile>,
    pub unlicensed_candidates: Vec<OperatorProfile>,
}

impl MarketScenario {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in self.licensed_candidates.iter().chain(&self.unlicensed_candidates) {
            p.validate()?;
            if !seen.insert(p.id) {
                return Err(Error::InvalidScenario(format!("operator id {} appears twice", p.id)));
            }
        }
        Ok(())
    }

    pub fn licensed_ids(&self) -> Vec<OperatorId> {
        let mut ids: Vec<_> = self.licensed_candidates.iter().map(|p| p.id).collect();
        ids.sort();
        ids
    }

    pub fn unlicensed_ids(&self) -> Vec<OperatorId> {
        let mut ids: Vec<_> = self.unlicensed_candidates.iter().map(|p| p.id).collect();
        ids.sort();
        ids
    }

    pub fn profile(&self, id: OperatorId) -> Option<&OperatorProfile> {
        self.licensed_candidates
            .iter()
            .chain(&self.unlicensed_candidates)
            .find(|p| p.id == id)
    }

    pub fn is_licensed(&self, id: OperatorId) -> bool {
        self.licensed_candidates.iter().any(|p| p.id == id)
    }

    pub fn operators(&self) -> impl Iterator<Item = &OperatorProfile> {
        self.licensed_candidates.iter().chain(&self.unlicensed_candidates)
    }

    pub fn len(&self) -> usize {
        self.licensed_candidates.len() + self.unlicensed_candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean of the candidates' mean demands, or 0 for an empty market.
    pub fn mean_demand(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.operators().map(|p| p.mu_theta).sum::<f64>() / self.len() as f64
    }
}

/// Moments of the per-slot demand served on a licensed channel,
/// `min(max(0, θ), D/M)`, and their epoch-level aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LicensedMoments {
    pub mu_x_lc_slot: f64,
    pub sigma_x_lc_slot: f64,
    pub mu_x_lc_epoch: f64,
    pub sigma_x_lc_epoch: f64,
    /// Covariance between the latent slot demand θ and the epoch licensed service.
    pub phi_k: f64,
    pub t_slots: u32,
}

/// Computes the licensed-service moments by quadrature of the clipped
/// Gaussian over `[0, D/M]` plus closed-form Gaussian tails.
///
/// All three integrals are evaluated in central form (around μ̃ and μ_θ),
/// which is algebraically identical to the raw-moment expressions but keeps
/// full precision when σ_θ is tiny relative to μ_θ.
pub fn licensed_served_moments(profile: &OperatorProfile, params: &MarketParams) -> Result<LicensedMoments> {
    profile.validate()?;
    let cap = params.channel_capacity();
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidParams("D/M must be positive".into()));
    }
    if params.t_slots == 0 {
        return Err(Error::InvalidParams("T must be at least 1".into()));
    }
    let (mu, sd) = (profile.mu_theta, profile.sigma_theta);
    let z_lo = (0.0 - mu) / sd;
    let z_hi = (cap - mu) / sd;
    let a = z_lo.max(-Z_LIMIT);
    let b = z_hi.min(Z_LIMIT);
    let p_below = normal_cdf(z_lo);
    let p_above = normal_sf(z_hi);
    let scale = cap.max(mu.abs() + sd);
    let abs_tol = 1e-16 * scale;

    // E[x̃] = ∫_0^c ϑ f + c·P[θ > c]
    let interior = integrate(|z| (mu + sd * z) * normal_pdf(z), a, b, abs_tol, QUAD_REL_TOL);
    let mean = (interior.value + cap * p_above).clamp(0.0, cap);

    // Var[x̃] = ∫_0^c (ϑ − μ̃)² f + μ̃²·P[θ < 0] + (c − μ̃)²·P[θ > c]
    let shift = mu - mean;
    let interior = integrate(
        |z| {
            let d = sd * z + shift;
            d * d * normal_pdf(z)
        },
        a,
        b,
        abs_tol * scale,
        QUAD_REL_TOL,
    );
    let var = interior.value + mean * mean * p_below + (cap - mean).powi(2) * p_above;
    let sigma_slot = var.max(0.0).sqrt();

    // Cov[θ, x̃] = ∫_0^c (ϑ − μ_θ)(ϑ − μ̃) f + μ̃·σ·pdf(z_lo) + (c − μ̃)·σ·pdf(z_hi)
    let interior = integrate(
        |z| sd * z * (sd * z + shift) * normal_pdf(z),
        a,
        b,
        abs_tol * scale,
        QUAD_REL_TOL,
    );
    let cov = interior.value + mean * sd * normal_pdf(z_lo) + (cap - mean) * sd * normal_pdf(z_hi);

    let t = f64::from(params.t_slots);
    Ok(LicensedMoments {
        mu_x_lc_slot: mean,
        sigma_x_lc_slot: sigma_slot,
        mu_x_lc_epoch: mean * t,
        sigma_x_lc_epoch: sigma_slot * t.sqrt(),
        phi_k: cov.max(0.0),
        t_slots: params.t_slots,
    })
}

/// Probability that the Gaussian epoch approximation of licensed service is
/// negative; small values indicate the approximation is sound.
pub fn prob_negative_served(moments: &LicensedMoments) -> f64 {
    let mu = moments.mu_x_lc_slot;
    let sd = moments.sigma_x_lc_slot;
    if mu == 0.0 {
        return 0.5;
    }
    if sd == 0.0 {
        return if mu > 0.0 { 0.0 } else { 1.0 };
    }
    let arg = mu * f64::from(moments.t_slots).sqrt() / (std::f64::consts::SQRT_2 * sd);
    0.5 * libm::erfc(arg)
}

/// Mean and covariance of (θ, R_lc, V) for one licensed operator together
/// with a cached lower-triangular factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSamplerParams {
    pub id: OperatorId,
    pub psi: [f64; 3],
    pub sigma: [[f64; 3]; 3],
    pub chol: [[f64; 3]; 3],
}

pub fn joint_sampler_params(
    profile: &OperatorProfile,
    params: &MarketParams,
    moments: &LicensedMoments,
) -> Result<JointSamplerParams> {
    if moments.t_slots != params.t_slots {
        return Err(Error::InvalidParams("moments were computed for a different lease duration".into()));
    }
    let mu_r = profile.revenue(moments.mu_x_lc_epoch);
    let sd_r = profile.revenue_sd(moments.mu_x_lc_epoch);
    let var_r = sd_r * sd_r;
    // The ratio φ_k/σ_X is 0/0 when licensed service is deterministic; its limit is 0.
    let demand_revenue = if moments.sigma_x_lc_epoch > 0.0 {
        profile.rho * sd_r / moments.sigma_x_lc_epoch * moments.phi_k
    } else {
        0.0
    };
    let demand_bid = profile.omega * demand_revenue;
    let revenue_bid = profile.omega * var_r;
    let sigma = [
        [profile.sigma_theta * profile.sigma_theta, demand_revenue, demand_bid],
        [demand_revenue, var_r, revenue_bid],
        [demand_bid, revenue_bid, var_r],
    ];
    let chol = factor_psd(&sigma).or_else(|_| {
        let trace = sigma[0][0] + sigma[1][1] + sigma[2][2];
        let mut jittered = sigma;
        for (i, row) in jittered.iter_mut().enumerate() {
            row[i] += PSD_JITTER * trace / 3.0;
        }
        factor_psd(&jittered)
    });
    match chol {
        Ok(chol) => Ok(JointSamplerParams {
            id: profile.id,
            psi: [profile.mu_theta, mu_r, mu_r],
            sigma,
            chol,
        }),
        Err(min_pivot) => Err(Error::IllConditioned { id: profile.id, min_eigenvalue: min_pivot }),
    }
}

/// Cholesky factorisation tolerant of positive semidefinite input: a pivot
/// within `1e-12·trace` of zero yields a zero column, provided the rest of
/// that column vanishes too. Returns the offending pivot on failure.
fn factor_psd(a: &[[f64; 3]; 3]) -> std::result::Result<[[f64; 3]; 3], f64> {
    let trace = a[0][0] + a[1][1] + a[2][2];
    let tol = 1e-12 * trace.abs();
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d > tol {
            l[j][j] = d.sqrt();
            for i in j + 1..3 {
                let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                l[i][j] = s / l[j][j];
            }
        } else if d >= -tol {
            for i in j + 1..3 {
                let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if s.abs() > tol.sqrt() * a[i][i].max(0.0).sqrt() + tol {
                    return Err(d.min(-s.abs()));
                }
            }
        } else {
            return Err(d);
        }
    }
    Ok(l)
}

/// One draw of (θ, R_lc, V).
pub fn sample_joint<R: Rng + ?Sized>(sampler: &JointSamplerParams, rng: &mut R) -> (f64, f64, f64) {
    let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let l = &sampler.chol;
    let psi = &sampler.psi;
    (
        psi[0] + l[0][0] * z[0],
        psi[1] + l[1][0] * z[0] + l[1][1] * z[1],
        psi[2] + l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
    )
}
