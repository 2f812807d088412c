use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use spectrum_partition::market::{joint_sampler_params, licensed_served_moments, sample_joint, JointSamplerParams};
use spectrum_partition::{MarketParams, OperatorId, OperatorProfile, Osa};
use statrs::distribution::{ContinuousCDF, Normal};

fn reference() -> (OperatorProfile, MarketParams) {
    let profile = OperatorProfile {
        id: OperatorId(3),
        mu_theta: 1.0,
        sigma_theta: 0.5,
        revenue_slope: 1.0,
        revenue_cv: 0.5,
        rho: 0.8,
        omega: 0.9,
        mer_fraction: 0.0,
    };
    let params =
        MarketParams { m: 1, p: 1, t_slots: 52, d_total: 1.0, phi: 1, alpha_l: 1.0, alpha_u: 1.0, osa: Osa::Overlay, bandwidth_hz: None };
    (profile, params)
}

fn sampler() -> JointSamplerParams {
    let (profile, params) = reference();
    let moments = licensed_served_moments(&profile, &params).unwrap();
    joint_sampler_params(&profile, &params, &moments).unwrap()
}

fn draws(s: &JointSamplerParams, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (a, b, c) = sample_joint(s, &mut rng);
            [a, b, c]
        })
        .collect()
}

#[test]
fn structure_and_eigenvalues() {
    let s = sampler();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(s.sigma[i][j], s.sigma[j][i]);
        }
    }
    assert_eq!(s.sigma[1][1], s.sigma[2][2]);
    assert_eq!(s.psi[1], s.psi[2]);
    let m = Matrix3::from_fn(|i, j| s.sigma[i][j]);
    let trace = m.trace();
    let eig = m.symmetric_eigenvalues();
    assert!(eig.iter().all(|&e| e >= -1e-9 * trace));
    // The cached factor reproduces the covariance.
    let l = Matrix3::from_fn(|i, j| s.chol[i][j]);
    let back = l * l.transpose();
    assert!((back - m).abs().max() <= 1e-10 * trace);
}

#[test]
fn empirical_covariance_matches() {
    let s = sampler();
    let n = 1_000_000;
    let x = draws(&s, n, 8);
    let nf = n as f64;
    let mut mean = [0.0; 3];
    for d in &x {
        for i in 0..3 {
            mean[i] += d[i] / nf;
        }
    }
    for i in 0..3 {
        for j in i..3 {
            let prods: Vec<f64> = x.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).collect();
            let c = prods.iter().sum::<f64>() / (nf - 1.0);
            let v = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (nf - 1.0);
            let se = (v / nf).sqrt();
            assert!((c - s.sigma[i][j]).abs() <= 4.0 * se, "entry ({i},{j}): {c} vs {} (se {se})", s.sigma[i][j]);
        }
        let se = (s.sigma[i][i] / nf).sqrt();
        assert!((mean[i] - s.psi[i]).abs() <= 4.0 * se);
    }
}

#[test]
fn demand_marginal_passes_ks() {
    let s = sampler();
    let n = 1_000_000;
    let mut theta: Vec<f64> = draws(&s, n, 21).iter().map(|d| d[0]).collect();
    theta.sort_by(f64::total_cmp);
    let dist = Normal::new(1.0, 0.5).unwrap();
    let nf = n as f64;
    let d = theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = dist.cdf(t);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic critical value at the 0.001 level.
    let critical = 1.949_5 / nf.sqrt();
    assert!(d < critical, "KS statistic {d} vs {critical}");
}

#[test]
fn revenue_regression_slope_on_demand() {
    let s = sampler();
    let n = 1_000_000;
    let x = draws(&s, n, 33);
    let nf = n as f64;
    let mt = x.iter().map(|d| d[0]).sum::<f64>() / nf;
    let mr = x.iter().map(|d| d[1]).sum::<f64>() / nf;
    let stt: f64 = x.iter().map(|d| (d[0] - mt).powi(2)).sum();
    let str_: f64 = x.iter().map(|d| (d[0] - mt) * (d[1] - mr)).sum();
    let slope = str_ / stt;
    let intercept = mr - slope * mt;
    let resid: f64 = x.iter().map(|d| (d[1] - intercept - slope * d[0]).powi(2)).sum::<f64>() / (nf - 2.0);
    let se = (resid / stt).sqrt();
    let expected = s.sigma[0][1] / s.sigma[0][0];
    assert!((slope - expected).abs() <= 4.0 * se, "slope {slope} vs {expected} (se {se})");
}

#[test]
fn identical_streams_identical_draws() {
    let s = sampler();
    assert_eq!(draws(&s, 100, 5), draws(&s, 100, 5));
    assert_ne!(draws(&s, 100, 5), draws(&s, 100, 6));
}
