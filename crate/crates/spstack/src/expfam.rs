//! Natural-exponential-family log densities and exact samplers for their
//! conjugate (Diaconis-Ylvisaker style) distributions.
//!
//! Three unit log-partition functions appear in the model: the Gaussian
//! member, the log-gamma member paired with Poisson responses, and the
//! logit-beta member paired with binomial responses. Sampling reduces to
//! gamma and beta variates; both reductions are carried out on the log
//! scale so boundary shapes below one stay finite.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Response family of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Binomial,
}

/// Family plus the per-observation trial counts `b`.
///
/// Poisson forces every trial count to one; binomial requires at least one
/// trial everywhere.
#[derive(Debug, Clone)]
pub struct FamilySpec {
    kind: Family,
    trials: Vec<u64>,
}

impl FamilySpec {
    pub fn poisson(n: usize) -> Self {
        Self {
            kind: Family::Poisson,
            trials: vec![1; n],
        }
    }

    pub fn binomial(trials: Vec<u64>) -> Result<Self> {
        if let Some(i) = trials.iter().position(|&m| m == 0) {
            return Err(Error::Parameter(format!(
                "binomial trial count must be >= 1, got 0 at observation {i}"
            )));
        }
        Ok(Self {
            kind: Family::Binomial,
            trials,
        })
    }

    pub fn kind(&self) -> Family {
        self.kind
    }

    pub fn trials(&self) -> &[u64] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Same family restricted to a subset of observations.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            kind: self.kind,
            trials: indices.iter().map(|&i| self.trials[i]).collect(),
        }
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Log density of the natural exponential family at `y` with natural
/// parameter `eta` and `trials` trials.
///
/// Poisson has mean `exp(eta)`; binomial is `Binomial(trials, ilogit(eta))`.
pub fn ef_log_density(y: u64, eta: f64, trials: u64, family: Family) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain(format!("natural parameter {eta} not finite")));
    }
    match family {
        Family::Poisson => {
            let yf = y as f64;
            Ok(yf * eta - eta.exp() - ln_gamma(yf + 1.0))
        }
        Family::Binomial => {
            if y > trials {
                return Err(Error::Domain(format!(
                    "binomial response {y} exceeds {trials} trials"
                )));
            }
            let (yf, mf) = (y as f64, trials as f64);
            let ln_choose = ln_gamma(mf + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(mf - yf + 1.0);
            Ok(ln_choose + yf * eta - mf * softplus(eta))
        }
    }
}

/// The conjugate-family member selecting the unit log-partition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiKind {
    /// `psi(t) = t^2 / 2`: Gaussian member.
    Gaussian,
    /// `psi(t) = exp(t)`: log-gamma member, conjugate to Poisson.
    LogGamma,
    /// `psi(t) = log(1 + exp(t))`: logit-beta member, conjugate to binomial.
    LogitBeta,
}

/// Parameters `(alpha, kappa)` of a conjugate density
/// proportional to `exp(alpha * eta - kappa * psi(eta))`.
#[derive(Debug, Clone, Copy)]
pub struct DyParams {
    alpha: f64,
    kappa: f64,
    psi: PsiKind,
}

impl DyParams {
    pub fn new(alpha: f64, kappa: f64, psi: PsiKind) -> Result<Self> {
        if !alpha.is_finite() || !kappa.is_finite() {
            return Err(Error::Parameter(format!(
                "non-finite conjugate parameters alpha={alpha}, kappa={kappa}"
            )));
        }
        if kappa <= 0.0 {
            return Err(Error::Parameter(format!("kappa must be positive, got {kappa}")));
        }
        match psi {
            PsiKind::LogGamma if alpha <= 0.0 => Err(Error::Parameter(format!(
                "log-gamma member requires alpha > 0, got {alpha}"
            ))),
            PsiKind::LogitBeta if alpha <= 0.0 || kappa - alpha <= 0.0 => {
                Err(Error::Parameter(format!(
                    "logit-beta member requires 0 < alpha < kappa, got alpha={alpha}, kappa={kappa}"
                )))
            }
            _ => Ok(Self { alpha, kappa, psi }),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn psi(&self) -> PsiKind {
        self.psi
    }
}

/// Log of a `Gamma(shape, rate = 1)` variate.
///
/// Shapes below one route through the boost identity
/// `log G_a = log G_{a+1} + log(U) / a`, keeping the draw finite where a
/// direct gamma draw could underflow to zero.
pub fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape");
        let u: f64 = rng.gen::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    } else {
        let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
        g.sample(rng).ln()
    }
}

/// Exact draw from the conjugate density.
///
/// Log-gamma returns `log G` with `G ~ Gamma(alpha, rate = kappa)`;
/// logit-beta returns `logit B` with `B ~ Beta(alpha, kappa - alpha)`,
/// generated as a difference of log-gamma draws; the Gaussian member is
/// `Normal(alpha / kappa, 1 / kappa)`.
pub fn dy_sample<R: Rng + ?Sized>(params: &DyParams, rng: &mut R) -> f64 {
    match params.psi {
        PsiKind::LogGamma => log_gamma_draw(params.alpha, rng) - params.kappa.ln(),
        PsiKind::LogitBeta => {
            let a = log_gamma_draw(params.alpha, rng);
            let b = log_gamma_draw(params.kappa - params.alpha, rng);
            a - b
        }
        PsiKind::Gaussian => {
            let n = Normal::new(params.alpha / params.kappa, (1.0 / params.kappa).sqrt())
                .expect("valid normal parameters");
            n.sample(rng)
        }
    }
}

/// Normalized log density of the conjugate distribution at `eta`.
pub fn dy_log_density(params: &DyParams, eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain(format!("evaluation point {eta} not finite")));
    }
    let (a, k) = (params.alpha, params.kappa);
    Ok(match params.psi {
        PsiKind::LogGamma => a * k.ln() - ln_gamma(a) + a * eta - k * eta.exp(),
        PsiKind::LogitBeta => a * eta - k * softplus(eta) - ln_beta(a, k - a),
        PsiKind::Gaussian => {
            let mean = a / k;
            let var = 1.0 / k;
            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (eta - mean).powi(2) / (2.0 * var)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
    use statrs::function::gamma::digamma;

    #[test]
    fn poisson_identity_rate_at_zero() {
        let lp = ef_log_density(0, 0.0, 1, Family::Poisson).unwrap();
        assert_abs_diff_eq!(lp, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn binomial_symmetric_case() {
        let lp = ef_log_density(1, 0.0, 2, Family::Binomial).unwrap();
        assert_abs_diff_eq!(lp, 0.5_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn poisson_hand_evaluation() {
        let lp = ef_log_density(3, 0.7, 1, Family::Poisson).unwrap();
        let expect = 3.0 * 0.7 - 0.7_f64.exp() - 6.0_f64.ln();
        assert_abs_diff_eq!(lp, expect, epsilon = 1e-14);
    }

    #[test]
    fn binomial_domain_errors() {
        assert!(matches!(
            ef_log_density(3, 0.0, 2, Family::Binomial),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ef_log_density(0, f64::NAN, 1, Family::Poisson),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn densities_sum_to_one() {
        // Poisson support truncated at cumulative mass 1 - 1e-12.
        for eta in [-1.0, 0.0, 1.3] {
            let mut total = 0.0;
            let mut y = 0u64;
            loop {
                let p = ef_log_density(y, eta, 1, Family::Poisson).unwrap().exp();
                total += p;
                if total > 1.0 - 1e-12 || y > 500 {
                    break;
                }
                y += 1;
            }
            assert!((total - 1.0).abs() < 1e-9, "poisson eta={eta}: {total}");
        }
        for (m, eta) in [(7u64, -0.4), (20, 0.9)] {
            let total: f64 = (0..=m)
                .map(|y| ef_log_density(y, eta, m, Family::Binomial).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "binomial m={m}: {total}");
        }
    }

    #[test]
    fn family_spec_invariants() {
        assert!(FamilySpec::binomial(vec![3, 0, 2]).is_err());
        let f = FamilySpec::poisson(3);
        assert_eq!(f.trials(), &[1, 1, 1]);
    }

    #[test]
    fn dy_params_invariants() {
        assert!(DyParams::new(2.0, 0.0, PsiKind::LogGamma).is_err());
        assert!(DyParams::new(-1.0, 1.0, PsiKind::LogGamma).is_err());
        assert!(DyParams::new(2.0, 2.0, PsiKind::LogitBeta).is_err());
        assert!(DyParams::new(1.0, 2.0, PsiKind::LogitBeta).is_ok());
    }

    /// Empirical mean of log-gamma draws vs the identity
    /// `E[log G] = digamma(alpha) - log(kappa)`.
    fn check_log_gamma_mean(alpha: f64, kappa: f64, seed: u64) {
        let params = DyParams::new(alpha, kappa, PsiKind::LogGamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| dy_sample(&params, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let expect = digamma(alpha) - kappa.ln();
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "alpha={alpha} kappa={kappa}: mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn log_gamma_mean_identity() {
        check_log_gamma_mean(2.0, 1.0, 11);
        check_log_gamma_mean(5.0, 3.0, 12);
        check_log_gamma_mean(0.5, 1.0, 13);
    }

    #[test]
    fn log_gamma_moments_via_exp() {
        // exp of the draws recovers the gamma's first two moments.
        let (alpha, kappa) = (2.5, 4.0);
        let params = DyParams::new(alpha, kappa, PsiKind::LogGamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| dy_sample(&params, &mut rng).exp()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (var / n as f64).sqrt();
        assert!((mean - alpha / kappa).abs() < 4.0 * se_mean);
        // SE of the sample variance via the fourth central moment.
        let m4 = draws.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - alpha / (kappa * kappa)).abs() < 4.0 * se_var);
    }

    /// Two-sided Kolmogorov-Smirnov p-value (asymptotic).
    fn ks_p_value(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = sorted.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            let f = cdf(x);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((f - lo).abs()).max((hi - f).abs());
        }
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            p += 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    fn check_logit_beta_ks(alpha: f64, kappa: f64, seed: u64) {
        let params = DyParams::new(alpha, kappa, PsiKind::LogitBeta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let eta = dy_sample(&params, &mut rng);
                1.0 / (1.0 + (-eta).exp())
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let beta = BetaDist::new(alpha, kappa - alpha).unwrap();
        let p = ks_p_value(&draws, |x| beta.cdf(x));
        assert!(p > 1e-3, "KS rejected: p={p} for alpha={alpha}, kappa={kappa}");
    }

    #[test]
    fn logit_beta_ks_uniform_case() {
        // Beta(1,1) is uniform.
        check_logit_beta_ks(1.0, 2.0, 31);
    }

    #[test]
    fn logit_beta_ks_skewed_cases() {
        check_logit_beta_ks(1.5, 2.5, 32);
        check_logit_beta_ks(3.0, 7.0, 33);
    }

    #[test]
    fn dy_log_density_trivial_points() {
        let lb = DyParams::new(1.0, 2.0, PsiKind::LogitBeta).unwrap();
        assert_abs_diff_eq!(dy_log_density(&lb, 0.0).unwrap(), 0.25_f64.ln(), epsilon = 1e-14);
        let lg = DyParams::new(1.0, 1.0, PsiKind::LogGamma).unwrap();
        assert_abs_diff_eq!(dy_log_density(&lg, 0.0).unwrap(), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn dy_log_density_integrates_to_one() {
        // Trapezoid quadrature over a wide grid.
        let params = DyParams::new(2.5, 4.0, PsiKind::LogGamma).unwrap();
        let (lo, hi, steps) = (-40.0, 8.0, 400_000);
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for i in 0..=steps {
            let eta = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            total += w * dy_log_density(&params, eta).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn density_matches_histogram_of_draws() {
        // Histogram density estimate from draws vs the analytic density,
        // sup-norm over the central 99% interval.
        let params = DyParams::new(3.0, 2.0, PsiKind::LogGamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 1_000_000;
        let mut draws: Vec<f64> = (0..n).map(|_| dy_sample(&params, &mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = draws[(n as f64 * 0.005) as usize];
        let hi = draws[(n as f64 * 0.995) as usize];
        let bins = 200;
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &d in &draws {
            if d >= lo && d < hi {
                counts[((d - lo) / width) as usize] += 1;
            }
        }
        let mut sup = 0.0f64;
        for (b, &c) in counts.iter().enumerate() {
            let mid = lo + (b as f64 + 0.5) * width;
            let est = c as f64 / (n as f64 * width);
            let truth = dy_log_density(&params, mid).unwrap().exp();
            sup = sup.max((est - truth).abs());
        }
        assert!(sup < 0.02, "sup-norm histogram error {sup}");
    }

    #[test]
    fn gaussian_member_density_and_draws() {
        let params = DyParams::new(3.0, 4.0, PsiKind::Gaussian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| dy_sample(&params, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.75).abs() < 4.0 * (0.25f64 / n as f64).sqrt());
        // Density at the mean equals the normal mode height.
        let at_mode = dy_log_density(&params, 0.75).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 0.25).ln();
        assert_abs_diff_eq!(at_mode, expect, epsilon = 1e-12);
    }
}
