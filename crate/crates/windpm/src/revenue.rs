//! Piecewise-affine future-revenue function and revenue-loss queries.
//!
//! A fully functioning turbine earns `r_t` (k$) during month `t`. The
//! revenue function `R(v)` is the total revenue earned over `[v, T]`,
//! extended by zero past the end of life `T` so that downtime windows that
//! straddle `T` are priced correctly. `R` is continuous, piecewise affine,
//! and non-increasing; a production stop of `w` months starting at `v`
//! costs `R(v) - R(v + w)`.

use crate::{Error, Result};

/// Monthly revenues `r_t >= 0` (k$) for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueCurve {
    monthly: Vec<f64>,
}

impl RevenueCurve {
    pub fn new(monthly: Vec<f64>) -> Result<Self> {
        if monthly.is_empty() {
            return Err(Error::Config("revenue curve must not be empty".into()));
        }
        if let Some(bad) = monthly.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!("monthly revenue must be finite and >= 0, got {bad}")));
        }
        Ok(Self { monthly })
    }

    /// Default seasonal curve: a raised-cosine year with the minimum of
    /// 15 k$ in February and the maximum of 30 k$ in September (month 1 is
    /// January), tiled over `life` months. The two half-waves span the
    /// 7 months February..September and the 5 months September..February.
    pub fn default_seasonal(life: u32) -> Self {
        let year: Vec<f64> = (1..=12)
            .map(|c: u32| {
                let k = (c + 10) % 12; // months after February
                if k <= 7 {
                    15.0 + 7.5 * (1.0 - (std::f64::consts::PI * k as f64 / 7.0).cos())
                } else {
                    let q = k - 7; // months after September
                    30.0 - 7.5 * (1.0 - (std::f64::consts::PI * q as f64 / 5.0).cos())
                }
            })
            .collect();
        let monthly = (0..life).map(|t| year[(t % 12) as usize]).collect();
        Self { monthly }
    }

    /// Tiles a 12-month pattern over `life` months.
    pub fn tiled(year: &[f64; 12], life: u32) -> Self {
        Self { monthly: (0..life).map(|t| year[(t % 12) as usize]).collect() }
    }

    pub fn life(&self) -> u32 {
        self.monthly.len() as u32
    }

    pub fn monthly(&self) -> &[f64] {
        &self.monthly
    }
}

/// The future-revenue function `R` on `[0, T + gamma_bar]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueFunction {
    rates: Vec<f64>,
    cumulative: Vec<f64>, // R at integer points 0..=T
    gamma_bar: f64,
}

/// Builds `R` from the monthly curve by backward recursion; `gamma_bar`
/// extends the zero tail so downtime windows may end past `T`.
pub fn build_revenue_function(curve: &RevenueCurve, gamma_bar: f64) -> Result<RevenueFunction> {
    if !(gamma_bar.is_finite() && gamma_bar >= 0.0) {
        return Err(Error::Config(format!("gamma_bar must be finite and >= 0, got {gamma_bar}")));
    }
    let t_end = curve.monthly.len();
    let mut cumulative = vec![0.0; t_end + 1];
    for v in (0..t_end).rev() {
        cumulative[v] = curve.monthly[v] + cumulative[v + 1];
    }
    Ok(RevenueFunction { rates: curve.monthly.clone(), cumulative, gamma_bar })
}

impl RevenueFunction {
    /// End of life `T` in months.
    pub fn life(&self) -> f64 {
        self.rates.len() as f64
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    /// `R(x)`: revenue earned over `[x, T]`; zero for `x >= T`.
    pub fn value(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0 && x.is_finite());
        let t_end = self.rates.len();
        if x >= t_end as f64 {
            return 0.0;
        }
        let v = x.floor() as usize;
        let lambda = x - v as f64;
        (1.0 - lambda) * self.rates[v] + self.cumulative[v + 1]
    }

    /// Revenue rate `r_{t}` of the month containing continuous time `x`.
    pub fn rate_at(&self, x: f64) -> f64 {
        let t_end = self.rates.len();
        if x >= t_end as f64 {
            return 0.0;
        }
        self.rates[x.floor() as usize]
    }

    /// `R(u) - R(u + w)`: revenue lost to a production stop of length `w`
    /// starting at `u`. Infallible companion of [`revenue_loss`] for hot
    /// paths whose arguments are within-domain by construction.
    pub fn loss(&self, u: f64, w: f64) -> f64 {
        self.value(u) - self.value(u + w)
    }
}

/// Checked revenue-loss query `R(u) - R(u + w)`.
pub fn revenue_loss(r: &RevenueFunction, u: f64, w: f64) -> Result<f64> {
    let t_end = r.life();
    if !(u.is_finite() && (0.0..=t_end).contains(&u)) {
        return Err(Error::Domain(format!("stop start {u} outside [0, {t_end}]")));
    }
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::Domain(format!("stop length {w} must be finite and >= 0")));
    }
    if u + w > t_end + r.gamma_bar + 1e-9 {
        return Err(Error::Domain(format!(
            "stop end {} outside [0, {}]",
            u + w,
            t_end + r.gamma_bar
        )));
    }
    Ok(r.loss(u, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(rate: f64, life: u32) -> RevenueFunction {
        let curve = RevenueCurve::new(vec![rate; life as usize]).unwrap();
        build_revenue_function(&curve, 1.0).unwrap()
    }

    #[test]
    fn empty_curve_is_rejected() {
        assert!(RevenueCurve::new(vec![]).is_err());
        assert!(RevenueCurve::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn integer_points_sum_remaining_months() {
        let r = constant(30.0, 12);
        assert_eq!(r.value(0.0), 360.0);
        assert_eq!(r.value(12.0), 0.0);
        assert_eq!(r.value(13.0), 0.0);
        for v in 0..=12u32 {
            assert_eq!(r.value(v as f64), 30.0 * (12 - v) as f64);
        }
    }

    #[test]
    fn affine_interpolation_between_integers() {
        let r = constant(30.0, 12);
        assert!((r.value(11.5) - 15.0).abs() < 1e-12);
        // Slope is -30 on each unit interval.
        for v in 0..12 {
            for lambda in [0.1, 0.25, 0.5, 0.9] {
                let x = v as f64 + lambda;
                let expected = r.value(v as f64) - 30.0 * lambda;
                assert!((r.value(x) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn loss_of_zero_window_is_zero() {
        let r = constant(25.0, 24);
        assert_eq!(revenue_loss(&r, 7.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_month_loss_at_constant_rate() {
        let r = constant(30.0, 24);
        for u in 0..23u32 {
            assert!((revenue_loss(&r, u as f64, 1.0).unwrap() - 30.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_additive_and_nonnegative() {
        let curve = RevenueCurve::default_seasonal(48);
        let r = build_revenue_function(&curve, 1.0).unwrap();
        for u in [0.0, 3.3, 17.75, 40.0] {
            for (w1, w2) in [(0.5, 0.25), (1.0, 2.0), (0.1, 5.9)] {
                let whole = r.loss(u, w1 + w2);
                let split = r.loss(u, w1) + r.loss(u + w1, w2);
                assert!((whole - split).abs() < 1e-10);
                assert!(whole >= 0.0);
            }
        }
    }

    #[test]
    fn domain_violations_are_reported() {
        let r = constant(30.0, 12);
        assert!(revenue_loss(&r, -1.0, 0.5).is_err());
        assert!(revenue_loss(&r, 13.0, 0.0).is_err());
        assert!(revenue_loss(&r, 12.5, 0.0).is_err());
        assert!(revenue_loss(&r, 12.0, 1.5).is_err());
        assert!(revenue_loss(&r, 3.0, -0.1).is_err());
    }

    #[test]
    fn default_seasonal_hits_the_declared_extremes() {
        let curve = RevenueCurve::default_seasonal(240);
        let m = curve.monthly();
        // Month 2 (February) is the minimum, month 9 (September) the maximum.
        assert_eq!(m[1], 15.0);
        assert_eq!(m[8], 30.0);
        for (i, &r) in m.iter().enumerate() {
            assert!((15.0..=30.0).contains(&r), "month {} rate {}", i + 1, r);
            assert_eq!(r, m[i % 12]);
        }
        // Year mean is the midpoint of the extremes.
        let mean: f64 = m[..12].iter().sum::<f64>() / 12.0;
        assert!((mean - 22.5).abs() < 1e-12);
    }

    #[test]
    fn pm_stop_losses_stay_in_the_seasonal_band() {
        let curve = RevenueCurve::default_seasonal(240);
        let r = build_revenue_function(&curve, 1.0).unwrap();
        let gamma_pm = 1.0 / 6.0;
        for t in 1..240u32 {
            let loss = r.loss(t as f64, gamma_pm);
            assert!(
                (2.5 - 1e-9..=5.0 + 1e-9).contains(&loss),
                "t={t} loss={loss}"
            );
        }
    }

    #[test]
    fn seasonal_function_is_nonincreasing_and_continuous() {
        let curve = RevenueCurve::default_seasonal(36);
        let r = build_revenue_function(&curve, 1.0).unwrap();
        let mut prev = r.value(0.0);
        let steps = 36 * 16 + 16;
        for k in 1..=steps {
            let x = k as f64 / 16.0;
            let cur = r.value(x);
            assert!(cur <= prev + 1e-12);
            assert!((prev - cur) <= 30.0 / 16.0 + 1e-9, "jump at {x}");
            prev = cur;
        }
    }
}
