//! ρ(α) = E_q[Σ A(e_i)^α], its infimum over [0,1], the tail exponent κ,
//! and the recurrence/transience classification built from them.

use crate::error::{Error, Result};
use crate::mark_law::{Atom, MarkLaw, TOL_CRIT};
use crate::rng::stream_rng;
use crate::stats::Estimate;
use serde::{Deserialize, Serialize};

pub const DEFAULT_T_MAX: f64 = 64.0;
/// Upper end of the search when ρ is still increasing below 1 at t_max.
const T_LIMIT: f64 = 1e6;
const ARG_TOL: f64 = 1e-12;

pub fn rho(law: &MarkLaw, alpha: f64) -> f64 {
    law.rho(alpha)
}

pub fn rho_prime(law: &MarkLaw, alpha: f64) -> f64 {
    law.rho_prime(alpha)
}

fn finite(law: &MarkLaw, t: f64) -> Result<f64> {
    let v = law.rho(t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(t))
    }
}

/// Minimizer of the convex ρ on [a, b] by bisection on the sign of ρ'.
/// A non-negative slope at `a` returns `a` (so a constant ρ gives `a`).
fn argmin(law: &MarkLaw, a: f64, b: f64) -> f64 {
    if law.rho_prime(a) >= 0.0 {
        return a;
    }
    if law.rho_prime(b) <= 0.0 {
        return b;
    }
    let (mut lo, mut hi) = (a, b);
    while hi - lo > ARG_TOL * (1.0 + lo.abs()) {
        let mid = 0.5 * (lo + hi);
        if law.rho_prime(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of ρ = 1 in [lo, hi], given that ρ - 1 has opposite signs there.
fn crossing(law: &MarkLaw, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = law.rho(lo) > 1.0;
    while hi - lo > ARG_TOL * (1.0 + lo.abs()) {
        let mid = 0.5 * (lo + hi);
        if (law.rho(mid) > 1.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// p = min over [0,1] of ρ, with its argmin (0 on ties).
pub fn infimum_rho(law: &MarkLaw) -> Result<(f64, f64)> {
    for t in [0.0, 0.5, 1.0] {
        finite(law, t)?;
    }
    let a = argmin(law, 0.0, 1.0);
    Ok((law.rho(a), a))
}

/// The tail exponent κ.
///
/// When ρ(1) > 1 it is the first point after 1 where ρ comes down to 1, and
/// 1 if it never does. When ρ(1) ≤ 1 it is the point where ρ climbs back
/// above 1, and +∞ when ρ stays at or below 1 (certified by a non-positive
/// slope at the end of the search window).
pub fn kappa(law: &MarkLaw) -> Result<f64> {
    kappa_with(law, DEFAULT_T_MAX)
}

pub fn kappa_with(law: &MarkLaw, t_max: f64) -> Result<f64> {
    let r1 = finite(law, 1.0)?;
    let d1 = law.rho_prime(1.0);
    let mut t_max = t_max.max(2.0);
    finite(law, t_max)?;

    if r1 > 1.0 + TOL_CRIT {
        let m = argmin(law, 1.0, t_max);
        if law.rho(m) < 1.0 {
            return Ok(crossing(law, 1.0, m));
        }
        return Ok(1.0);
    }
    if (r1 - 1.0).abs() <= TOL_CRIT && d1 > TOL_CRIT {
        return Ok(1.0);
    }
    loop {
        if law.rho(t_max) > 1.0 {
            let m = argmin(law, 1.0, t_max);
            return Ok(crossing(law, m.max(1.0), t_max));
        }
        if law.rho_prime(t_max) <= 0.0 {
            return Ok(f64::INFINITY);
        }
        if (r1 - 1.0).abs() <= TOL_CRIT && d1.abs() <= TOL_CRIT {
            // Flat at 1 but not constant: strictly above 1 right after t = 1.
            if law.rho(t_max) > 1.0 + TOL_CRIT {
                return Ok(1.0);
            }
        }
        if t_max >= T_LIMIT {
            return Err(Error::Inconclusive(format!(
                "rho still increasing below 1 at t = {t_max}"
            )));
        }
        t_max *= 2.0;
        finite(law, t_max)?;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    PositiveRecurrent,
    #[serde(rename = "CriticalNull_NegDrift")]
    CriticalNullNegDrift,
    #[serde(rename = "CriticalNull_ZeroDrift")]
    CriticalNullZeroDrift,
    #[serde(rename = "CriticalPositive_PosDrift")]
    CriticalPositivePosDrift,
    Transient,
    Inconclusive,
}

impl Classification {
    pub fn is_critical(&self) -> bool {
        matches!(
            self,
            Classification::CriticalNullNegDrift
                | Classification::CriticalNullZeroDrift
                | Classification::CriticalPositivePosDrift
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub rho_one: f64,
    pub rho_prime_one: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Method {
    Exact,
    MonteCarlo { draws: usize, std_errors: StdErrors },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub rho_one: f64,
    pub rho_prime_one: f64,
    pub p: f64,
    pub alpha_star: f64,
    #[serde(with = "extended_real")]
    pub kappa: f64,
    pub classification: Classification,
    /// ΣA ≡ 1: |X_n| is then a simple unbiased walk away from the root.
    pub degenerate_unbiased: bool,
    /// E[N^(κ+1)] < ∞; automatic for bounded or Poisson offspring counts.
    pub h2_moment: bool,
    /// α ρ'(α)/ρ(α) < log ρ(α) at α = alpha_star.
    pub h2_biggins: bool,
    pub method: Method,
}

/// Serializes +∞ as the string "+inf" so the value survives JSON.
pub mod extended_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("+inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "+inf" || t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number '{t}'"))),
        }
    }
}

fn label(p: f64, rho_prime_one: f64) -> Classification {
    if p > 1.0 + TOL_CRIT {
        Classification::Transient
    } else if p < 1.0 - TOL_CRIT {
        Classification::PositiveRecurrent
    } else if rho_prime_one < -TOL_CRIT {
        Classification::CriticalNullNegDrift
    } else if rho_prime_one > TOL_CRIT {
        Classification::CriticalPositivePosDrift
    } else {
        Classification::CriticalNullZeroDrift
    }
}

/// Non-degeneracy condition for the cascade limit at `alpha`.
fn cascade_nondegenerate(law: &MarkLaw, alpha: f64) -> bool {
    let r = law.rho(alpha);
    alpha * law.rho_prime(alpha) / r < r.ln()
}

/// Classifies the walk's regime from exact evaluations of ρ.
pub fn classify(law: &MarkLaw) -> Result<RegimeReport> {
    let (p, alpha_star) = infimum_rho(law)?;
    let rho_one = law.rho(1.0);
    let rho_prime_one = law.rho_prime(1.0);
    Ok(RegimeReport {
        rho_one,
        rho_prime_one,
        p,
        alpha_star,
        kappa: kappa(law)?,
        classification: label(p, rho_prime_one),
        degenerate_unbiased: law.sum_marks_identically_one(),
        h2_moment: true,
        h2_biggins: cascade_nondegenerate(law, alpha_star),
        method: Method::Exact,
    })
}

/// Classification from `draws` sampled broods; the empirical law stands in
/// for q, and any decision within 3 standard errors of a boundary is
/// reported as inconclusive.
pub fn classify_sampled(law: &MarkLaw, draws: usize, seed: u64) -> Result<RegimeReport> {
    if draws < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: draws,
        });
    }
    let mut rng = stream_rng(seed, 0);
    let w = 1.0 / draws as f64;
    let atoms: Vec<Atom> = (0..draws)
        .map(|_| Atom::new(w, law.sample(&mut rng).marks))
        .collect();
    let emp = MarkLaw::finite_unchecked(atoms);
    let (p, alpha_star) = infimum_rho(&emp)?;
    let per_draw = |f: &dyn Fn(f64) -> f64| -> Estimate {
        let xs: Vec<f64> = emp
            .atoms()
            .unwrap()
            .iter()
            .map(|a| a.marks.iter().map(|&m| f(m)).sum())
            .collect();
        Estimate::from_samples(&xs)
    };
    let r1 = per_draw(&|m| m);
    let d1 = per_draw(&|m| m * m.ln());
    let pe = per_draw(&|m| m.powf(alpha_star));
    let se = StdErrors {
        rho_one: r1.se,
        rho_prime_one: d1.se,
        p: pe.se,
    };

    let classification = if p > 1.0 + 3.0 * se.p {
        Classification::Transient
    } else if p < 1.0 - 3.0 * se.p {
        Classification::PositiveRecurrent
    } else {
        Classification::Inconclusive
    };
    let kappa = match kappa(&emp) {
        Ok(k) => k,
        Err(Error::Inconclusive(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(RegimeReport {
        rho_one: r1.mean,
        rho_prime_one: d1.mean,
        p,
        alpha_star,
        kappa,
        classification,
        degenerate_unbiased: emp.sum_marks_identically_one(),
        h2_moment: true,
        h2_biggins: cascade_nondegenerate(&emp, alpha_star),
        method: Method::MonteCarlo {
            draws,
            std_errors: se,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mark_law::canonical::*;
    use proptest::prelude::*;

    #[test]
    fn rho_closed_forms() {
        let b = binary_half();
        assert_eq!(rho(&b, 0.0), 2.0);
        assert_eq!(rho(&b, 1.0), 1.0);
        assert_eq!(rho(&b, 2.0), 0.5);
        assert!((rho_prime(&b, 1.0) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(rho_prime(&binary_one(), 0.7), 0.0);
        assert!((rho_prime(&ternary_half(), 1.0) + 1.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn infimum_examples() {
        assert_eq!(infimum_rho(&binary_half()).unwrap(), (1.0, 1.0));
        assert_eq!(infimum_rho(&binary_one()).unwrap(), (2.0, 0.0));
        assert_eq!(infimum_rho(&binary_quarter()).unwrap(), (0.5, 1.0));
    }

    #[test]
    fn interior_infimum() {
        // ρ(t) = (4^-t + 2^t)/2: minimum where 2·4^-t = 2^t, i.e. t = 1/3.
        let law = MarkLaw::finite(vec![Atom::new(0.5, [0.25]), Atom::new(0.5, [2.0])]).unwrap();
        let (p, a) = infimum_rho(&law).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-10);
        let exact = 0.5 * (0.25f64.powf(1.0 / 3.0) + 2f64.powf(1.0 / 3.0));
        assert!((p - exact).abs() < 1e-12);
    }

    #[test]
    fn kappa_examples() {
        let k = kappa(&ternary_half()).unwrap();
        assert!((k - 3f64.ln() / 2f64.ln()).abs() < 1e-9);
        assert_eq!(kappa(&binary_half()).unwrap(), f64::INFINITY);
        assert_eq!(kappa(&binary_one()).unwrap(), 1.0);
        assert_eq!(kappa(&unary()).unwrap(), f64::INFINITY);
        assert_eq!(kappa(&two_atom_critical()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kappa_up_crossing() {
        let law = MarkLaw::finite(vec![
            Atom::new(0.5, [0.2, 0.2, 0.2, 0.2]),
            Atom::new(0.5, [0.4]),
        ])
        .unwrap();
        // ρ(1) = 0.5·0.8 + 0.5·0.4 = 0.6 < 1, ρ decreasing: κ = ∞.
        assert_eq!(kappa(&law).unwrap(), f64::INFINITY);
        let law = MarkLaw::finite(vec![Atom::new(0.9, [0.5]), Atom::new(0.1, [5.5])]).unwrap();
        // ρ(1) = 0.45 + 0.55 = 1, ρ'(1) = 0.45 ln 0.5 + 0.55 ln 5.5 > 0 → κ = 1.
        assert_eq!(kappa(&law).unwrap(), 1.0);
        let law =
            MarkLaw::finite(vec![Atom::new(0.98, [0.5, 0.5]), Atom::new(0.02, [1.5])]).unwrap();
        // ρ(1) = 0.98 + 0.03 = 1.01 > 1, dips below 1 then climbs again.
        let k = kappa(&law).unwrap();
        assert!(k > 1.0 && k < 2.0);
        assert!((law.rho(k) - 1.0).abs() < 1e-9);
        assert!(law.rho_prime(k) < 0.0);
        let a = 6.0 / 19.0;
        let law =
            MarkLaw::finite(vec![Atom::new(0.95, [a, a, a]), Atom::new(0.05, [2.0])]).unwrap();
        // ρ(1) = 0.9 + 0.1 = 1, ρ'(1) = 0.9 ln a + 0.1 ln 2 < 0, and ρ(t) → ∞.
        assert!(law.rho_prime(1.0) < 0.0);
        let k = kappa(&law).unwrap();
        assert!(k > 1.0 && k.is_finite());
        assert!((law.rho(k) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn classify_examples() {
        let r = classify(&binary_half()).unwrap();
        assert_eq!(r.classification, Classification::CriticalNullNegDrift);
        assert_eq!(r.kappa, f64::INFINITY);
        assert!(r.degenerate_unbiased);
        assert_eq!(
            classify(&binary_one()).unwrap().classification,
            Classification::Transient
        );
        assert_eq!(
            classify(&binary_quarter()).unwrap().classification,
            Classification::PositiveRecurrent
        );
        let u = classify(&unary()).unwrap();
        assert_eq!(u.classification, Classification::CriticalNullZeroDrift);
        assert!(u.degenerate_unbiased);
        let t = classify(&two_atom_critical()).unwrap();
        assert_eq!(t.classification, Classification::CriticalNullNegDrift);
        assert!(!t.degenerate_unbiased);
    }

    #[test]
    fn report_json_uses_plus_inf() {
        let r = classify(&binary_half()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"kappa\":\"+inf\""));
        assert!(s.contains("CriticalNull_NegDrift"));
        let back: RegimeReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sampled_classification_agrees_away_from_boundary() {
        let r = classify_sampled(&binary_one(), 1000, 3).unwrap();
        assert_eq!(r.classification, Classification::Transient);
        let r = classify_sampled(&two_atom_critical(), 5000, 3).unwrap();
        assert!(matches!(r.method, Method::MonteCarlo { draws: 5000, .. }));
        assert!((r.rho_one - 1.0).abs() <= 4.0 * 0.5 / (5000f64).sqrt());
    }

    fn law_strategy() -> impl Strategy<Value = MarkLaw> {
        prop::collection::vec(
            (0.05f64..1.0, prop::collection::vec(0.05f64..3.0, 0..4)),
            1..4,
        )
        .prop_map(|atoms| {
            let total: f64 = atoms.iter().map(|a| a.0).sum();
            let atoms = atoms
                .into_iter()
                .map(|(p, m)| Atom::new(p / total, m))
                .collect();
            MarkLaw::finite_unchecked(atoms)
        })
    }

    proptest! {
        #[test]
        fn rho_is_convex(law in law_strategy()) {
            let k = 40;
            for i in 0..k {
                let (a, b) = (2.0 * i as f64 / k as f64, 2.0 * (i + 1) as f64 / k as f64);
                let mid = law.rho(0.5 * (a + b));
                prop_assert!(mid <= 0.5 * (law.rho(a) + law.rho(b)) + 1e-9);
            }
        }

        #[test]
        fn derivative_matches_finite_difference(law in law_strategy(), alpha in 0.1f64..2.0) {
            let h = 1e-5;
            let fd = (law.rho(alpha + h) - law.rho(alpha - h)) / (2.0 * h);
            let scale = 1.0 + law.rho(alpha + 1.0).abs() + law.rho(0.0);
            prop_assert!((law.rho_prime(alpha) - fd).abs() <= 1e-6 * scale);
        }

        #[test]
        fn infimum_bounded_by_endpoints(law in law_strategy()) {
            let (p, a) = infimum_rho(&law).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(p <= law.rho(0.0) + 1e-12 && p <= law.rho(1.0) + 1e-12);
        }

        #[test]
        fn kappa_scales_under_powers(theta in 0.3f64..3.0, c in 0.15f64..0.45) {
            // Three children of mark c: κ solves 3 c^t = 1 when 3c > 1.
            let base = MarkLaw::deterministic([c, c, 0.6]).unwrap();
            let powered = MarkLaw::deterministic([c.powf(theta), c.powf(theta), 0.6f64.powf(theta)]).unwrap();
            let (k0, k1) = (kappa(&base).unwrap(), kappa(&powered).unwrap());
            if k0.is_finite() && k1.is_finite() && k0 > 1.0 && k1 > 1.0 {
                prop_assert!((k1 - k0 / theta).abs() <= 1e-8 * (1.0 + k0));
            }
        }
    }
}
