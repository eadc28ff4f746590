use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stats::log_two_cosh;

use super::field::CovarianceProfile;

type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied terminal acting on the scaled increments
/// `(root, level 1, ..., level depth)` of a leaf path.
#[derive(Clone)]
pub struct CustomTerminal {
    name: String,
    smooth: bool,
    f: TerminalFn,
}

impl CustomTerminal {
    pub fn new<F>(name: impl Into<String>, smooth: bool, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        CustomTerminal {
            name: name.into(),
            smooth,
            f: Arc::new(f),
        }
    }
}

/// The random variable `X_r` evaluated at a leaf. Every built-in variant
/// depends on the path only through the field value `h` (the sum of the
/// increments).
#[derive(Clone)]
pub enum Terminal {
    /// `c`
    Constant(f64),
    /// `a h`
    Field(f64),
    /// `log 2cosh h`
    LogTwoCosh,
    /// `c h^2`
    Quadratic(f64),
    /// `log(1 + e^h)`
    SoftPlus,
    /// `|h|`
    Abs,
    Custom(CustomTerminal),
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Constant(c) => write!(f, "Constant({c})"),
            Terminal::Field(a) => write!(f, "Field({a})"),
            Terminal::LogTwoCosh => write!(f, "LogTwoCosh"),
            Terminal::Quadratic(c) => write!(f, "Quadratic({c})"),
            Terminal::SoftPlus => write!(f, "SoftPlus"),
            Terminal::Abs => write!(f, "Abs"),
            Terminal::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl Terminal {
    pub fn name(&self) -> String {
        match self {
            Terminal::Constant(c) => format!("constant:{c}"),
            Terminal::Field(a) => format!("field:{a}"),
            Terminal::LogTwoCosh => "log2cosh".into(),
            Terminal::Quadratic(c) => format!("quadratic:{c}"),
            Terminal::SoftPlus => "softplus".into(),
            Terminal::Abs => "abs".into(),
            Terminal::Custom(c) => c.name.clone(),
        }
    }

    /// Parses the names produced by [`Terminal::name`] (custom terminals excluded).
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad terminal argument in {s:?}")))
            })
        };
        Ok(match head.trim() {
            "constant" => Terminal::Constant(num(0.0)?),
            "field" => Terminal::Field(num(1.0)?),
            "log2cosh" => Terminal::LogTwoCosh,
            "quadratic" => Terminal::Quadratic(num(0.1)?),
            "softplus" => Terminal::SoftPlus,
            "abs" => Terminal::Abs,
            _ => return Err(Error::Config(format!("unknown terminal {s:?}"))),
        })
    }

    /// True when the value depends on the increments only through their sum.
    pub fn is_sum_only(&self) -> bool {
        !matches!(self, Terminal::Custom(_))
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            Terminal::Abs => false,
            Terminal::Custom(c) => c.smooth,
            _ => true,
        }
    }

    /// Value as a function of the field value `h`. Custom terminals receive
    /// the single-element slice `[h]`.
    #[inline]
    pub fn eval_sum(&self, h: f64) -> f64 {
        match self {
            Terminal::Constant(c) => *c,
            Terminal::Field(a) => a * h,
            Terminal::LogTwoCosh => log_two_cosh(h),
            Terminal::Quadratic(c) => c * h * h,
            Terminal::SoftPlus => {
                if h > 0.0 {
                    h + (-h).exp().ln_1p()
                } else {
                    h.exp().ln_1p()
                }
            }
            Terminal::Abs => h.abs(),
            Terminal::Custom(c) => (c.f)(&[h]),
        }
    }

    /// Value at a leaf given its scaled increments, root first.
    #[inline]
    pub fn eval(&self, increments: &[f64]) -> f64 {
        match self {
            Terminal::Custom(c) => (c.f)(increments),
            t => t.eval_sum(increments.iter().sum()),
        }
    }

    /// Rejects terminals with `E exp(zeta_max X_r) = inf` where this can be
    /// decided analytically.
    pub fn check_integrable(&self, zeta: &[f64], profile: &CovarianceProfile) -> Result<()> {
        if let Terminal::Quadratic(c) = self {
            let z = zeta.last().copied().unwrap_or(1.0);
            let v = profile.total_variance();
            if *c > 0.0 && 2.0 * z * c * v >= 1.0 {
                return Err(Error::DivergentTerminal(format!(
                    "E exp({z} * {c} h^2) is infinite for Var h = {v}"
                )));
            }
        }
        Ok(())
    }

    /// The same terminal on a tree from which levels were removed: `kept`
    /// lists, for each remaining level `1..`, its original level.
    pub fn reindexed(&self, kept: &[usize], original_depth: usize) -> Terminal {
        match self {
            Terminal::Custom(c) => {
                let inner = c.f.clone();
                let kept = kept.to_vec();
                Terminal::Custom(CustomTerminal {
                    name: c.name.clone(),
                    smooth: c.smooth,
                    f: Arc::new(move |incr: &[f64]| {
                        let mut full = vec![0.0; original_depth + 1];
                        full[0] = incr[0];
                        for (i, &l) in kept.iter().enumerate() {
                            full[l] = incr[i + 1];
                        }
                        inner(&full)
                    }),
                })
            }
            t => t.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in [
            Terminal::Constant(1.5),
            Terminal::Field(0.5),
            Terminal::LogTwoCosh,
            Terminal::Quadratic(0.2),
            Terminal::SoftPlus,
            Terminal::Abs,
        ] {
            let back = Terminal::parse(&t.name()).unwrap();
            assert_eq!(back.name(), t.name());
        }
        assert!(Terminal::parse("bogus").is_err());
    }

    #[test]
    fn softplus_stable() {
        let t = Terminal::SoftPlus;
        assert!((t.eval_sum(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((t.eval_sum(800.0) - 800.0).abs() < 1e-12);
        assert!(t.eval_sum(-800.0) >= 0.0);
    }

    #[test]
    fn quadratic_divergence() {
        let p = CovarianceProfile::new(vec![0.0, 1.0]).unwrap();
        assert!(Terminal::Quadratic(0.4).check_integrable(&[0.5], &p).is_ok());
        assert!(matches!(
            Terminal::Quadratic(1.0).check_integrable(&[0.5], &p),
            Err(Error::DivergentTerminal(_))
        ));
    }

    #[test]
    fn reindexed_custom_places_zeros() {
        let t = Terminal::Custom(CustomTerminal::new("w", true, |x: &[f64]| {
            x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
        }));
        let r = t.reindexed(&[1, 3], 3);
        // full = (1, 2, 0, 3) -> 1 + 4 + 0 + 12
        assert_eq!(r.eval(&[1.0, 2.0, 3.0]), 17.0);
    }
}
