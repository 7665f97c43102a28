//! Floating-point helpers shared by every module.
//!
//! All transcendental functions go through `libm` so results do not depend on
//! the platform math library.

use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `n * ln(x)` with the convention `0 * ln(0) = 0`.
#[inline]
pub fn xlny(n: f64, x: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * ln(x)
    }
}

/// Bernoulli Shannon entropy in nats, `0 ln 0 = 0`.
pub fn bernoulli_entropy(y: f64) -> f64 {
    -xlny(y, y) - xlny(1.0 - y, 1.0 - y)
}

/// `ln Σ exp(v_i)`, stable under max-subtraction. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| exp(v - max)).sum();
    max + ln(sum)
}

/// `ln Σ exp(a_i + b_i)` without allocating.
pub fn log_sum_exp_pair(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut max = f64::NEG_INFINITY;
    for (&x, &y) in a.iter().zip(b) {
        let s = add_ext(x, y);
        if s > max {
            max = s;
        }
    }
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = a.iter().zip(b).map(|(&x, &y)| exp(add_ext(x, y) - max)).sum();
    max + ln(sum)
}

/// Addition where `-inf` absorbs everything (zero mass stays zero mass).
#[inline]
pub fn add_ext(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a + b
    }
}

/// Natural log of the binomial coefficient `C(n, k)`.
///
/// Exact integer arithmetic for `n <= 60`, `lgamma` beyond.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if n <= 60 {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * u128::from(n - i) / u128::from(i + 1);
        }
        ln(c as f64)
    } else {
        let nf = n as f64;
        let kf = k as f64;
        libm::lgamma(nf + 1.0) - libm::lgamma(kf + 1.0) - libm::lgamma(nf - kf + 1.0)
    }
}

/// Uniform grid of `points` values on `[lo, hi]`, optionally excluding the
/// endpoints (open grid with `points` interior nodes).
pub fn grid(lo: f64, hi: f64, points: usize, open: bool) -> Vec<f64> {
    if points == 0 {
        return Vec::new();
    }
    if open {
        let step = (hi - lo) / (points + 1) as f64;
        (1..=points).map(|i| lo + step * i as f64).collect()
    } else if points == 1 {
        alloc::vec![lo]
    } else {
        let step = (hi - lo) / (points - 1) as f64;
        (0..points)
            .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
            .collect()
    }
}

pub(crate) mod ext_float {
    //! Serde adapter writing non-finite floats as the strings `"inf"`,
    //! `"-inf"` so JSON stays valid.
    use alloc::vec::Vec;
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v == f64::INFINITY {
            Repr::Tag("inf".into())
        } else if v == f64::NEG_INFINITY {
            Repr::Tag("-inf".into())
        } else {
            Repr::Num(v)
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Tag(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Tag(other) => Err(E::custom(alloc::format!("bad float tag `{other}`"))),
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| to_repr(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let raw: Vec<Repr> = Vec::deserialize(d)?;
            raw.into_iter().map(from_repr::<D::Error>).collect()
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            struct Row<'a>(&'a [f64]);
            impl Serialize for Row<'_> {
                fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                    super::vec::serialize(self.0, s)
                }
            }
            s.collect_seq(m.iter().map(|r| Row(r)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let raw: Vec<Vec<Repr>> = Vec::deserialize(d)?;
            raw.into_iter()
                .map(|row| row.into_iter().map(from_repr::<D::Error>).collect())
                .collect()
        }
    }
}
