//! Ansatz-space descriptors, dimensions and variation constants.
//!
//! Canonical string forms:
//!
//! | family | example |
//! |---|---|
//! | full product space | `V(d=10,p=6)` |
//! | TT-rank-capped product space | `T(r=6;V(d=8,p=3))` |
//! | homogeneous space | `W(d=8,g=2)` |
//! | block-capped homogeneous space | `B(rho=4;W(d=8,g=2))` |
//! | polynomials of degree ≤ g | `S(d=6,g=7)` |
//! | block-capped direct sum | `S(d=6,g=7,rho=1)` |
//! | augmented block-capped sum | `S(d=10,g=5,rho=3,aug)` |
//!
//! Wherever a degree `g` is present the dictionary size is `p = g + 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceDescriptor {
    V {
        d: usize,
        p: usize,
    },
    T {
        r: usize,
        d: usize,
        p: usize,
    },
    W {
        d: usize,
        g: usize,
    },
    B {
        rho: usize,
        d: usize,
        g: usize,
    },
    S {
        d: usize,
        g: usize,
    },
    SRho {
        d: usize,
        g: usize,
        rho: usize,
        aug: bool,
    },
}

impl SpaceDescriptor {
    pub fn d(&self) -> usize {
        match *self {
            Self::V { d, .. }
            | Self::T { d, .. }
            | Self::W { d, .. }
            | Self::B { d, .. }
            | Self::S { d, .. }
            | Self::SRho { d, .. } => d,
        }
    }

    pub fn p(&self) -> usize {
        match *self {
            Self::V { p, .. } | Self::T { p, .. } => p,
            Self::W { g, .. } | Self::B { g, .. } | Self::S { g, .. } | Self::SRho { g, .. } => {
                g + 1
            }
        }
    }

    pub fn g(&self) -> Option<usize> {
        match *self {
            Self::V { .. } | Self::T { .. } => None,
            Self::W { g, .. } | Self::B { g, .. } | Self::S { g, .. } | Self::SRho { g, .. } => {
                Some(g)
            }
        }
    }

    pub fn validate(self) -> Result<Self> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::InvalidArgument(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        positive("d", self.d())?;
        positive("p", self.p())?;
        match self {
            Self::T { r, .. } => positive("r", r)?,
            Self::B { rho, .. } | Self::SRho { rho, .. } => positive("rho", rho)?,
            _ => {}
        }
        Ok(self)
    }
}

impl fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::V { d, p } => write!(f, "V(d={d},p={p})"),
            Self::T { r, d, p } => write!(f, "T(r={r};V(d={d},p={p}))"),
            Self::W { d, g } => write!(f, "W(d={d},g={g})"),
            Self::B { rho, d, g } => write!(f, "B(rho={rho};W(d={d},g={g}))"),
            Self::S { d, g } => write!(f, "S(d={d},g={g})"),
            Self::SRho { d, g, rho, aug } => {
                write!(
                    f,
                    "S(d={d},g={g},rho={rho}{})",
                    if aug { ",aug" } else { "" }
                )
            }
        }
    }
}

/// Parses `key=value` lists; bare words are returned as flags.
fn parse_args(body: &str) -> std::result::Result<(Vec<(String, usize)>, Vec<String>), String> {
    let mut kv = Vec::new();
    let mut flags = Vec::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err("empty argument".into());
        }
        match part.split_once('=') {
            Some((k, v)) => {
                let v = v
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| format!("{v:?} is not a non-negative integer"))?;
                let k = k.trim().to_string();
                if kv.iter().any(|(name, _)| *name == k) {
                    return Err(format!("duplicate key {k}"));
                }
                kv.push((k, v));
            }
            None => flags.push(part.to_string()),
        }
    }
    Ok((kv, flags))
}

fn take(kv: &mut Vec<(String, usize)>, key: &str) -> std::result::Result<usize, String> {
    let pos = kv
        .iter()
        .position(|(k, _)| k == key)
        .ok_or_else(|| format!("missing {key}"))?;
    Ok(kv.remove(pos).1)
}

/// Splits `NAME(inner)` and returns `(NAME, inner)`.
fn call(s: &str) -> std::result::Result<(&str, &str), String> {
    let open = s.find('(').ok_or("expected '('")?;
    if !s.ends_with(')') {
        return Err("expected trailing ')'".into());
    }
    Ok((s[..open].trim(), &s[open + 1..s.len() - 1]))
}

fn parse_inner(s: &str) -> std::result::Result<SpaceDescriptor, String> {
    let (name, inner) = call(s.trim())?;
    let finish = |kv: &Vec<(String, usize)>, flags: &Vec<String>| {
        if let Some((k, _)) = kv.first() {
            return Err(format!("unexpected key {k}"));
        }
        if let Some(f) = flags.first() {
            return Err(format!("unexpected flag {f}"));
        }
        Ok(())
    };
    match name {
        "V" | "W" | "S" => {
            let (mut kv, mut flags) = parse_args(inner)?;
            let d = take(&mut kv, "d")?;
            let out = match name {
                "V" => SpaceDescriptor::V {
                    d,
                    p: take(&mut kv, "p")?,
                },
                "W" => SpaceDescriptor::W {
                    d,
                    g: take(&mut kv, "g")?,
                },
                _ => {
                    let g = take(&mut kv, "g")?;
                    if kv.iter().any(|(k, _)| k == "rho") {
                        let rho = take(&mut kv, "rho")?;
                        let aug = if let Some(i) = flags.iter().position(|f| f == "aug") {
                            flags.remove(i);
                            true
                        } else {
                            false
                        };
                        SpaceDescriptor::SRho { d, g, rho, aug }
                    } else {
                        SpaceDescriptor::S { d, g }
                    }
                }
            };
            finish(&kv, &flags)?;
            Ok(out)
        }
        "T" | "B" => {
            let (head, rest) = inner.split_once(';').ok_or("expected ';'")?;
            let (mut kv, flags) = parse_args(head)?;
            let cap = take(&mut kv, if name == "T" { "r" } else { "rho" })?;
            finish(&kv, &flags)?;
            match (name, parse_inner(rest)?) {
                ("T", SpaceDescriptor::V { d, p }) => Ok(SpaceDescriptor::T { r: cap, d, p }),
                ("B", SpaceDescriptor::W { d, g }) => Ok(SpaceDescriptor::B { rho: cap, d, g }),
                (_, other) => Err(format!("{name}(…) cannot wrap {other}")),
            }
        }
        other => Err(format!("unknown family {other:?}")),
    }
}

impl FromStr for SpaceDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = parse_inner(s).map_err(|reason| Error::Parse {
            input: s.to_string(),
            reason,
        })?;
        parsed.validate().map_err(|e| Error::Parse {
            input: s.to_string(),
            reason: e.to_string(),
        })
    }
}

impl Serialize for SpaceDescriptor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpaceDescriptor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Binomial coefficient; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

fn checked_pow(base: usize, exp: usize) -> Result<u64> {
    (base as u64)
        .checked_pow(exp as u32)
        .ok_or_else(|| Error::InvalidArgument(format!("{base}^{exp} overflows")))
}

/// Dimension of the linear spaces `V`, `W` and `S`.
pub fn space_dimension(s: &SpaceDescriptor) -> Result<u64> {
    match s.validate()? {
        SpaceDescriptor::V { d, p } => checked_pow(p, d),
        SpaceDescriptor::W { d, g } => Ok(binomial(d + g - 1, d - 1)),
        SpaceDescriptor::S { d, g } => Ok(binomial(d + g, d)),
        other => Err(Error::UnsupportedSpace(format!(
            "{other} is not a linear space; use the degree-of-freedom count"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationConstant {
    pub value: f64,
    /// Set when `value` only bounds the constant from above.
    pub upper_bound: bool,
}

/// Variation constant for the Legendre dictionary on `[-1,1]^d` under the
/// uniform measure.
///
/// The unweighted values assume the L²-orthonormal scaling `√(2k+1) P_k`, for
/// which `Σ_ℓ Π_k (2ℓ_k+1)` is the exact supremum over `V`. For `W` only an
/// upper bound is known; the cruder closed form `(3e(d-1+g)/g)^g` for `g ≤ d`
/// is weaker than the product form returned here.
pub fn variation_constant(s: &SpaceDescriptor, weighted: bool) -> Result<VariationConstant> {
    match s.validate()? {
        SpaceDescriptor::V { .. } | SpaceDescriptor::W { .. } if weighted => {
            Ok(VariationConstant {
                value: space_dimension(s)? as f64,
                upper_bound: false,
            })
        }
        SpaceDescriptor::V { d, p } => Ok(VariationConstant {
            value: (p as f64).powi(2 * d as i32),
            upper_bound: false,
        }),
        SpaceDescriptor::W { d, g } => {
            let (q, rem) = (g / d, g % d);
            let value = binomial(d - 1 + g, d - 1) as f64
                * ((2 * q + 3) as f64).powi(rem as i32)
                * ((2 * q + 1) as f64).powi((d - rem) as i32);
            Ok(VariationConstant {
                value,
                upper_bound: true,
            })
        }
        other => Err(Error::UnsupportedSpace(format!(
            "variation constant is only available for V and W, not {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Dictionary;

    #[test]
    fn canonical_forms_round_trip() {
        for s in [
            "V(d=10,p=6)",
            "T(r=6;V(d=8,p=3))",
            "W(d=8,g=2)",
            "B(rho=4;W(d=8,g=2))",
            "S(d=6,g=7)",
            "S(d=6,g=7,rho=1)",
            "S(d=10,g=5,rho=3,aug)",
        ] {
            let parsed: SpaceDescriptor = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
    }

    #[test]
    fn parser_tolerates_whitespace_and_key_order() {
        let a: SpaceDescriptor = " B( rho = 4 ; W( g=2, d=8 ) ) ".parse().unwrap();
        assert_eq!(a, SpaceDescriptor::B { rho: 4, d: 8, g: 2 });
    }

    #[test]
    fn parser_rejects_garbage() {
        for bad in [
            "",
            "X(d=1)",
            "W(d=8)",
            "W(d=8,g=2,q=1)",
            "W(d=0,g=2)",
            "B(rho=4;V(d=2,p=2))",
            "S(d=3,g=2,aug)",
            "W(d=8,g=2",
        ] {
            assert!(
                matches!(bad.parse::<SpaceDescriptor>(), Err(Error::Parse { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn dimensions() {
        let dim = |s: &str| space_dimension(&s.parse().unwrap()).unwrap();
        assert_eq!(dim("W(d=8,g=2)"), 36);
        assert_eq!(dim("S(d=6,g=7)"), 1716);
        assert_eq!(dim("S(d=10,g=5)"), 3003);
        assert_eq!(dim("V(d=10,p=6)"), 60_466_176);
        assert!(matches!(
            space_dimension(&"B(rho=4;W(d=8,g=2))".parse().unwrap()),
            Err(Error::UnsupportedSpace(_))
        ));
    }

    #[test]
    fn homogeneous_dimension_matches_enumeration() {
        for d in 1..=6 {
            for g in 0..=4 {
                let p = g + 1;
                let count = crate::tensor::multi_indices(&vec![p; d])
                    .filter(|m| m.iter().sum::<usize>() == g)
                    .count() as u64;
                assert_eq!(
                    space_dimension(&SpaceDescriptor::W { d, g }).unwrap(),
                    count
                );
            }
        }
    }

    #[test]
    fn variation_constants() {
        let k = |s: &str, w| variation_constant(&s.parse().unwrap(), w).unwrap();
        assert_eq!(k("V(d=3,p=4)", false).value, 4096.0);
        let w = k("W(d=10,g=5)", true);
        assert_eq!(w.value, 2002.0);
        assert!(!w.upper_bound);
        assert!(k("W(d=10,g=5)", false).upper_bound);
    }

    #[test]
    fn unweighted_constant_matches_grid_supremum() {
        // sup over x of Σ_ℓ Π_k (2ℓ_k+1) P_{ℓ_k}(x_k)² on a 101×101 grid
        let dict = Dictionary::legendre(3).unwrap();
        let grid: Vec<f64> = (0..101).map(|i| -1.0 + 0.02 * i as f64).collect();
        let mut best = 0.0f64;
        for &a in &grid {
            for &b in &grid {
                let sum = |x: f64| {
                    dict.eval(x)
                        .iter()
                        .enumerate()
                        .map(|(l, v)| (2 * l + 1) as f64 * v * v)
                        .sum::<f64>()
                };
                best = best.max(sum(a) * sum(b));
            }
        }
        let closed = variation_constant(&SpaceDescriptor::V { d: 2, p: 3 }, false).unwrap();
        assert_eq!(closed.value, 81.0);
        assert!((best - 81.0).abs() <= 0.01 * 81.0);
    }

    #[test]
    fn json_uses_canonical_string() {
        let s: SpaceDescriptor = "S(d=10,g=5,rho=3,aug)".parse().unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, "\"S(d=10,g=5,rho=3,aug)\"");
        assert_eq!(serde_json::from_str::<SpaceDescriptor>(&j).unwrap(), s);
    }
}
