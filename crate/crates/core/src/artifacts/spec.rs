use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactFamily {
    Motion,
    SuperResolution,
    Undersampling,
    Noise,
    Gamma,
    Ghosting,
    Spiking,
    Composite,
    None,
}

impl ArtifactFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactFamily::Motion => "motion",
            ArtifactFamily::SuperResolution => "super_resolution",
            ArtifactFamily::Undersampling => "undersampling",
            ArtifactFamily::Noise => "noise",
            ArtifactFamily::Gamma => "gamma",
            ArtifactFamily::Ghosting => "ghosting",
            ArtifactFamily::Spiking => "spiking",
            ArtifactFamily::Composite => "composite",
            ArtifactFamily::None => "none",
        }
    }
}

/// A degradation operator together with all of its parameters.
///
/// Specs serialize as their canonical string id (see [`ArtifactSpec::id`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ArtifactSpec {
    None,
    Motion {
        s: usize,
    },
    SuperResolution {
        scale: usize,
    },
    Undersampling {
        acceleration: usize,
        mask_seed: u64,
    },
    Noise {
        std: f64,
        seed: u64,
    },
    Gamma {
        gamma: f64,
    },
    Ghosting {
        num_ghosts: usize,
        axis: usize,
        intensity: f64,
    },
    Spiking {
        num_spikes: usize,
        intensity: f64,
        seed: u64,
    },
    /// Applies `parts[0]` then `parts[1]`.
    Composite {
        parts: Vec<ArtifactSpec>,
    },
}

impl ArtifactSpec {
    pub fn motion(s: usize) -> Self {
        ArtifactSpec::Motion { s }
    }

    pub fn super_resolution(scale: usize) -> Self {
        ArtifactSpec::SuperResolution { scale }
    }

    pub fn undersampling(acceleration: usize, mask_seed: u64) -> Self {
        ArtifactSpec::Undersampling {
            acceleration,
            mask_seed,
        }
    }

    pub fn noise(std: f64) -> Self {
        ArtifactSpec::Noise { std, seed: 0 }
    }

    pub fn gamma(gamma: f64) -> Self {
        ArtifactSpec::Gamma { gamma }
    }

    pub fn ghosting(num_ghosts: usize, axis: usize, intensity: f64) -> Self {
        ArtifactSpec::Ghosting {
            num_ghosts,
            axis,
            intensity,
        }
    }

    pub fn spiking(num_spikes: usize, intensity: f64) -> Self {
        ArtifactSpec::Spiking {
            num_spikes,
            intensity,
            seed: 0,
        }
    }

    pub fn composite(first: ArtifactSpec, second: ArtifactSpec) -> Self {
        ArtifactSpec::Composite {
            parts: vec![first, second],
        }
    }

    pub fn family(&self) -> ArtifactFamily {
        match self {
            ArtifactSpec::None => ArtifactFamily::None,
            ArtifactSpec::Motion { .. } => ArtifactFamily::Motion,
            ArtifactSpec::SuperResolution { .. } => ArtifactFamily::SuperResolution,
            ArtifactSpec::Undersampling { .. } => ArtifactFamily::Undersampling,
            ArtifactSpec::Noise { .. } => ArtifactFamily::Noise,
            ArtifactSpec::Gamma { .. } => ArtifactFamily::Gamma,
            ArtifactSpec::Ghosting { .. } => ArtifactFamily::Ghosting,
            ArtifactSpec::Spiking { .. } => ArtifactFamily::Spiking,
            ArtifactSpec::Composite { .. } => ArtifactFamily::Composite,
        }
    }

    /// True when the operator needs neighbouring cine frames.
    pub fn needs_cine(&self) -> bool {
        match self {
            ArtifactSpec::Motion { .. } => true,
            ArtifactSpec::Composite { parts } => parts.first().is_some_and(|p| p.needs_cine()),
            _ => false,
        }
    }

    /// Number of frames on either side of the target needed by this spec.
    pub fn frame_radius(&self) -> usize {
        match self {
            ArtifactSpec::Motion { s } => *s,
            ArtifactSpec::Composite { parts } => parts.iter().map(|p| p.frame_radius()).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Canonical id, stable across runs and used as a table row label.
    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::arg(format!("{}: {msg}", self.family().as_str())));
        match *self {
            ArtifactSpec::None => Ok(()),
            ArtifactSpec::Motion { s } if s < 1 => bad(format!("s must be >= 1, got {s}")),
            ArtifactSpec::SuperResolution { scale } if scale < 2 => {
                bad(format!("scale must be >= 2, got {scale}"))
            }
            ArtifactSpec::Undersampling { acceleration, .. } if acceleration < 2 => {
                bad(format!("acceleration must be >= 2, got {acceleration}"))
            }
            ArtifactSpec::Noise { std, .. } if !(std > 0.0 && std.is_finite()) => {
                bad(format!("std must be positive, got {std}"))
            }
            ArtifactSpec::Gamma { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                bad(format!("gamma must be positive, got {gamma}"))
            }
            ArtifactSpec::Ghosting {
                num_ghosts,
                axis,
                intensity,
            } => {
                if num_ghosts < 1 {
                    bad(format!("num_ghosts must be >= 1, got {num_ghosts}"))
                } else if axis > 1 {
                    bad(format!("axis must be 0 or 1, got {axis}"))
                } else if !(intensity > 0.0 && intensity <= 1.0) {
                    bad(format!("intensity must lie in (0, 1], got {intensity}"))
                } else {
                    Ok(())
                }
            }
            ArtifactSpec::Spiking {
                num_spikes,
                intensity,
                ..
            } => {
                if num_spikes < 1 {
                    bad(format!("num_spikes must be >= 1, got {num_spikes}"))
                } else if !(intensity > 0.0 && intensity.is_finite()) {
                    bad(format!("intensity must be positive, got {intensity}"))
                } else {
                    Ok(())
                }
            }
            ArtifactSpec::Composite { ref parts } => {
                if parts.len() != 2 {
                    return bad(format!("needs exactly 2 parts, got {}", parts.len()));
                }
                if parts.iter().any(|p| p.family() == ArtifactFamily::Composite) {
                    return bad("parts may not be composite".into());
                }
                if parts[1].needs_cine() {
                    return bad("motion can only be the first part".into());
                }
                parts.iter().try_for_each(ArtifactSpec::validate)
            }
            _ => Ok(()),
        }
    }
}

fn seed_suffix(seed: u64) -> String {
    if seed == 0 {
        String::new()
    } else {
        format!("_seed{seed}")
    }
}

impl fmt::Display for ArtifactSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArtifactSpec::None => write!(f, "none"),
            ArtifactSpec::Motion { s } => write!(f, "motion_s{s}"),
            ArtifactSpec::SuperResolution { scale } => write!(f, "sr_x{scale}"),
            ArtifactSpec::Undersampling {
                acceleration,
                mask_seed,
            } => write!(f, "us_x{acceleration:02}{}", seed_suffix(*mask_seed)),
            ArtifactSpec::Noise { std, seed } => write!(f, "noise_s{std}{}", seed_suffix(*seed)),
            ArtifactSpec::Gamma { gamma } => write!(f, "gamma_g{gamma}"),
            ArtifactSpec::Ghosting {
                num_ghosts,
                axis,
                intensity,
            } => write!(f, "ghost_n{num_ghosts}_a{axis}_i{intensity}"),
            ArtifactSpec::Spiking {
                num_spikes,
                intensity,
                seed,
            } => write!(f, "spike_n{num_spikes}_i{intensity}{}", seed_suffix(*seed)),
            ArtifactSpec::Composite { parts } => {
                write!(f, "comp(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Splits `body` into `_`-separated fields keyed by their leading letters.
fn fields<'a>(id: &str, body: &'a str, keys: &[&str]) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = body.split('_').collect();
    if parts.len() != keys.len() {
        return Err(Error::arg(format!("malformed artifact id {id:?}")));
    }
    parts
        .iter()
        .zip(keys)
        .map(|(p, k)| {
            p.strip_prefix(k)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::arg(format!("malformed artifact id {id:?}: expected {k}")))
        })
        .collect()
}

fn num<T: FromStr>(id: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::arg(format!("malformed number {text:?} in artifact id {id:?}")))
}

fn split_seed(body: &str) -> (&str, Option<&str>) {
    match body.rfind("_seed") {
        Some(pos) => (&body[..pos], Some(&body[pos + 5..])),
        None => (body, None),
    }
}

impl FromStr for ArtifactSpec {
    type Err = Error;

    fn from_str(id: &str) -> Result<Self> {
        if id == "none" {
            return Ok(ArtifactSpec::None);
        }
        if let Some(inner) = id.strip_prefix("comp(").and_then(|r| r.strip_suffix(')')) {
            let parts = inner
                .split('+')
                .map(str::parse)
                .collect::<Result<Vec<ArtifactSpec>>>()?;
            let spec = ArtifactSpec::Composite { parts };
            spec.validate()?;
            return Ok(spec);
        }
        let (head, body) = id
            .split_once('_')
            .ok_or_else(|| Error::arg(format!("unknown artifact id {id:?}")))?;
        let (body, seed) = split_seed(body);
        let seed: u64 = seed.map(|s| num(id, s)).transpose()?.unwrap_or(0);
        let seeded = matches!(head, "us" | "noise" | "spike");
        if !seeded && seed != 0 {
            return Err(Error::arg(format!("artifact id {id:?} does not take a seed")));
        }
        let spec = match head {
            "motion" => ArtifactSpec::Motion {
                s: num(id, fields(id, body, &["s"])?[0])?,
            },
            "sr" => ArtifactSpec::SuperResolution {
                scale: num(id, fields(id, body, &["x"])?[0])?,
            },
            "us" => ArtifactSpec::Undersampling {
                acceleration: num(id, fields(id, body, &["x"])?[0])?,
                mask_seed: seed,
            },
            "noise" => ArtifactSpec::Noise {
                std: num(id, fields(id, body, &["s"])?[0])?,
                seed,
            },
            "gamma" => ArtifactSpec::Gamma {
                gamma: num(id, fields(id, body, &["g"])?[0])?,
            },
            "ghost" => {
                let f = fields(id, body, &["n", "a", "i"])?;
                ArtifactSpec::Ghosting {
                    num_ghosts: num(id, f[0])?,
                    axis: num(id, f[1])?,
                    intensity: num(id, f[2])?,
                }
            }
            "spike" => {
                let f = fields(id, body, &["n", "i"])?;
                ArtifactSpec::Spiking {
                    num_spikes: num(id, f[0])?,
                    intensity: num(id, f[1])?,
                    seed,
                }
            }
            _ => return Err(Error::arg(format!("unknown artifact id {id:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for ArtifactSpec {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ArtifactSpec> for String {
    fn from(spec: ArtifactSpec) -> Self {
        spec.id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_ids() {
        assert_eq!(ArtifactSpec::undersampling(4, 7).id(), "us_x04_seed7");
        assert_eq!(ArtifactSpec::undersampling(2, 0).id(), "us_x02");
        assert_eq!(ArtifactSpec::motion(2).id(), "motion_s2");
        assert_eq!(ArtifactSpec::super_resolution(5).id(), "sr_x5");
        assert_eq!(
            ArtifactSpec::composite(ArtifactSpec::undersampling(3, 0), ArtifactSpec::noise(0.05)).id(),
            "comp(us_x03+noise_s0.05)"
        );
        assert_eq!(ArtifactSpec::ghosting(4, 0, 0.6).id(), "ghost_n4_a0_i0.6");
        assert_eq!(ArtifactSpec::spiking(3, 0.2).id(), "spike_n3_i0.2");
        assert_eq!(ArtifactSpec::gamma(1.5).id(), "gamma_g1.5");
        assert_eq!(ArtifactSpec::None.id(), "none");
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(ArtifactSpec::motion(0).validate().is_err());
        assert!(ArtifactSpec::super_resolution(1).validate().is_err());
        assert!(ArtifactSpec::undersampling(1, 0).validate().is_err());
        assert!(ArtifactSpec::noise(0.0).validate().is_err());
        assert!(ArtifactSpec::gamma(-1.0).validate().is_err());
        assert!(ArtifactSpec::ghosting(4, 2, 0.5).validate().is_err());
        assert!(ArtifactSpec::spiking(0, 0.2).validate().is_err());
        let nested = ArtifactSpec::composite(
            ArtifactSpec::composite(ArtifactSpec::gamma(0.7), ArtifactSpec::noise(0.1)),
            ArtifactSpec::noise(0.1),
        );
        assert!(nested.validate().is_err());
        let triple = ArtifactSpec::Composite {
            parts: vec![ArtifactSpec::None; 3],
        };
        assert!(triple.validate().is_err());
        let motion_second = ArtifactSpec::composite(ArtifactSpec::noise(0.1), ArtifactSpec::motion(1));
        assert!(motion_second.validate().is_err());
    }

    #[test]
    fn parse_rejects_garbage() {
        for id in [
            "",
            "motion",
            "motion_x2",
            "sr_x",
            "gamma_g1_seed3",
            "comp(none)",
            "woo_s1",
        ] {
            assert!(id.parse::<ArtifactSpec>().is_err(), "{id}");
        }
    }

    #[test]
    fn serde_uses_ids() {
        let spec = ArtifactSpec::undersampling(6, 3);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, "\"us_x06_seed3\"");
        assert_eq!(serde_json::from_str::<ArtifactSpec>(&json).unwrap(), spec);
    }

    fn simple_spec() -> impl Strategy<Value = ArtifactSpec> {
        prop_oneof![
            Just(ArtifactSpec::None),
            (1usize..8).prop_map(ArtifactSpec::motion),
            (2usize..9).prop_map(ArtifactSpec::super_resolution),
            (2usize..12, 0u64..20).prop_map(|(r, s)| ArtifactSpec::undersampling(r, s)),
            (0.001f64..0.5, 0u64..5).prop_map(|(std, seed)| ArtifactSpec::Noise { std, seed }),
            (0.1f64..3.0).prop_map(ArtifactSpec::gamma),
            (1usize..8, 0usize..2, 0.01f64..1.0).prop_map(|(n, a, i)| ArtifactSpec::ghosting(n, a, i)),
            (1usize..6, 0.01f64..1.0, 0u64..5).prop_map(|(n, i, seed)| ArtifactSpec::Spiking {
                num_spikes: n,
                intensity: i,
                seed
            }),
        ]
    }

    proptest! {
        #[test]
        fn ids_round_trip(a in simple_spec(), b in simple_spec(), compose in any::<bool>()) {
            let spec = if compose && !b.needs_cine() {
                ArtifactSpec::composite(a, b)
            } else {
                a
            };
            let parsed: ArtifactSpec = spec.id().parse().unwrap();
            prop_assert_eq!(parsed, spec);
        }
    }
}
