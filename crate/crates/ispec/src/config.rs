//! Pipeline configuration: geometry and hypersurface specs as the command
//! line spells them, and the oracle gate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ispec_core::manifold::{build_manifold, square_ring, ComponentSpec, DiscreteManifold, GeometrySpec, Hypersurface};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Oracles that read the manifold are allowed.
    Test,
    /// Spectral data only.
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cycle,
    Torus,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("metric expression: {0}")]
    Metric(#[from] crate::expr::ParseError),
    #[error("operation '{0}' reads the manifold and is refused in blind mode")]
    OracleOnly(&'static str),
    #[error(transparent)]
    Core(#[from] ispec_core::error::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub shape: Shape,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    /// Cycle circumference in parameter units.
    pub circumference: f64,
    pub lx: f64,
    pub ly: f64,
    /// Cycle edge stretch, or torus conformal factor.
    pub metric_expr: Option<String>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Cycle,
            n: 64,
            nx: 32,
            ny: 32,
            circumference: 2.0 * PI,
            lx: 1.0,
            ly: 1.0,
            metric_expr: None,
        }
    }
}

impl GeometryConfig {
    pub fn spec(&self) -> Result<GeometrySpec, ConfigError> {
        let metric = self.metric_expr.as_deref().map(Expr::parse).transpose()?;
        Ok(match (self.shape, metric) {
            (Shape::Cycle, None) => GeometrySpec::uniform_cycle(self.n, self.circumference),
            (Shape::Cycle, Some(e)) => {
                if e.uses_y() {
                    return Err(ConfigError::Invalid("a cycle metric depends on x only".into()));
                }
                GeometrySpec::cycle_with_profile(self.n, self.circumference, |x| e.eval(x, 0.0))
            }
            (Shape::Torus, None) => GeometrySpec::uniform_torus(self.nx, self.ny, self.lx, self.ly),
            (Shape::Torus, Some(e)) => GeometrySpec::torus_with_factor(self.nx, self.ny, self.lx, self.ly, |x, y| e.eval(x, y)),
        })
    }

    pub fn build(&self) -> Result<DiscreteManifold, ConfigError> {
        Ok(build_manifold(&self.spec()?)?)
    }
}

/// One hypersurface component as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentArg {
    /// Explicit vertices, with the enclosed seed if given.
    Vertices { vertices: Vec<usize>, seed: Option<usize> },
    /// `ring(i0,j0,a,b)`: square ring around a block of a torus.
    Ring { i0: usize, j0: usize, a: usize, b: usize },
}

/// Components separated by `;`. Each is `v,v,...[@seed]` or
/// `ring(i0,j0,a,b)`. On a cycle the seed defaults to the vertex after the
/// smallest one, so `0,3` encloses `{1,2}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaArg(pub Vec<ComponentArg>);

impl FromStr for SigmaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad vertex index '{}'", t.trim()));
        let mut out = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some(body) = part.strip_prefix("ring(").and_then(|r| r.strip_suffix(')')) {
                let v: Vec<usize> = body.split(',').map(num).collect::<Result<_, _>>()?;
                let [i0, j0, a, b] = v[..] else {
                    return Err(format!("ring needs four numbers, got '{part}'"));
                };
                out.push(ComponentArg::Ring { i0, j0, a, b });
            } else {
                let (list, seed) = match part.split_once('@') {
                    Some((l, s)) => (l, Some(num(s)?)),
                    None => (part, None),
                };
                let vertices = list.split(',').map(num).collect::<Result<_, _>>()?;
                out.push(ComponentArg::Vertices { vertices, seed });
            }
        }
        if out.is_empty() {
            return Err("no hypersurface components given".into());
        }
        Ok(SigmaArg(out))
    }
}

impl fmt::Display for SigmaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            match c {
                ComponentArg::Ring { i0, j0, a, b } => write!(f, "ring({i0},{j0},{a},{b})")?,
                ComponentArg::Vertices { vertices, seed } => {
                    let list: Vec<String> = vertices.iter().map(usize::to_string).collect();
                    f.write_str(&list.join(","))?;
                    if let Some(s) = seed {
                        write!(f, "@{s}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

impl SigmaArg {
    pub fn components(&self, man: &DiscreteManifold) -> Result<Vec<ComponentSpec>, ConfigError> {
        self.0
            .iter()
            .map(|c| match c {
                ComponentArg::Ring { i0, j0, a, b } => Ok(square_ring(man, *i0, *j0, *a, *b)?),
                ComponentArg::Vertices { vertices, seed } => {
                    let seed = match (seed, &man.spec) {
                        (Some(s), _) => *s,
                        (None, GeometrySpec::Cycle { n, .. }) => {
                            let lo = vertices.iter().min().copied().unwrap_or(0);
                            (lo + 1) % n
                        }
                        (None, GeometrySpec::Torus { .. }) => {
                            return Err(ConfigError::Invalid("explicit torus components need '@seed'".into()));
                        }
                    };
                    Ok(ComponentSpec {
                        vertices: vertices.clone(),
                        seed,
                    })
                }
            })
            .collect()
    }

    pub fn carve(&self, man: &DiscreteManifold) -> Result<Hypersurface, ConfigError> {
        Ok(Hypersurface::carve(man, &self.components(man)?)?)
    }
}

/// Refuses oracle-only operations in blind mode.
pub fn require_oracle(mode: Mode, op: &'static str) -> Result<(), ConfigError> {
    match mode {
        Mode::Test => Ok(()),
        Mode::Blind => Err(ConfigError::OracleOnly(op)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_syntax_round_trips() {
        for text in ["0,3;7,12", "0,3@1", "ring(4,4,5,4);ring(16,16,8,6)"] {
            let arg: SigmaArg = text.parse().unwrap();
            assert_eq!(arg.to_string(), text);
        }
        assert!("".parse::<SigmaArg>().is_err());
        assert!("ring(1,2,3)".parse::<SigmaArg>().is_err());
        assert!("0,x".parse::<SigmaArg>().is_err());
    }

    #[test]
    fn default_cycle_seed_encloses_the_short_arc() {
        let man = GeometryConfig { n: 16, ..Default::default() }.build().unwrap();
        let comps = "0,3;7,12".parse::<SigmaArg>().unwrap().components(&man).unwrap();
        assert_eq!(comps[0].seed, 1);
        assert_eq!(comps[1].seed, 8);
    }

    #[test]
    fn metric_expression_shapes_the_cycle() {
        let cfg = GeometryConfig {
            n: 16,
            metric_expr: Some("1 + 0.2*sin(x)".into()),
            ..Default::default()
        };
        let GeometrySpec::Cycle { metric, .. } = cfg.spec().unwrap() else { panic!() };
        assert!(metric.iter().any(|m| (m - 1.0).abs() > 0.1));
        let bad = GeometryConfig {
            metric_expr: Some("1 + y".into()),
            ..Default::default()
        };
        assert!(bad.spec().is_err());
    }

    #[test]
    fn blind_mode_refuses_oracles() {
        assert!(require_oracle(Mode::Test, "simulate_green").is_ok());
        assert!(matches!(require_oracle(Mode::Blind, "simulate_green"), Err(ConfigError::OracleOnly(_))));
    }
}
