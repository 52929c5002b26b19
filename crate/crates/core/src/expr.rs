//! Closed vocabulary for data functions of space and time.
//!
//! ```toml
//! initial = { kind = "sum", terms = [
//!     0.1,
//!     { kind = "cos", amplitude = 0.3, modes = [1, 0] },
//! ] }
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Number(f64),
    Node(Node),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Node {
    Const {
        value: f64,
    },
    /// `amplitude * prod_a cos(k_a pi x_a / L_a)`
    Cos {
        amplitude: f64,
        modes: Vec<u32>,
    },
    Sum {
        terms: Vec<Expr>,
    },
    Product {
        factors: Vec<Expr>,
    },
    /// Linear in time from `from` at `t = 0` to `to` at `t = duration`, then constant.
    Ramp {
        from: f64,
        to: f64,
        duration: f64,
    },
}

impl Default for Expr {
    fn default() -> Self {
        Expr::Number(0.0)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Number(v)
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Number(v)
    }

    pub fn cos(amplitude: f64, modes: &[u32]) -> Self {
        Expr::Node(Node::Cos {
            amplitude,
            modes: modes.to_vec(),
        })
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        Expr::Node(Node::Sum { terms })
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        Expr::Node(Node::Product { factors })
    }

    /// Value at point `x` and time `t` on a box with the given extents.
    pub fn eval(&self, x: [f64; 3], t: f64, extents: [f64; 3]) -> f64 {
        match self {
            Expr::Number(v) => *v,
            Expr::Node(Node::Const { value }) => *value,
            Expr::Node(Node::Cos { amplitude, modes }) => {
                let mut v = *amplitude;
                for (a, &k) in modes.iter().enumerate().take(3) {
                    if k != 0 {
                        v *= (k as f64 * PI * x[a] / extents[a]).cos();
                    }
                }
                v
            }
            Expr::Node(Node::Sum { terms }) => terms.iter().map(|e| e.eval(x, t, extents)).sum(),
            Expr::Node(Node::Product { factors }) => factors.iter().map(|e| e.eval(x, t, extents)).product(),
            Expr::Node(Node::Ramp { from, to, duration }) => {
                if *duration <= 0.0 {
                    return *to;
                }
                let s = (t / duration).clamp(0.0, 1.0);
                from + (to - from) * s
            }
        }
    }

    /// True when the expression does not depend on time.
    pub fn is_static(&self) -> bool {
        match self {
            Expr::Number(_) => true,
            Expr::Node(Node::Ramp { .. }) => false,
            Expr::Node(Node::Sum { terms }) => terms.iter().all(Expr::is_static),
            Expr::Node(Node::Product { factors }) => factors.iter().all(Expr::is_static),
            Expr::Node(_) => true,
        }
    }

    /// True when the expression is spatially constant.
    pub fn is_uniform(&self) -> bool {
        match self {
            Expr::Node(Node::Cos { modes, amplitude }) => *amplitude == 0.0 || modes.iter().all(|k| *k == 0),
            Expr::Node(Node::Sum { terms }) => terms.iter().all(Expr::is_uniform),
            Expr::Node(Node::Product { factors }) => factors.iter().all(Expr::is_uniform),
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize)]
    struct Wrap {
        e: Expr,
    }

    fn parse(src: &str) -> Expr {
        toml::from_str::<Wrap>(src).unwrap().e
    }

    #[test]
    fn parses_vocabulary() {
        let e = parse(
            r#"e = { kind = "sum", terms = [0.1, { kind = "cos", amplitude = 0.3, modes = [1, 0] }] }"#,
        );
        let ext = [1.0, 1.0, 1.0];
        assert!((e.eval([0.0, 0.4, 0.0], 0.0, ext) - 0.4).abs() < 1e-15);
        assert!((e.eval([1.0, 0.4, 0.0], 0.0, ext) + 0.2).abs() < 1e-15);
        assert!(e.is_static());
        assert!(!e.is_uniform());
    }

    #[test]
    fn ramp_and_product() {
        let e = parse(r#"e = { kind = "product", factors = [2.0, { kind = "ramp", from = 1.0, to = 3.0, duration = 0.5 }] }"#);
        let ext = [1.0; 3];
        assert_eq!(e.eval([0.0; 3], 0.0, ext), 2.0);
        assert_eq!(e.eval([0.0; 3], 0.25, ext), 4.0);
        assert_eq!(e.eval([0.0; 3], 9.0, ext), 6.0);
        assert!(!e.is_static());
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(toml::from_str::<Wrap>(r#"e = { kind = "sine", amplitude = 1.0 }"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let e = Expr::sum(vec![Expr::constant(0.5), Expr::cos(0.1, &[2, 1])]);
        let back: Expr = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(e, back);
    }
}
