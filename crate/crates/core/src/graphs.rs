//! Maximal monotone graphs on the real line, their resolvents, Yosida
//! approximations and Moreau envelopes, plus the shifted logarithm used by
//! the temperature equation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::solve_increasing;

const LN_2: f64 = std::f64::consts::LN_2;

/// The graphs shipped with the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneGraph {
    /// `ln((1+r)/(1-r))` on `(-1, 1)`.
    Log,
    /// Subdifferential of the indicator of `[-1, 1]`.
    Indicator,
    /// `r^3`.
    Power,
    /// `ln r` on `(0, inf)`.
    NaturalLog,
}

/// Endpoints of an effective domain; `Int D` is the open interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains_interior(&self, r: f64) -> bool {
        r > self.lower && r < self.upper
    }
}

/// Result of one resolvent evaluation. `aux` is the graph value at the
/// resolvent point whenever the graph is computed in that variable.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    point: f64,
    aux: f64,
}

impl MonotoneGraph {
    pub const ALL: [MonotoneGraph; 4] = [
        MonotoneGraph::Log,
        MonotoneGraph::Indicator,
        MonotoneGraph::Power,
        MonotoneGraph::NaturalLog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MonotoneGraph::Log => "log",
            MonotoneGraph::Indicator => "indicator",
            MonotoneGraph::Power => "power",
            MonotoneGraph::NaturalLog => "natural-log",
        }
    }

    /// Closure of the effective domain `D(beta)`.
    pub fn domain(self) -> Interval {
        match self {
            MonotoneGraph::Log | MonotoneGraph::Indicator => Interval {
                lower: -1.0,
                upper: 1.0,
            },
            MonotoneGraph::Power => Interval {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            },
            MonotoneGraph::NaturalLog => Interval {
                lower: 0.0,
                upper: f64::INFINITY,
            },
        }
    }

    /// The convex primitive; `+inf` outside its effective domain.
    ///
    /// The natural-log primitive `r ln r - r + 1` is normalized at its
    /// minimum `r = 1`, so it is nonnegative but does not vanish at 0.
    pub fn primitive(self, r: f64) -> f64 {
        match self {
            MonotoneGraph::Log => {
                if r.abs() > 1.0 {
                    f64::INFINITY
                } else if r.abs() == 1.0 {
                    2.0 * LN_2
                } else {
                    (1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln()
                }
            }
            MonotoneGraph::Indicator => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            MonotoneGraph::Power => 0.25 * r.powi(4),
            MonotoneGraph::NaturalLog => {
                if r > 0.0 {
                    r * r.ln() - r + 1.0
                } else if r == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Element of minimal modulus of `beta(r)`, `None` off the domain.
    pub fn minimal_section(self, r: f64) -> Option<f64> {
        match self {
            MonotoneGraph::Log => (r.abs() < 1.0).then(|| ((1.0 + r) / (1.0 - r)).ln()),
            MonotoneGraph::Indicator => (r.abs() <= 1.0).then_some(0.0),
            MonotoneGraph::Power => Some(r * r * r),
            MonotoneGraph::NaturalLog => (r > 0.0).then(|| r.ln()),
        }
    }

    /// C2 normalization: `beta_hat(0) = 0` with `0` in its domain.
    pub fn primitive_vanishes_at_zero(self) -> bool {
        self.primitive(0.0) == 0.0
    }

    fn resolve(self, lambda: f64, r: f64) -> Result<Resolved> {
        match self {
            MonotoneGraph::Indicator => Ok(Resolved {
                point: r.clamp(-1.0, 1.0),
                aux: 0.0,
            }),
            MonotoneGraph::Power => {
                let s = solve_increasing(
                    |s| (s + lambda * s * s * s - r, 1.0 + 3.0 * lambda * s * s),
                    power_guess(lambda, r),
                    r,
                )?;
                Ok(Resolved {
                    point: s,
                    aux: s * s * s,
                })
            }
            MonotoneGraph::Log => {
                // unknown z = beta(J); J = tanh(z/2) never leaves (-1, 1)
                let guess = if r.abs() < 1.0 { r / (0.5 + lambda) } else { (r - r.signum()) / lambda };
                let z = solve_increasing(
                    |z| {
                        let t = (0.5 * z).tanh();
                        (t + lambda * z - r, 0.5 * (1.0 - t * t) + lambda)
                    },
                    guess,
                    r,
                )?;
                Ok(Resolved {
                    point: (0.5 * z).tanh(),
                    aux: z,
                })
            }
            MonotoneGraph::NaturalLog => {
                let y = log_resolvent_exponent(lambda, r)?;
                Ok(Resolved {
                    point: y.exp(),
                    aux: y,
                })
            }
        }
    }

    /// `J_lambda(r)`, the unique `s` with `s + lambda beta(s) = r`.
    pub fn resolvent(self, lambda: f64, r: f64) -> Result<f64> {
        Ok(self.resolve(lambda, r)?.point)
    }

    /// `beta_lambda(r) = (r - J_lambda(r)) / lambda`.
    pub fn yosida(self, lambda: f64, r: f64) -> Result<f64> {
        let j = self.resolve(lambda, r)?.point;
        Ok((r - j) / lambda)
    }

    /// Almost-everywhere derivative of `beta_lambda`. At the kinks of the
    /// indicator graph the inactive branch (slope 0) is taken.
    pub fn yosida_slope(self, lambda: f64, r: f64) -> Result<f64> {
        Ok(match self {
            MonotoneGraph::Indicator => {
                if r.abs() > 1.0 {
                    1.0 / lambda
                } else {
                    0.0
                }
            }
            MonotoneGraph::Power => {
                let s = self.resolve(lambda, r)?.point;
                let d = 3.0 * s * s;
                d / (1.0 + lambda * d)
            }
            MonotoneGraph::Log => {
                let z = self.resolve(lambda, r)?.aux;
                // beta'(J) = 2 cosh^2(z/2); written to stay finite for large z
                let c = (0.5 * z).cosh();
                1.0 / (lambda + 0.5 / (c * c))
            }
            MonotoneGraph::NaturalLog => {
                let j = self.resolve(lambda, r)?.point;
                1.0 / (j + lambda)
            }
        })
    }

    /// Moreau envelope `(r - J)^2 / (2 lambda) + beta_hat(J)`.
    pub fn moreau(self, lambda: f64, r: f64) -> Result<f64> {
        let res = self.resolve(lambda, r)?;
        let gap = r - res.point;
        let inner = match self {
            MonotoneGraph::Log => log_primitive_from_z(res.aux),
            _ => self.primitive(res.point),
        };
        Ok(gap * gap / (2.0 * lambda) + inner)
    }

    pub fn yosida_view(self, lambda: f64) -> Yosida {
        Yosida { graph: self, lambda }
    }
}

fn power_guess(lambda: f64, r: f64) -> f64 {
    // s + lambda s^3 = r: s ~ r for small r, (r/lambda)^(1/3) for large r
    let cube = (r.abs() / lambda).cbrt() * r.signum();
    if cube.abs() < r.abs() {
        cube
    } else {
        r
    }
}

/// `beta_hat(tanh(z/2))` for the log graph without cancellation near `|J| = 1`.
fn log_primitive_from_z(z: f64) -> f64 {
    let a = z.abs();
    let e = (-a).exp();
    let one_minus = 2.0 * e / (1.0 + e);
    (2.0 * LN_2 - 2.0 * e.ln_1p() - one_minus * a).max(0.0)
}

/// Solves `e^y + lambda y = r`; then `J^ln_lambda(r) = e^y` and
/// `ln_lambda(r) = y`.
fn log_resolvent_exponent(lambda: f64, r: f64) -> Result<f64> {
    let guess = if r > 1.0 { r.ln() } else { (r - 1.0) / (1.0 + lambda) };
    solve_increasing(
        |y| {
            let e = y.exp();
            (e + lambda * y - r, e + lambda)
        },
        guess,
        r,
    )
}

/// A graph together with a fixed Yosida parameter.
#[derive(Debug, Clone, Copy)]
pub struct Yosida {
    pub graph: MonotoneGraph,
    pub lambda: f64,
}

impl Yosida {
    pub fn resolvent(&self, r: f64) -> Result<f64> {
        self.graph.resolvent(self.lambda, r)
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        self.graph.yosida(self.lambda, r)
    }

    pub fn slope(&self, r: f64) -> Result<f64> {
        self.graph.yosida_slope(self.lambda, r)
    }

    pub fn moreau(&self, r: f64) -> Result<f64> {
        self.graph.moreau(self.lambda, r)
    }
}

/// `Ln_lambda(r) = lambda r + ln_lambda(r)` with `ln_lambda` the Yosida
/// approximation of the logarithm on `(0, inf)`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedLog {
    pub lambda: f64,
}

/// One evaluation of the shifted logarithm at `r`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedLogPoint {
    /// `Ln_lambda(r)`
    pub value: f64,
    /// `ln_lambda(r) = ln(J(r))`
    pub yosida: f64,
    /// `J^ln_lambda(r)`
    pub resolvent: f64,
    /// `d Ln_lambda / dr = lambda + 1/(J + lambda)`
    pub slope: f64,
}

impl ShiftedLog {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    pub fn eval(&self, r: f64) -> Result<ShiftedLogPoint> {
        let y = log_resolvent_exponent(self.lambda, r)?;
        let j = y.exp();
        Ok(ShiftedLogPoint {
            value: self.lambda * r + y,
            yosida: y,
            resolvent: j,
            slope: self.lambda + 1.0 / (j + self.lambda),
        })
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.value)
    }

    pub fn ln_lambda(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.yosida)
    }

    pub fn resolvent(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)?.resolvent)
    }

    /// Solves `Ln_lambda(r) = u` for `r`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        // with y = ln_lambda(r): r = e^y + lambda y and u = lambda e^y + (1 + lambda^2) y
        let l = self.lambda;
        let guess = u / (1.0 + l * l + l);
        let y = solve_increasing(
            |y| {
                let e = y.exp();
                (l * e + (1.0 + l * l) * y - u, l * e + 1.0 + l * l)
            },
            guess,
            u,
        )?;
        Ok(y.exp() + l * y)
    }
}

/// `Ln_lambda(r)`.
pub fn shifted_log(lambda: f64, r: f64) -> Result<f64> {
    ShiftedLog::new(lambda).value(r)
}

/// Inverse of [`shifted_log`].
pub fn inv_shifted_log(lambda: f64, u: f64) -> Result<f64> {
    ShiftedLog::new(lambda).inverse(u)
}

/// The anti-monotone Lipschitz perturbation `pi(r) = -kappa r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub coefficient: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { coefficient: 1.0 }
    }
}

impl Perturbation {
    pub fn value(&self, r: f64) -> f64 {
        -self.coefficient * r
    }

    pub fn slope(&self, _r: f64) -> f64 {
        -self.coefficient
    }

    /// `pi_hat(r) = int_0^r pi`.
    pub fn primitive(&self, r: f64) -> f64 {
        -0.5 * self.coefficient * r * r
    }

    /// `||pi'||_inf`.
    pub fn lipschitz(&self) -> f64 {
        self.coefficient.abs()
    }
}
