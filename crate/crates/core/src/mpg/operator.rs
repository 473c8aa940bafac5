//! Edge operators: the five propagation classes, their evaluation and local
//! derivatives.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::MpgError;

/// Monte Carlo sample count when a document omits `samples`.
pub const DEFAULT_SAMPLES: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    Normal { sigma: f64 },
    Uniform { half_width: f64 },
}

impl Noise {
    pub fn is_zero(&self) -> bool {
        match *self {
            Noise::Normal { sigma } => sigma == 0.0,
            Noise::Uniform { half_width } => half_width == 0.0,
        }
    }
}

fn default_samples() -> u32 {
    DEFAULT_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorSpec {
    Linear {
        alpha: f64,
    },
    /// Contributes `beta * x`; the `(1 + beta * x)` scaling comes from
    /// multiplicative aggregation at the target.
    Multiplicative {
        beta: f64,
    },
    /// `0` below `tau`, `slope * (x - tau) + offset` at or above it.
    Threshold {
        tau: f64,
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Mean of `base(x + noise)` over `samples` seeded draws.
    Stochastic {
        base: Box<OperatorSpec>,
        noise: Noise,
        #[serde(default = "default_samples")]
        samples: u32,
        #[serde(default)]
        seed: u64,
    },
    /// `inner` applied to the source value `delta_t` steps ago.
    Delayed {
        delta_t: u32,
        inner: Box<OperatorSpec>,
    },
}

pub const OPERATOR_KINDS: [&str; 5] = ["linear", "multiplicative", "threshold", "stochastic", "delayed"];

/// Per-evaluation inputs for stochastic draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NoiseStream {
    pub run_seed: u64,
    pub t: u64,
    pub edge: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix(acc ^ p))
}

impl OperatorSpec {
    pub fn linear(alpha: f64) -> Self {
        OperatorSpec::Linear { alpha }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OperatorSpec::Linear { .. } => "linear",
            OperatorSpec::Multiplicative { .. } => "multiplicative",
            OperatorSpec::Threshold { .. } => "threshold",
            OperatorSpec::Stochastic { .. } => "stochastic",
            OperatorSpec::Delayed { .. } => "delayed",
        }
    }

    fn is_wrapper(&self) -> bool {
        matches!(self, OperatorSpec::Stochastic { .. } | OperatorSpec::Delayed { .. })
    }

    /// The non-wrapping operator at the core.
    pub fn primitive(&self) -> &OperatorSpec {
        match self {
            OperatorSpec::Stochastic { base, .. } => base.primitive(),
            OperatorSpec::Delayed { inner, .. } => inner.primitive(),
            op => op,
        }
    }

    pub fn delay(&self) -> u32 {
        match self {
            OperatorSpec::Delayed { delta_t, .. } => *delta_t,
            _ => 0,
        }
    }

    /// Parameter checks; a wrapper may only wrap a primitive operator.
    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{} parameter '{name}' is not finite", self.kind()))
            }
        };
        match self {
            OperatorSpec::Linear { alpha } => finite("alpha", *alpha),
            OperatorSpec::Multiplicative { beta } => finite("beta", *beta),
            OperatorSpec::Threshold { tau, slope, offset } => {
                finite("tau", *tau)?;
                finite("slope", *slope)?;
                finite("offset", *offset)
            }
            OperatorSpec::Stochastic {
                base,
                noise,
                samples,
                ..
            } => {
                if *samples == 0 {
                    return Err("stochastic samples must be at least 1".into());
                }
                let (name, w) = match *noise {
                    Noise::Normal { sigma } => ("sigma", sigma),
                    Noise::Uniform { half_width } => ("half_width", half_width),
                };
                if !(w.is_finite() && w >= 0.0) {
                    return Err(format!("noise {name} must be finite and non-negative"));
                }
                if base.is_wrapper() {
                    return Err("stochastic operator must wrap a linear, multiplicative or threshold operator".into());
                }
                base.validate()
            }
            OperatorSpec::Delayed { delta_t, inner } => {
                if *delta_t == 0 {
                    return Err("delayed delta_t must be at least 1".into());
                }
                if inner.is_wrapper() {
                    return Err("delayed operator must wrap a linear, multiplicative or threshold operator".into());
                }
                inner.validate()
            }
        }
    }

    /// Scalar evaluation of one component. `component` only feeds the noise
    /// stream. Delayed operators evaluate their inner operator on `x`; the
    /// caller supplies the lagged value.
    pub fn eval_scalar(&self, x: f64, stream: NoiseStream, component: usize) -> f64 {
        match self {
            OperatorSpec::Linear { alpha } => alpha * x,
            OperatorSpec::Multiplicative { beta } => beta * x,
            OperatorSpec::Threshold { tau, slope, offset } => {
                if x < *tau {
                    0.0
                } else {
                    slope * (x - tau) + offset
                }
            }
            OperatorSpec::Stochastic {
                base,
                noise,
                samples,
                seed,
            } => {
                if noise.is_zero() {
                    return base.eval_scalar(x, stream, component);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
                    *seed,
                    stream.run_seed,
                    stream.t,
                    stream.edge,
                    component as u64,
                ]));
                let n = *samples as usize;
                let mut sum = 0.0;
                match *noise {
                    Noise::Normal { sigma } => {
                        let d = Normal::new(0.0, sigma).expect("validated sigma");
                        for _ in 0..n {
                            sum += base.eval_scalar(x + d.sample(&mut rng), stream, component);
                        }
                    }
                    Noise::Uniform { half_width } => {
                        let d = Uniform::new_inclusive(-half_width, half_width)
                            .expect("validated half width");
                        for _ in 0..n {
                            sum += base.eval_scalar(x + d.sample(&mut rng), stream, component);
                        }
                    }
                }
                sum / n as f64
            }
            OperatorSpec::Delayed { inner, .. } => inner.eval_scalar(x, stream, component),
        }
    }

    pub fn eval(&self, x: &[f64], stream: NoiseStream) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, &v)| self.eval_scalar(v, stream, c))
            .collect()
    }

    /// d(output)/d(input) at `x`. Analytic for linear and multiplicative;
    /// threshold uses a one-sided difference on the active branch and
    /// stochastic a central difference with common random numbers.
    pub fn derivative(&self, x: f64, stream: NoiseStream, component: usize) -> f64 {
        match self {
            OperatorSpec::Linear { alpha } => *alpha,
            OperatorSpec::Multiplicative { beta } => *beta,
            // right-hand slope at the kink
            OperatorSpec::Threshold { tau, slope, .. } => {
                if x >= *tau {
                    *slope
                } else {
                    0.0
                }
            }
            OperatorSpec::Stochastic { .. } => {
                let h = fd_step(x);
                (self.eval_scalar(x + h, stream, component) - self.eval_scalar(x - h, stream, component))
                    / (2.0 * h)
            }
            OperatorSpec::Delayed { inner, .. } => inner.derivative(x, stream, component),
        }
    }

    /// Default edge gain: the local linear sensitivity. `dst_init` is the
    /// target's initial value, used by multiplicative edges.
    pub fn default_gain(&self, dst_init: &[f64]) -> f64 {
        match self {
            OperatorSpec::Linear { alpha } => alpha.abs(),
            OperatorSpec::Multiplicative { beta } => dst_init
                .iter()
                .map(|m| (beta * m).abs())
                .fold(0.0, f64::max),
            OperatorSpec::Threshold { slope, .. } => slope.abs(),
            OperatorSpec::Stochastic { base, .. } => base.default_gain(dst_init),
            OperatorSpec::Delayed { inner, .. } => inner.default_gain(dst_init),
        }
    }
}

/// Finite-difference step `max(1e-6, 1e-6 |x|)`.
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Applies an edge operator to a source value. For delayed operators
/// `lagged` must hold the source value `delta_t` steps back; otherwise it is
/// ignored.
pub fn apply_operator(
    op: &OperatorSpec,
    input: &[f64],
    lagged: Option<&[f64]>,
    stream: NoiseStream,
) -> Result<Vec<f64>, MpgError> {
    let x = match op {
        OperatorSpec::Delayed { delta_t, .. } => lagged.ok_or_else(|| {
            MpgError::State(format!("no history available {delta_t} step(s) back"))
        })?,
        _ => input,
    };
    Ok(op.eval(x, stream))
}
