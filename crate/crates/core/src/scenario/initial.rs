use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::grid::Grid;

/// Exponent floor for Gaussian-type presets so far tails stay positive.
const LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub center: Vec<f64>,
    /// Kernel time of the component, `(4πs)^{-n/2} exp(−|x−c|²/(4s))`.
    pub spread: f64,
}

/// Initial-datum presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialDatum {
    Constant {
        value: f64,
    },
    /// `a + b Π cos(k π (x_i − lower_i)/L_i)`
    NeumannCosine {
        a: f64,
        b: f64,
        k: f64,
    },
    /// Heat kernel at time `t0` centred at `center`, times `mass`.
    Gaussian {
        t0: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        mass: f64,
    },
    GaussianMixture {
        components: Vec<MixtureComponent>,
    },
    /// `exp(−½⟨Qx, x⟩ + ⟨b, x⟩ + c)`
    LogQuadratic {
        q: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    /// `floor + Π (1 + cos(π (x_i − c_i)/r))/2` on the support.
    Bump {
        center: Vec<f64>,
        radius: f64,
        floor: f64,
    },
    /// Exponential of a seeded random concave quadratic plus low-frequency
    /// cosine perturbations; the scenario seed drives the generator.
    RandomLogConcave {
        #[serde(default = "three")]
        modes: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn three() -> usize {
    3
}

fn component(v: &[f64], k: usize) -> f64 {
    v.get(k).copied().unwrap_or(0.0)
}

/// Fully resolved random log-concave datum.
#[derive(Debug, Clone, PartialEq)]
struct RandomDatum {
    center: [f64; 2],
    q: [[f64; 2]; 2],
    c: f64,
    /// `(axis, wavenumber, amplitude)`
    waves: Vec<(usize, f64, f64)>,
}

fn random_datum(grid: &Grid, seed: u64, modes: usize) -> RandomDatum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.domain();
    let mut center = [0.0; 2];
    for (k, c) in center.iter_mut().enumerate().take(grid.dim()) {
        let s: f64 = rng.gen_range(0.2..0.8);
        *c = d.lower()[k] + s * d.length(k);
    }
    let scale = 1.0 / d.length(0).max(if grid.dim() > 1 { d.length(1) } else { 0.0 }).powi(2);
    let l1: f64 = rng.gen_range(0.5..6.0) * scale;
    let l2: f64 = rng.gen_range(0.5..6.0) * scale;
    let th: f64 = rng.gen_range(0.0..PI);
    let q = if grid.dim() == 1 {
        [[l1, 0.0], [0.0, 0.0]]
    } else {
        let (s, c) = th.sin_cos();
        [
            [l1 * c * c + l2 * s * s, (l1 - l2) * s * c],
            [(l1 - l2) * s * c, l1 * s * s + l2 * c * c],
        ]
    };
    let c = rng.gen_range(-1.0..1.0);
    let mut waves = Vec::new();
    for axis in 0..grid.dim() {
        for m in 1..=modes {
            let amp: f64 = rng.gen_range(-0.15..0.15) / (m * m) as f64;
            waves.push((axis, m as f64, amp));
        }
    }
    RandomDatum {
        center,
        q,
        c,
        waves,
    }
}

impl InitialDatum {
    pub fn name(&self) -> &'static str {
        match self {
            InitialDatum::Constant { .. } => "constant",
            InitialDatum::NeumannCosine { .. } => "neumann_cosine",
            InitialDatum::Gaussian { .. } => "gaussian",
            InitialDatum::GaussianMixture { .. } => "gaussian_mixture",
            InitialDatum::LogQuadratic { .. } => "log_quadratic",
            InitialDatum::Bump { .. } => "bump",
            InitialDatum::RandomLogConcave { .. } => "random_log_concave",
        }
    }

    /// Start time the datum prescribes, if any.
    pub fn start_time(&self) -> Option<f64> {
        match self {
            InitialDatum::Gaussian { t0, .. } => Some(*t0),
            _ => None,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::validation("initial", m));
        let check_len = |v: &[f64], what: &str| {
            if !v.is_empty() && v.len() != dim {
                return Err(Error::validation(
                    "initial",
                    format!("{what} has {} entries, expected {dim}", v.len()),
                ));
            }
            Ok(())
        };
        match self {
            InitialDatum::Constant { value } if !(*value > 0.0) => {
                bad(format!("constant value must be positive, got {value}"))
            }
            InitialDatum::NeumannCosine { a, b, .. } if !(a - b.abs() > 0.0) => {
                bad(format!("need a > |b| for a positive datum, got a = {a}, b = {b}"))
            }
            InitialDatum::Gaussian { t0, center, mass } => {
                check_len(center, "center")?;
                if !(*t0 > 0.0) || !(*mass > 0.0) {
                    return bad(format!("gaussian needs t0 > 0 and mass > 0, got {t0}, {mass}"));
                }
                Ok(())
            }
            InitialDatum::GaussianMixture { components } => {
                if components.is_empty() {
                    return bad("gaussian_mixture needs at least one component".into());
                }
                for c in components {
                    check_len(&c.center, "component center")?;
                    if !(c.weight > 0.0 && c.spread > 0.0) {
                        return bad("mixture weights and spreads must be positive".into());
                    }
                }
                Ok(())
            }
            InitialDatum::LogQuadratic { q, b, .. } => {
                check_len(b, "b")?;
                if q.len() != dim || q.iter().any(|row| row.len() != dim) {
                    return bad(format!("q must be a {dim}x{dim} matrix"));
                }
                if dim == 2 && (q[0][1] - q[1][0]).abs() > 1e-14 * q[0][1].abs().max(1.0) {
                    return bad("q must be symmetric".into());
                }
                Ok(())
            }
            InitialDatum::Bump {
                center,
                radius,
                floor,
            } => {
                check_len(center, "center")?;
                if !(*radius > 0.0 && *floor > 0.0) {
                    return bad("bump needs radius > 0 and floor > 0".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Samples the datum on `grid` at absolute time `t0`.
    pub fn sample(&self, grid: &Arc<Grid>, t0: f64, seed: u64) -> Result<ScalarField> {
        let dim = grid.dim();
        let random = match self {
            InitialDatum::RandomLogConcave { modes } => Some(random_datum(grid, seed, *modes)),
            _ => None,
        };
        let lower = grid.domain().lower().to_vec();
        let lengths: Vec<f64> = (0..dim).map(|k| grid.domain().length(k)).collect();
        ScalarField::from_fn(grid.clone(), t0, |x| match self {
            InitialDatum::Constant { value } => *value,
            InitialDatum::NeumannCosine { a, b, k } => {
                a + b * (0..dim)
                    .map(|i| (k * PI * (x[i] - lower[i]) / lengths[i]).cos())
                    .product::<f64>()
            }
            InitialDatum::Gaussian { t0, center, mass } => {
                mass * kernel(dim, *t0, x, |k| component(center, k))
            }
            InitialDatum::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * kernel(dim, c.spread, x, |k| component(&c.center, k)))
                .sum(),
            InitialDatum::LogQuadratic { q, b, c } => {
                let mut e = *c;
                for i in 0..dim {
                    e += component(b, i) * x[i];
                    for j in 0..dim {
                        e -= 0.5 * q[i][j] * x[i] * x[j];
                    }
                }
                e.max(LOG_FLOOR).exp()
            }
            InitialDatum::Bump {
                center,
                radius,
                floor,
            } => {
                floor
                    + (0..dim)
                        .map(|k| {
                            let s = (x[k] - component(center, k)) / radius;
                            if s.abs() < 1.0 {
                                0.5 * (1.0 + (PI * s).cos())
                            } else {
                                0.0
                            }
                        })
                        .product::<f64>()
            }
            InitialDatum::RandomLogConcave { .. } => {
                let r = random.as_ref().expect("random datum resolved");
                let d = [x[0] - r.center[0], x[1] - r.center[1]];
                let mut e = r.c;
                for i in 0..dim {
                    for j in 0..dim {
                        e -= 0.5 * r.q[i][j] * d[i] * d[j];
                    }
                }
                for &(axis, m, amp) in &r.waves {
                    e += amp * (m * PI * (x[axis] - lower[axis]) / lengths[axis]).cos();
                }
                e.exp()
            }
        })
    }

    /// Closed-form full-space (or Neumann-box for the cosine) solution at
    /// elapsed time `t` after the datum, where one is available.
    pub fn exact_solution(&self, dim: usize, lower: &[f64], lengths: &[f64], x: [f64; 2], t: f64) -> Option<f64> {
        match self {
            InitialDatum::Constant { value } => Some(*value),
            InitialDatum::NeumannCosine { a, b, k } => {
                let mut prod = 1.0;
                let mut rate = 0.0;
                for i in 0..dim {
                    let w = k * PI / lengths[i];
                    prod *= (w * (x[i] - lower[i])).cos();
                    rate += w * w;
                }
                Some(a + b * (-rate * t).exp() * prod)
            }
            InitialDatum::Gaussian { t0, center, mass } => {
                Some(mass * kernel(dim, t0 + t, x, |k| component(center, k)))
            }
            InitialDatum::GaussianMixture { components } => Some(
                components
                    .iter()
                    .map(|c| c.weight * kernel(dim, c.spread + t, x, |k| component(&c.center, k)))
                    .sum(),
            ),
            InitialDatum::LogQuadratic { q, b, c } => {
                Some(log_quadratic_flow(dim, q, b, *c, x, t).exp())
            }
            _ => None,
        }
    }
}

fn kernel(dim: usize, s: f64, x: [f64; 2], center: impl Fn(usize) -> f64) -> f64 {
    let r2: f64 = (0..dim).map(|k| (x[k] - center(k)).powi(2)).sum();
    (4.0 * PI * s).powf(-(dim as f64) / 2.0) * (-r2 / (4.0 * s)).max(LOG_FLOOR).exp()
}

/// `log` of the Gaussian convolution of `exp(−½⟨Qx,x⟩ + ⟨b,x⟩ + c)` at time
/// `t`: with `M = (I + 2tQ)^{-1}` it equals
/// `c − ½ log det(I + 2tQ) − ½⟨QMx, x⟩ + ⟨Mb, x⟩ + t⟨Mb, b⟩`.
fn log_quadratic_flow(dim: usize, q: &[Vec<f64>], b: &[f64], c: f64, x: [f64; 2], t: f64) -> f64 {
    let mut a = [[1.0, 0.0], [0.0, 1.0]];
    for i in 0..dim {
        for j in 0..dim {
            a[i][j] += 2.0 * t * q[i][j];
        }
    }
    let (det, m) = if dim == 1 {
        (a[0][0], [[1.0 / a[0][0], 0.0], [0.0, 0.0]])
    } else {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        (
            det,
            [
                [a[1][1] / det, -a[0][1] / det],
                [-a[1][0] / det, a[0][0] / det],
            ],
        )
    };
    let bv = [component(b, 0), component(b, 1)];
    let mut qm = [[0.0; 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            qm[i][j] = (0..dim).map(|k| q[i][k] * m[k][j]).sum();
        }
    }
    let mb: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| m[i][j] * bv[j]).sum()).collect();
    let mut e = c - 0.5 * det.ln();
    for i in 0..dim {
        e += mb[i] * x[i] + t * mb[i] * bv[i];
        for j in 0..dim {
            e -= 0.5 * qm[i][j] * x[i] * x[j];
        }
    }
    e
}
