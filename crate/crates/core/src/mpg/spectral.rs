use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use super::graph::{strongly_connected, Graph};
use super::linearize::{linearize, PropagationMatrix};
use super::state::State;
use super::MpgError;

const REL_TOL: f64 = 1e-9;
const MAX_SQUARINGS: u32 = 20;
const MARGIN: f64 = 1e-9;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub rho: f64,
    /// Normalised leading power iterate; `None` when the iterates vanish.
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Divergent,
}

impl Stability {
    pub fn from_rho(rho: f64) -> Self {
        if rho < 1.0 - MARGIN {
            Stability::Stable
        } else if rho > 1.0 + MARGIN {
            Stability::Divergent
        } else {
            Stability::Marginal
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Divergent => "divergent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stability: Stability,
    pub rho: f64,
    pub direction: Option<Vec<f64>>,
}

fn inf_norm(m: &[f64], n: usize) -> f64 {
    m.chunks(n)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn square(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = m[i * n + k];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += a * m[k * n + j];
            }
        }
    }
    out
}

/// Gelfand estimate by repeated squaring. W^k is kept normalised with its
/// log norm tracked separately, and the ratio ‖B^2k‖ / ‖B^k‖ is used so the
/// constant in ‖B^k‖ ~ C ρ^k cancels. k doubles until the estimate moves by
/// less than 1e-9 relative, up to k = 2^20.
fn gelfand(block: Vec<f64>, n: usize) -> f64 {
    let norm = inf_norm(&block, n);
    if norm == 0.0 {
        return 0.0;
    }
    let mut p: Vec<f64> = block.iter().map(|v| v / norm).collect();
    let mut log_norm = norm.ln();
    let mut k = 1.0f64;
    let mut estimate = f64::NAN;
    for _ in 0..MAX_SQUARINGS {
        let sq = square(&p, n);
        let s = inf_norm(&sq, n);
        if s == 0.0 {
            // nilpotent block
            return 0.0;
        }
        let next = ((log_norm + s.ln()) / k).exp();
        let converged = (next - estimate).abs() <= REL_TOL * next;
        estimate = next;
        log_norm = 2.0 * log_norm + s.ln();
        k *= 2.0;
        p = sq.into_iter().map(|v| v / s).collect();
        if converged && k >= 4.0 {
            break;
        }
    }
    estimate
}

/// Largest eigenvalue modulus from a real Schur form; `None` if the QR
/// iteration does not converge.
fn schur_radius(block: &[f64], n: usize) -> Option<f64> {
    let m = DMatrix::from_row_slice(n, n, block);
    let schur = m.try_schur(f64::EPSILON, SCHUR_MAX_ITER)?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn power_direction(w: &PropagationMatrix) -> Option<Vec<f64>> {
    let n = w.dim();
    if n == 0 {
        return None;
    }
    let mut v = vec![1.0; n];
    for _ in 0..1000 {
        let next = w.mul_vec(&v);
        let norm = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
        let delta = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    Some(v)
}

/// Spectral radius, computed block by block over the strongly connected
/// components of the nonzero pattern. Singleton blocks contribute their
/// diagonal magnitude exactly, so (block-)triangular matrices are exact.
/// Larger blocks use the real Schur form, falling back to a squaring
/// estimate if QR fails to converge.
pub fn spectral_radius(w: &PropagationMatrix) -> SpectralEstimate {
    let n = w.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| (0..n).filter(|&c| c != r && w.get(r, c) != 0.0).collect())
        .collect();
    let mut rho = 0.0f64;
    for comp in strongly_connected(n, &adj) {
        let r = if comp.len() == 1 {
            w.get(comp[0], comp[0]).abs()
        } else {
            let m = comp.len();
            let mut block = Vec::with_capacity(m * m);
            for &i in &comp {
                for &j in &comp {
                    block.push(w.get(i, j));
                }
            }
            schur_radius(&block, m).unwrap_or_else(|| gelfand(block, m))
        };
        rho = rho.max(r);
    }
    SpectralEstimate {
        rho,
        direction: power_direction(w),
    }
}

/// Stable iff ρ < 1 - 1e-9, divergent iff ρ > 1 + 1e-9.
pub fn stability_classification(graph: &Graph, state: &State) -> Result<StabilityReport, MpgError> {
    let est = spectral_radius(&linearize(graph, state)?);
    Ok(StabilityReport {
        stability: Stability::from_rho(est.rho),
        rho: est.rho,
        direction: est.direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(rows: &[Vec<f64>]) -> f64 {
        spectral_radius(&PropagationMatrix::from_rows(rows).unwrap()).rho
    }

    #[test]
    fn diagonal() {
        assert_eq!(rho(&[vec![0.5, 0.0], vec![0.0, 0.5]]), 0.5);
    }

    #[test]
    fn strictly_lower_triangular_is_zero() {
        let mut rows = vec![vec![0.0; 5]; 5];
        for i in 1..5 {
            rows[i][i - 1] = 0.5 + i as f64;
        }
        let est = spectral_radius(&PropagationMatrix::from_rows(&rows).unwrap());
        assert_eq!(est.rho, 0.0);
        assert!(est.direction.is_none());
    }

    #[test]
    fn swap_matrix() {
        assert!((rho(&[vec![0.0, 2.0], vec![2.0, 0.0]]) - 2.0).abs() < 1e-12);
        let r = rho(&[vec![0.0, 1.0], vec![1.2, 0.0]]);
        assert!((r - 1.2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn general_block_against_eigenvalues() {
        // eigenvalues 0.9 and -0.4
        let r = rho(&[vec![0.5, 0.3], vec![0.6, 0.0]]);
        let disc: f64 = 0.25 + 4.0 * 0.18;
        let expected = (0.5 + disc.sqrt()) / 2.0;
        assert!((r - expected).abs() < 1e-9, "{r} vs {expected}");
    }

    #[test]
    fn cancelling_block_is_nilpotent() {
        assert_eq!(rho(&[vec![1.0, 1.0], vec![-1.0, -1.0]]), 0.0);
    }

    #[test]
    fn empty_matrix() {
        let est = spectral_radius(&PropagationMatrix::from_rows(&[]).unwrap());
        assert_eq!(est.rho, 0.0);
        assert_eq!(Stability::from_rho(est.rho), Stability::Stable);
    }

    #[test]
    fn classification_margins() {
        assert_eq!(Stability::from_rho(1.0), Stability::Marginal);
        assert_eq!(Stability::from_rho(1.0 + 1e-6), Stability::Divergent);
        assert_eq!(Stability::from_rho(0.999), Stability::Stable);
    }
}
