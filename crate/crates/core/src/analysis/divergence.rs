//! Divergences between distributions, state marginals and trajectory laws.

use super::occupancy::{policy_transition, propagate};
use super::AnalysisError;
use crate::envs::{TabularMdp, TabularPolicy};

/// `D_KL(p || q)` in nats. Infinite divergence is an error naming the index.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::Shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(AnalysisError::InfiniteKl {
                    detail: format!("p[{i}] = {pi} but q[{i}] = 0"),
                });
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `E_p[log q]`.
pub fn expected_log(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(AnalysisError::InfiniteKl {
                    detail: format!("log q[{i}] with q[{i}] = 0 under p[{i}] = {pi}"),
                });
            }
            acc += pi * qi.ln();
        }
    }
    Ok(acc)
}

/// Split of the trajectory-level KL between two policies in the same MDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlChain {
    /// `D_KL(P_a(τ) || P_b(τ))` over `(s_0, a_0, ..., s_{H-1}, a_{H-1})`.
    pub total: f64,
    /// `E_{s_0 ~ p0} D_KL(π_a(.|s_0) || π_b(.|s_0))`.
    pub initial: f64,
    /// `E_{(s_0,a_0) ~ P_a} D_KL(P_a(τ_{1:} | s_0, a_0) || P_b(τ_{1:} | s_0, a_0))`.
    pub conditional: f64,
}

impl KlChain {
    pub fn residual(&self) -> f64 {
        (self.total - self.initial - self.conditional).abs()
    }
}

fn per_state_kl(
    mdp: &TabularMdp,
    pa: &TabularPolicy,
    pb: &TabularPolicy,
) -> Vec<Result<f64, AnalysisError>> {
    (0..mdp.n_states())
        .map(|s| {
            kl_divergence(pa.row(s), pb.row(s)).map_err(|_| AnalysisError::InfiniteKl {
                detail: format!("π_a puts mass on an action π_b excludes at state {s}"),
            })
        })
        .collect()
}

/// Expected per-state policy KL summed along `steps` steps of the marginal
/// chain starting at `d`. States with an infinite KL only matter if reached.
fn accumulate(
    mut d: Vec<f64>,
    kernel: &[f64],
    kls: &[Result<f64, AnalysisError>],
    steps: usize,
) -> Result<f64, AnalysisError> {
    let n = d.len();
    let mut acc = 0.0;
    for t in 0..steps {
        for (s, &ds) in d.iter().enumerate() {
            if ds > 0.0 {
                match &kls[s] {
                    Ok(k) => acc += ds * k,
                    Err(e) => return Err(e.clone()),
                }
            }
        }
        if t + 1 < steps {
            d = propagate(&d, kernel, n);
        }
    }
    Ok(acc)
}

/// Trajectory KL over `horizon` decision steps and its chain-rule split into
/// the first-action term and the remainder conditioned on `(s_0, a_0)`.
///
/// `total` is computed from the unconditional state marginals, `conditional`
/// from the marginals conditioned on each `(s_0, a_0)`; the two routes must
/// agree through the chain rule, otherwise [`AnalysisError::ChainRule`] is
/// returned.
pub fn kl_chain_decomposition(
    mdp: &TabularMdp,
    pa: &TabularPolicy,
    pb: &TabularPolicy,
    horizon: usize,
) -> Result<KlChain, AnalysisError> {
    pa.check_compatible(mdp)?;
    pb.check_compatible(mdp)?;
    if horizon == 0 {
        return Err(AnalysisError::Shape("horizon must be at least 1".into()));
    }
    let n = mdp.n_states();
    let kernel = policy_transition(mdp, pa);
    let kls = per_state_kl(mdp, pa, pb);

    let total = accumulate(mdp.initial().to_vec(), &kernel, &kls, horizon)?;
    let initial = accumulate(mdp.initial().to_vec(), &kernel, &kls, 1)?;

    let mut conditional = 0.0;
    if horizon > 1 {
        for s0 in 0..n {
            let p0 = mdp.initial()[s0];
            if p0 == 0.0 {
                continue;
            }
            for (a0, &pa0) in pa.row(s0).iter().enumerate() {
                if pa0 == 0.0 {
                    continue;
                }
                let d1 = mdp.next_dist(s0, a0).to_vec();
                conditional += p0 * pa0 * accumulate(d1, &kernel, &kls, horizon - 1)?;
            }
        }
    }
    let chain = KlChain {
        total,
        initial,
        conditional,
    };
    let tol = 1e-10 * total.abs().max(1.0);
    if chain.residual() > tol {
        return Err(AnalysisError::ChainRule {
            residual: chain.residual(),
        });
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_identical_is_zero() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_support_mismatch_is_reported() {
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(AnalysisError::InfiniteKl { .. })
        ));
        // Zero mass on the missing outcome is fine.
        assert!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() > 0.0);
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn equal_policies_have_zero_chain_terms() {
        let mdp = TabularMdp::default_grid();
        let pi = TabularPolicy::uniform(25, 4);
        let c = kl_chain_decomposition(&mdp, &pi, &pi, 10).unwrap();
        assert_eq!((c.total, c.initial, c.conditional), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unreachable_support_mismatch_is_ignored() {
        // Deterministic chain 0 -> 1 -> 2; policies disagree with infinite KL
        // only at state 2, which horizon 2 never reaches.
        let mut p = vec![0.0; 3 * 2 * 3];
        for s in 0..3 {
            for a in 0..2 {
                p[(s * 2 + a) * 3 + (s + 1).min(2)] = 1.0;
            }
        }
        let mdp = TabularMdp::new(3, 2, p, vec![0.0; 3], 0.9, vec![1.0, 0.0, 0.0]).unwrap();
        let pa = TabularPolicy::new(3, 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let pb = TabularPolicy::new(3, 2, vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.0]).unwrap();
        assert_eq!(
            kl_chain_decomposition(&mdp, &pa, &pb, 2).unwrap().total,
            0.0
        );
        assert!(matches!(
            kl_chain_decomposition(&mdp, &pa, &pb, 3),
            Err(AnalysisError::InfiniteKl { .. })
        ));
    }
}
