//! Entropic optimal transport fairness regularizer.
//!
//! The batch's positive-pair (diagonal) similarities form a discrete
//! distribution on the real line; each protected group's diagonal entries
//! form a sub-distribution. The regularizer sums the Sinkhorn distance
//! from the batch distribution to every group distribution present in
//! the batch, with squared-difference ground cost.
//!
//! The solver runs in the log domain on dual potentials; at the blur
//! magnitudes used here, dense kernel scaling would underflow
//! immediately. Gradients with respect to the support points use the
//! envelope theorem: the converged plan is held fixed and only the cost
//! matrix is differentiated.

#![allow(clippy::needless_range_loop)]

use crate::contrastive::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::numkit::{logsumexp, Matrix};
use std::collections::BTreeMap;

pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Finite weighted point set on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<DiscreteDist> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::Config(format!(
                "distribution needs matching nonempty support/weights, got {}/{}",
                support.len(),
                weights.len()
            )));
        }
        if !support.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "distribution support".into(),
            });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteDist { support, weights })
    }

    pub fn uniform(support: Vec<f64>) -> Result<DiscreteDist> {
        let n = support.len();
        DiscreteDist::new(support, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Result of one entropic-OT solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    /// `<P, C> + eps * KL(P || a (x) b)` at the returned plan.
    pub value: f64,
    pub plan: Matrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Uniform distribution over the batch's diagonal similarities.
pub fn diagonal_distribution(sim: &SimilarityMatrix) -> DiscreteDist {
    DiscreteDist::uniform(sim.diagonal()).expect("batch size >= 2")
}

/// Uniform distribution over the diagonal entries of one group's members.
pub fn group_distribution(
    sim: &SimilarityMatrix,
    attr_codes: &[u32],
    gamma: u32,
) -> Result<DiscreteDist> {
    let support: Vec<f64> = attr_codes
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == gamma)
        .map(|(i, _)| sim.w.get(i, i))
        .collect();
    if support.is_empty() {
        return Err(Error::EmptyGroup { gamma });
    }
    DiscreteDist::uniform(support)
}

/// Log-domain Sinkhorn for `min_P <P, C> + eps * KL(P || a (x) b)` with
/// `C_ij = (u_i - v_j)^2` over the scalar supports.
///
/// The dual potentials are warmed up by an epsilon-scaling schedule
/// (halving from the cost scale down to `eps`, a few iterations per
/// stage) before iterating at the target blur. Cold-started Sinkhorn
/// degrades to O(1/t) convergence when the optimal plan sits at a vertex
/// of the polytope; warm starting tracks the equilibrium continuum and
/// sidesteps that. The fixed point is unchanged.
///
/// Stops when the max marginal violation drops below `tol`; if `max_iter`
/// is exhausted first, the current plan is returned with `converged: false`.
pub fn sinkhorn(
    a: &DiscreteDist,
    b: &DiscreteDist,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    sinkhorn_impl(a, b, eps, max_iter, tol, None)
}

/// Like [`sinkhorn`] but records the marginal violation after every
/// iteration of the target-blur phase (used by convergence
/// instrumentation tests; warm-up stages are not traced).
pub fn sinkhorn_trace(
    a: &DiscreteDist,
    b: &DiscreteDist,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(SinkhornResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let res = sinkhorn_impl(a, b, eps, max_iter, tol, Some(&mut trace))?;
    Ok((res, trace))
}

/// Iterations spent per warm-up stage of the epsilon schedule.
const WARMUP_ITERS_PER_STAGE: usize = 8;

fn sinkhorn_impl(
    a: &DiscreteDist,
    b: &DiscreteDist,
    eps: f64,
    max_iter: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SinkhornResult> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Config(format!("sinkhorn eps must be positive, got {eps}")));
    }
    let m = a.len();
    let n = b.len();

    // Cost over scalar supports.
    let mut cost = Matrix::zeros(m, n);
    let mut max_cost = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let d = a.support[i] - b.support[j];
            cost.set(i, j, d * d);
            max_cost = max_cost.max(d * d);
        }
    }

    let log_a: Vec<f64> = a.weights.iter().map(|w| safe_ln(*w)).collect();
    let log_b: Vec<f64> = b.weights.iter().map(|w| safe_ln(*w)).collect();

    // Dual potentials. Updates keep one marginal exact; convergence is
    // measured on the other.
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut buf = vec![0.0; m.max(n)];
    let mut iterations = 0;
    let mut converged = false;

    let mut sweep = |f: &mut Vec<f64>, g: &mut Vec<f64>, stage_eps: f64| -> Result<()> {
        for i in 0..m {
            for j in 0..n {
                buf[j] = log_b[j] + (g[j] - cost.get(i, j)) / stage_eps;
            }
            f[i] = -stage_eps * logsumexp(&buf[..n])?;
        }
        for j in 0..n {
            for i in 0..m {
                buf[i] = log_a[i] + (f[i] - cost.get(i, j)) / stage_eps;
            }
            g[j] = -stage_eps * logsumexp(&buf[..m])?;
        }
        Ok(())
    };

    // Warm-up: halve the blur from the cost scale down to the target.
    let mut stage_eps = max_cost.max(eps);
    while stage_eps > eps && iterations < max_iter {
        for _ in 0..WARMUP_ITERS_PER_STAGE {
            if iterations >= max_iter {
                break;
            }
            sweep(&mut f, &mut g, stage_eps)?;
            iterations += 1;
        }
        stage_eps = (stage_eps * 0.5).max(eps);
    }

    // Target-blur phase with trace instrumentation the violation is
    // checked after every iteration; otherwise every 10th (and the last).
    let check_every = if trace.is_some() { 1 } else { 10 };
    let mut phase_iter = 0;
    while iterations < max_iter {
        sweep(&mut f, &mut g, eps)?;
        iterations += 1;
        phase_iter += 1;

        let do_check = phase_iter % check_every == 0 || iterations == max_iter;
        if do_check {
            let violation = marginal_violation(&f, &g, &log_a, &log_b, &cost, eps, a, b);
            if let Some(t) = trace.as_deref_mut() {
                t.push(violation);
            }
            if violation < tol {
                converged = true;
                break;
            }
        }
    }

    // Plan and value from the final potentials.
    let mut plan = Matrix::zeros(m, n);
    let mut value = 0.0;
    for i in 0..m {
        for j in 0..n {
            let log_p = log_a[i] + log_b[j] + (f[i] + g[j] - cost.get(i, j)) / eps;
            let p = log_p.exp();
            plan.set(i, j, p);
            // <P,C> + eps*KL telescopes to sum P_ij (f_i + g_j) because
            // ln(P/(a(x)b)) = (f + g - C)/eps by construction.
            value += p * (f[i] + g[j]);
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "sinkhorn value".into(),
        });
    }
    // Exact arithmetic gives value >= 0; tolerate convergence-level drift.
    if value < 0.0 && value > -1e-9 {
        value = 0.0;
    }

    Ok(SinkhornResult {
        value,
        plan,
        f,
        g,
        iterations,
        converged,
    })
}

fn safe_ln(w: f64) -> f64 {
    if w <= 0.0 {
        f64::NEG_INFINITY
    } else {
        w.ln()
    }
}

#[allow(clippy::too_many_arguments)]
fn marginal_violation(
    f: &[f64],
    g: &[f64],
    log_a: &[f64],
    log_b: &[f64],
    cost: &Matrix,
    eps: f64,
    a: &DiscreteDist,
    b: &DiscreteDist,
) -> f64 {
    let m = f.len();
    let n = g.len();
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..n {
            row += (log_a[i] + log_b[j] + (f[i] + g[j] - cost.get(i, j)) / eps).exp();
        }
        worst = worst.max((row - a.weights[i]).abs());
    }
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..m {
            col += (log_a[i] + log_b[j] + (f[i] + g[j] - cost.get(i, j)) / eps).exp();
        }
        worst = worst.max((col - b.weights[j]).abs());
    }
    worst
}

/// Per-group Sinkhorn values, their sum, and the gradient of the sum with
/// respect to the batch's diagonal similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessTerm {
    pub per_group: BTreeMap<u32, f64>,
    pub total: f64,
    pub grad_diag: Vec<f64>,
    /// True when every group solve reached the marginal tolerance.
    pub converged: bool,
}

/// Sums `S_eps(B_W, B_Wgamma)` over every group present in the batch and
/// accumulates the envelope-theorem gradient on the diagonal entries.
///
/// Sample `i` contributes through two roles: as source point `u_i` of the
/// batch distribution in every group term, and as a target point of its
/// own group's distribution.
pub fn fairness_loss(
    sim: &SimilarityMatrix,
    attr_codes: &[u32],
    eps: f64,
) -> Result<FairnessTerm> {
    fairness_loss_with(sim, attr_codes, eps, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

pub fn fairness_loss_with(
    sim: &SimilarityMatrix,
    attr_codes: &[u32],
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<FairnessTerm> {
    let b = sim.batch_size();
    if attr_codes.len() != b {
        return Err(Error::ShapeMismatch {
            op: "fairness_loss",
            left: (attr_codes.len(), 1),
            right: (b, 1),
        });
    }
    let batch_dist = diagonal_distribution(sim);

    let mut groups: Vec<u32> = attr_codes.to_vec();
    groups.sort_unstable();
    groups.dedup();

    let mut per_group = BTreeMap::new();
    let mut total = 0.0;
    let mut grad_diag = vec![0.0; b];
    let mut converged = true;

    for gamma in groups {
        let members: Vec<usize> = (0..b).filter(|&i| attr_codes[i] == gamma).collect();
        let group_dist = group_distribution(sim, attr_codes, gamma)?;
        let res = sinkhorn(&batch_dist, &group_dist, eps, max_iter, tol)?;

        // Source role: d/du_i sum_j P_ij (u_i - v_j)^2 = sum_j 2 P_ij (u_i - v_j).
        for i in 0..b {
            let u = batch_dist.support[i];
            let mut acc = 0.0;
            for (jpos, &jsample) in members.iter().enumerate() {
                let v = group_dist.support[jpos];
                let p = res.plan.get(i, jpos);
                acc += 2.0 * p * (u - v);
                // Target role for the group member that owns v.
                grad_diag[jsample] += 2.0 * p * (v - u);
            }
            grad_diag[i] += acc;
        }

        total += res.value;
        converged &= res.converged;
        per_group.insert(gamma, res.value);
    }

    Ok(FairnessTerm {
        per_group,
        total,
        grad_diag,
        converged,
    })
}

/// Envelope-theorem gradient of the fairness total w.r.t. each `W_ii`.
pub fn fairness_grad(sim: &SimilarityMatrix, attr_codes: &[u32], eps: f64) -> Result<Vec<f64>> {
    Ok(fairness_loss(sim, attr_codes, eps)?.grad_diag)
}

/// Central-difference gradient of the fairness total; the slow fallback
/// mode and the oracle the envelope gradient is tested against.
pub fn fairness_grad_fd(
    sim: &SimilarityMatrix,
    attr_codes: &[u32],
    eps: f64,
    h: f64,
) -> Result<Vec<f64>> {
    fairness_grad_fd_with(sim, attr_codes, eps, h, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

pub fn fairness_grad_fd_with(
    sim: &SimilarityMatrix,
    attr_codes: &[u32],
    eps: f64,
    h: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let b = sim.batch_size();
    let mut grad = vec![0.0; b];
    for i in 0..b {
        let mut plus = sim.clone();
        plus.w.set(i, i, plus.w.get(i, i) + h);
        let mut minus = sim.clone();
        minus.w.set(i, i, minus.w.get(i, i) - h);
        let fp = fairness_loss_with(&plus, attr_codes, eps, max_iter, tol)?.total;
        let fm = fairness_loss_with(&minus, attr_codes, eps, max_iter, tol)?.total;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn sim_from_diag(diag: &[f64]) -> SimilarityMatrix {
        let b = diag.len();
        let mut w = Matrix::zeros(b, b);
        for (i, &d) in diag.iter().enumerate() {
            w.set(i, i, d);
        }
        SimilarityMatrix { w, temp: 1.0 }
    }

    /// Random support with a minimum pairwise gap of 0.4/n; plain Sinkhorn
    /// crawls on near-duplicate atoms, which is not what these properties
    /// are about.
    fn spread_support(rng: &mut Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|i| (i as f64 + 0.6 * rng.next_f64()) / n as f64)
            .collect();
        rng.shuffle(&mut v);
        v
    }

    #[test]
    fn diagonal_distribution_reads_diag() {
        let sim = sim_from_diag(&[0.3, 0.7]);
        let d = diagonal_distribution(&sim);
        assert_eq!(d.support, vec![0.3, 0.7]);
        assert_eq!(d.weights, vec![0.5, 0.5]);
        let total: f64 = d.weights.iter().sum();
        approx(total, 1.0, 1e-15);
    }

    #[test]
    fn group_distribution_selects_members() {
        let sim = sim_from_diag(&[0.1, 0.2, 0.3, 0.4]);
        let d = group_distribution(&sim, &[0, 1, 0, 1], 1).unwrap();
        assert_eq!(d.support, vec![0.2, 0.4]);
        assert_eq!(d.weights, vec![0.5, 0.5]);

        let all = group_distribution(&sim, &[2, 2, 2, 2], 2).unwrap();
        assert_eq!(all, diagonal_distribution(&sim));
    }

    #[test]
    fn absent_group_signals() {
        let sim = sim_from_diag(&[0.1, 0.2]);
        assert!(matches!(
            group_distribution(&sim, &[0, 0], 5).unwrap_err(),
            Error::EmptyGroup { gamma: 5 }
        ));
    }

    #[test]
    fn sinkhorn_single_point_pair_exact() {
        let a = DiscreteDist::uniform(vec![0.2]).unwrap();
        let b = DiscreteDist::uniform(vec![0.5]).unwrap();
        for eps in [1e-1, 1e-2, 1e-3] {
            let res = sinkhorn(&a, &b, eps, 100, 1e-12).unwrap();
            approx(res.value, 0.09, 1e-15);
            assert!(res.converged);
            approx(res.plan.get(0, 0), 1.0, 1e-12);
        }
    }

    #[test]
    fn sinkhorn_self_distance_bounded_by_entropy() {
        let mut rng = Rng::new(12);
        for n in [2usize, 4, 8] {
            let d = DiscreteDist::uniform(spread_support(&mut rng, n)).unwrap();
            for eps in [1e-1, 1e-2] {
                let res = sinkhorn(&d, &d, eps, 20_000, 1e-10).unwrap();
                assert!(res.converged, "n={n} eps={eps}");
                assert!(
                    res.value <= eps * (n as f64).ln() + 1e-9,
                    "n={n} eps={eps}: {} > {}",
                    res.value,
                    eps * (n as f64).ln()
                );
                assert!(res.value >= 0.0);
            }
        }
    }

    #[test]
    fn sinkhorn_symmetric() {
        let mut rng = Rng::new(19);
        for _ in 0..10 {
            let a = DiscreteDist::uniform(spread_support(&mut rng, 3)).unwrap();
            let b = DiscreteDist::uniform(spread_support(&mut rng, 2)).unwrap();
            let eps = 1e-2;
            let ab = sinkhorn(&a, &b, eps, 50_000, 1e-11).unwrap();
            let ba = sinkhorn(&b, &a, eps, 50_000, 1e-11).unwrap();
            assert!(ab.converged && ba.converged);
            approx(ab.value, ba.value, 1e-9);
        }
    }

    #[test]
    fn sinkhorn_marginals_match_on_convergence() {
        let mut rng = Rng::new(7);
        for _ in 0..10 {
            let m = 2 + rng.next_range(3);
            let n = 1 + rng.next_range(3);
            let a = DiscreteDist::uniform(spread_support(&mut rng, m)).unwrap();
            let b = DiscreteDist::uniform(spread_support(&mut rng, n)).unwrap();
            let tol = 1e-9;
            let res = sinkhorn(&a, &b, 5e-3, 100_000, tol).unwrap();
            assert!(res.converged);
            for i in 0..m {
                let row: f64 = (0..n).map(|j| res.plan.get(i, j)).sum();
                assert!((row - a.weights[i]).abs() < tol * 10.0);
            }
            for j in 0..n {
                let col: f64 = (0..m).map(|i| res.plan.get(i, j)).sum();
                assert!((col - b.weights[j]).abs() < tol * 10.0);
            }
            assert!(res.plan.data().iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn sinkhorn_violation_nonincreasing() {
        let mut rng = Rng::new(3);
        for seed in 0..5 {
            let _ = seed;
            let a = DiscreteDist::uniform((0..4).map(|_| rng.next_f64()).collect()).unwrap();
            let b = DiscreteDist::uniform((0..3).map(|_| rng.next_f64()).collect()).unwrap();
            let (_, trace) = sinkhorn_trace(&a, &b, 1e-2, 5000, 1e-10).unwrap();
            for w in trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-9) + 1e-15,
                    "violation increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn sinkhorn_rejects_bad_eps() {
        let a = DiscreteDist::uniform(vec![0.1]).unwrap();
        assert!(sinkhorn(&a, &a, 0.0, 10, 1e-9).is_err());
        assert!(sinkhorn(&a, &a, -1.0, 10, 1e-9).is_err());
    }

    #[test]
    fn fairness_single_group_self_bound() {
        let sim = sim_from_diag(&[0.1, 0.5, 0.9, 0.3]);
        let term = fairness_loss(&sim, &[0, 0, 0, 0], 1e-2).unwrap();
        assert_eq!(term.per_group.len(), 1);
        assert!(term.total <= 1e-2 * 4.0f64.ln() + 1e-9);
        approx(
            term.total,
            term.per_group.values().sum::<f64>(),
            1e-12,
        );
    }

    #[test]
    fn fairness_two_identical_groups_bound() {
        // codes (0,1,0,1) with diag arranged so both groups share the same
        // multiset as each other; each term is then a transport between
        // the batch distribution and its "half", still cheap but nonzero.
        // The clean bound case: both groups equal to the full diagonal
        // multiset, realized with duplicated support values.
        let sim = sim_from_diag(&[0.2, 0.2, 0.8, 0.8]);
        let term = fairness_loss(&sim, &[0, 1, 0, 1], 1e-2).unwrap();
        // each group distribution = {0.2, 0.8} uniform = batch distribution
        assert!(term.total <= 2.0 * 1e-2 * 4.0f64.ln() + 1e-9);
    }

    #[test]
    fn fairness_two_singleton_groups_match_oracle_structure() {
        let sim = sim_from_diag(&[0.1, 0.9]);
        let term = fairness_loss(&sim, &[0, 1], 1e-3).unwrap();
        let batch = diagonal_distribution(&sim);
        let d0 = DiscreteDist::uniform(vec![0.1]).unwrap();
        let d1 = DiscreteDist::uniform(vec![0.9]).unwrap();
        let s0 = sinkhorn(&batch, &d0, 1e-3, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let s1 = sinkhorn(&batch, &d1, 1e-3, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        approx(term.total, s0.value + s1.value, 1e-12);
        approx(term.per_group[&0], s0.value, 1e-15);
        approx(term.per_group[&1], s1.value, 1e-15);
    }

    #[test]
    fn self_transport_gradient_vanishes() {
        // well-separated points relative to eps: off-diagonal plan mass is
        // negligible, so the envelope gradient is ~0 per coordinate.
        let sim = sim_from_diag(&[0.0, 0.25, 0.55, 0.9]);
        let grad = fairness_grad(&sim, &[0, 0, 0, 0], 1e-3).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-6, "gradient component {g}");
        }
    }

    #[test]
    fn gradient_sums_to_zero_per_translation_invariance() {
        let mut rng = Rng::new(99);
        for _ in 0..5 {
            let diag: Vec<f64> = (0..6).map(|_| rng.next_f64()).collect();
            let sim = sim_from_diag(&diag);
            let codes = [0u32, 1, 0, 1, 0, 1];
            let grad = fairness_grad(&sim, &codes, 1e-2).unwrap();
            let total: f64 = grad.iter().sum();
            assert!(total.abs() < 1e-8, "gradient sum {total}");
        }
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        let mut rng = Rng::new(55);
        for trial in 0..10 {
            let diag = spread_support(&mut rng, 6);
            let sim = sim_from_diag(&diag);
            let codes: Vec<u32> = (0..6).map(|i| (i % 2) as u32).collect();
            let eps = 1e-2;
            let analytic = fairness_loss_with(&sim, &codes, eps, 100_000, 1e-10)
                .unwrap()
                .grad_diag;
            let fd = fairness_grad_fd_with(&sim, &codes, eps, 1e-5, 100_000, 1e-10).unwrap();
            for (a, f) in analytic.iter().zip(&fd) {
                let rel = (a - f).abs() / f.abs().max(1e-4);
                assert!(rel < 1e-3, "trial {trial}: {a} vs {f} (rel {rel})");
            }
        }
    }
}
