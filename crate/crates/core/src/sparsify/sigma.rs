use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{log_quadratic_form, GazeGraph};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    /// Largest observed `max(rho, 1/rho)` with `rho = x'L_G x / x'L_S x`;
    /// infinite when some probe sees no sparsified structure at all.
    pub sigma: f64,
    /// Largest observed `|x'L_S x / x'L_G x - 1|`.
    pub alpha: f64,
    /// Probes that produced a ratio (probes with `x'L_G x = 0` are skipped).
    pub probes_used: usize,
}

/// Probe-based estimate of how well `s` spectrally approximates `g`.
///
/// Probes are Gaussian vectors with each connected component of `g` centred,
/// so they avoid the trivial kernel. Quadratic forms are compared in the log
/// domain on the unnormalized weights, so the ratio is exact even when the
/// weights themselves are not representable.
pub fn spectral_sigma(g: &GazeGraph, s: &GazeGraph, probes: usize, seed: u64) -> Result<SigmaEstimate> {
    if g.node_count() != s.node_count() {
        return Err(Error::Argument(format!(
            "graphs have {} and {} nodes",
            g.node_count(),
            s.node_count()
        )));
    }
    if probes == 0 {
        return Err(Error::Argument("need at least one probe".into()));
    }
    let n = g.node_count();
    let (label, comps) = g.components();
    let mut size = vec![0usize; comps];
    for &c in &label {
        size[c] += 1;
    }
    let mut rng = seed::rng(seed);
    let mut est = SigmaEstimate { sigma: 1.0, alpha: 0.0, probes_used: 0 };
    for _ in 0..probes {
        let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut mean = vec![0.0; comps];
        for v in 0..n {
            mean[label[v]] += x[v] / size[label[v]] as f64;
        }
        for v in 0..n {
            x[v] -= mean[label[v]];
        }
        let lg = log_quadratic_form(g, &x)?;
        if lg == f64::NEG_INFINITY {
            continue;
        }
        let ls = log_quadratic_form(s, &x)?;
        est.probes_used += 1;
        if ls == f64::NEG_INFINITY {
            est.sigma = f64::INFINITY;
            est.alpha = est.alpha.max(1.0);
            continue;
        }
        let log_rho = lg - ls;
        est.sigma = est.sigma.max(log_rho.abs().exp());
        est.alpha = est.alpha.max(((-log_rho).exp() - 1.0).abs());
    }
    Ok(est)
}
