//! Bayesian model selection between the prismatic and revolute candidates.
//!
//! Each candidate is fitted by MLESAC and scored with the Bayesian
//! Information Criterion, BIC = -2 log L + k ln N. Posterior model
//! probabilities follow from the BIC differences under a uniform model
//! prior; the winner is the candidate with the lowest BIC.

use thiserror::Error;

use crate::kinfit::{
    mlesac_fit, FitResult, KinfitError, MlesacConfig, ModelKind, Trajectory,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelselError {
    #[error("model selection needs at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("no candidate model could be fitted: {prismatic}; {revolute}")]
    NoCandidate {
        prismatic: KinfitError,
        revolute: KinfitError,
    },
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub kind: ModelKind,
    pub bic: f64,
    pub posterior: f64,
}

/// Scores for every candidate that fitted, plus the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPosterior {
    pub candidates: Vec<CandidateScore>,
    pub winner: ModelKind,
}

impl ModelPosterior {
    pub fn posterior_of(&self, kind: ModelKind) -> f64 {
        self.candidates
            .iter()
            .find(|c| c.kind == kind)
            .map_or(0.0, |c| c.posterior)
    }

    /// One line per candidate `kind bic posterior`, then `winner <kind>`.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for c in &self.candidates {
            out.push_str(&format!("{} {:.6} {:.6}\n", c.kind, c.bic, c.posterior));
        }
        out.push_str(&format!("winner {}\n", self.winner));
        out
    }
}

/// Full selection outcome: the posterior table and the surviving fits.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub posterior: ModelPosterior,
    pub prismatic: Option<FitResult>,
    pub revolute: Option<FitResult>,
}

impl SelectionOutcome {
    pub fn winning_fit(&self) -> &FitResult {
        match self.posterior.winner {
            ModelKind::Prismatic => self.prismatic.as_ref().unwrap(),
            ModelKind::Revolute => self.revolute.as_ref().unwrap(),
        }
    }
}

/// Bayesian Information Criterion with the natural logarithm.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    assert!(n >= 1 && k >= 1);
    -2.0 * log_likelihood + k as f64 * (n as f64).ln()
}

/// Posterior probabilities from BIC values under a uniform model prior:
/// `exp(-dBIC/2)` normalized, with `dBIC` relative to the minimum.
pub fn posteriors(bics: &[f64]) -> Vec<f64> {
    assert!(!bics.is_empty());
    let min = bics.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = bics.iter().map(|b| (-(b - min) / 2.0).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

/// Fit both candidates and pick the winner by lowest BIC; ties go to the
/// prismatic model (fewer parameters).
pub fn select_model(
    traj: &Trajectory,
    cfg: &MlesacConfig,
) -> Result<SelectionOutcome, ModelselError> {
    let n = traj.len();
    if n < 3 {
        return Err(ModelselError::TooFewObservations(n));
    }
    let pri = mlesac_fit(traj, ModelKind::Prismatic, cfg);
    let rev = mlesac_fit(traj, ModelKind::Revolute, cfg);
    let (pri, rev) = match (pri, rev) {
        (Err(p), Err(r)) => {
            return Err(ModelselError::NoCandidate {
                prismatic: p,
                revolute: r,
            })
        }
        (p, r) => (p.ok(), r.ok()),
    };

    let mut kinds = Vec::new();
    let mut bics = Vec::new();
    if let Some(f) = &pri {
        kinds.push(ModelKind::Prismatic);
        bics.push(bic(f.log_likelihood, ModelKind::Prismatic.param_count(), n));
    }
    if let Some(f) = &rev {
        kinds.push(ModelKind::Revolute);
        bics.push(bic(f.log_likelihood, ModelKind::Revolute.param_count(), n));
    }
    let post = posteriors(&bics);
    let candidates: Vec<CandidateScore> = kinds
        .iter()
        .zip(&bics)
        .zip(&post)
        .map(|((kind, bic), posterior)| CandidateScore {
            kind: *kind,
            bic: *bic,
            posterior: *posterior,
        })
        .collect();
    // lowest BIC wins; on an exact tie the prismatic candidate is listed
    // first and kept by the strict comparison
    let mut winner = candidates[0].clone();
    for c in &candidates[1..] {
        if c.bic < winner.bic {
            winner = c.clone();
        }
    }
    Ok(SelectionOutcome {
        posterior: ModelPosterior {
            candidates,
            winner: winner.kind,
        },
        prismatic: pri,
        revolute: rev,
    })
}
