//! Progressive expansion of the X2D basis: at every step one candidate per
//! expansion operation is scaled to the step's complexity target, the best
//! candidate by `J` is adopted, and the last step can be contracted to meet a
//! final budget.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::HeadKind;
use crate::x3d::{ExpansionFactors, X3dBasis, X3dConfig};

/// Expansion operations, in tie-breaking priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExpansionOp {
    #[serde(rename = "X-Fast")]
    Fast,
    #[serde(rename = "X-Temporal")]
    Temporal,
    #[serde(rename = "X-Spatial")]
    Spatial,
    #[serde(rename = "X-Depth")]
    Depth,
    #[serde(rename = "X-Width")]
    Width,
    #[serde(rename = "X-Bottleneck")]
    Bottleneck,
}

impl ExpansionOp {
    pub const ALL: [ExpansionOp; 6] = [
        ExpansionOp::Fast,
        ExpansionOp::Temporal,
        ExpansionOp::Spatial,
        ExpansionOp::Depth,
        ExpansionOp::Width,
        ExpansionOp::Bottleneck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExpansionOp::Fast => "X-Fast",
            ExpansionOp::Temporal => "X-Temporal",
            ExpansionOp::Spatial => "X-Spatial",
            ExpansionOp::Depth => "X-Depth",
            ExpansionOp::Width => "X-Width",
            ExpansionOp::Bottleneck => "X-Bottleneck",
        }
    }

    /// Scale this operation's factor(s) by `k`.
    ///
    /// X-Fast keeps the clip duration fixed and samples `k` times as many
    /// frames (γ_t up, γ_T down by the same ratio). X-Temporal takes `k` times
    /// as many frames over a longer clip, splitting the change between the
    /// frame count and the sampling stride.
    pub fn apply(self, f: &ExpansionFactors, k: f64) -> ExpansionFactors {
        let mut z = *f;
        match self {
            ExpansionOp::Fast => {
                z.gamma_t *= k;
                z.gamma_frame /= k;
            }
            ExpansionOp::Temporal => {
                z.gamma_t *= k;
                z.gamma_frame /= k.sqrt();
            }
            ExpansionOp::Spatial => z.gamma_s *= k,
            ExpansionOp::Depth => z.gamma_d *= k,
            ExpansionOp::Width => z.gamma_w *= k,
            ExpansionOp::Bottleneck => z.gamma_b *= k,
        }
        z
    }
}

impl fmt::Display for ExpansionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExpansionOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let key = key.trim_start_matches("x-");
        ExpansionOp::ALL
            .into_iter()
            .find(|op| op.name()[2..].eq_ignore_ascii_case(key))
            .ok_or_else(|| Error::Lookup {
                kind: "expansion op",
                name: s.to_string(),
            })
    }
}

/// How an operation's multiplier is chosen for a target complexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule {
    /// Bisection on the multiplier in `[1, max]`.
    Bisection { max: f64 },
    /// The multiplier from a fixed list whose complexity is closest to the
    /// target; ties go to the earlier entry.
    Grid(Vec<f64>),
}

impl Default for CandidateRule {
    fn default() -> Self {
        CandidateRule::Bisection { max: 64.0 }
    }
}

/// The space searched over: the basis network and the complexity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub basis: X3dBasis,
    pub num_classes: usize,
    /// Relative tolerance on `|C(Z) - c|`.
    pub tolerance: f64,
    pub rule: CandidateRule,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            basis: X3dBasis::default(),
            num_classes: 400,
            tolerance: 0.1,
            rule: CandidateRule::default(),
        }
    }
}

/// A candidate scaled to a target complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub op: ExpansionOp,
    pub multiplier: f64,
    pub factors: ExpansionFactors,
    pub complexity: f64,
}

impl SearchSpace {
    pub fn config(&self, factors: ExpansionFactors) -> X3dConfig {
        X3dConfig {
            basis: self.basis.clone(),
            factors,
            num_classes: self.num_classes,
            head: HeadKind::Multiclass,
            input: None,
        }
    }

    /// `C(X)` in FLOPs.
    pub fn complexity(&self, factors: &ExpansionFactors) -> Result<f64> {
        Ok(self.config(*factors).flops()? as f64)
    }

    pub fn within(&self, c: f64, target: f64) -> bool {
        (c - target).abs() <= self.tolerance * target
    }

    /// The multiplier for `op` whose complexity is nearest `target`. The
    /// returned candidate may lie outside the tolerance.
    pub fn nearest(&self, op: ExpansionOp, from: &ExpansionFactors, target: f64) -> Result<Candidate> {
        let eval = |k: f64| -> Result<Candidate> {
            let factors = op.apply(from, k);
            Ok(Candidate {
                op,
                multiplier: k,
                factors,
                complexity: self.complexity(&factors)?,
            })
        };
        let closer = |a: Candidate, b: Candidate| {
            if (b.complexity - target).abs() < (a.complexity - target).abs() {
                b
            } else {
                a
            }
        };
        match &self.rule {
            CandidateRule::Grid(ks) => {
                let mut best: Option<Candidate> = None;
                for &k in ks {
                    let c = eval(k)?;
                    best = Some(match best {
                        None => c,
                        Some(b) => closer(b, c),
                    });
                }
                best.ok_or_else(|| Error::Config("empty candidate grid".into()))
            }
            CandidateRule::Bisection { max } => {
                let mut lo = eval(1.0)?;
                if lo.complexity >= target {
                    return Ok(lo);
                }
                let mut hi = eval(*max)?;
                if hi.complexity < target {
                    return Ok(hi);
                }
                // C is a step function of k; narrow to the jump across the target
                for _ in 0..60 {
                    let mid = eval(0.5 * (lo.multiplier + hi.multiplier))?;
                    if mid.complexity >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi.multiplier - lo.multiplier < 1e-9 {
                        break;
                    }
                }
                Ok(closer(lo, hi))
            }
        }
    }
}

/// Goodness `J(X)`; higher is better. Implementations must be deterministic
/// and callable concurrently.
pub trait GoodnessEvaluator: Sync {
    fn evaluate(&self, factors: &ExpansionFactors) -> Result<f64>;

    /// Per-evaluation budget (e.g. training epochs), for logging.
    fn cost_budget(&self) -> usize {
        0
    }
}

/// Wraps a closure as an evaluator.
pub struct FnEvaluator<F>(pub F);

impl<F> GoodnessEvaluator for FnEvaluator<F>
where
    F: Fn(&ExpansionFactors) -> Result<f64> + Sync,
{
    fn evaluate(&self, factors: &ExpansionFactors) -> Result<f64> {
        (self.0)(factors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub op: ExpansionOp,
    /// Multiplier applied to the op's factor(s).
    pub multiplier: f64,
    pub factors: ExpansionFactors,
    pub complexity: f64,
    /// `None` after contraction, since the contracted tuple was not evaluated.
    pub goodness: Option<f64>,
    #[serde(default)]
    pub contracted: bool,
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub step: usize,
    pub op: ExpansionOp,
    pub multiplier: f64,
    pub factors: ExpansionFactors,
    pub complexity: f64,
    pub target: f64,
    /// `None` when the op could not reach the target and was not evaluated.
    pub goodness: Option<f64>,
    pub adopted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionState {
    pub initial: ExpansionFactors,
    pub factors: ExpansionFactors,
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub log: Vec<CandidateRecord>,
}

impl ExpansionState {
    pub fn new(initial: ExpansionFactors) -> Self {
        Self {
            initial,
            factors: initial,
            history: Vec::new(),
            log: Vec::new(),
        }
    }

    /// Re-apply the history to the initial factors.
    pub fn replay(&self) -> ExpansionFactors {
        self.history
            .iter()
            .fold(self.initial, |f, h| h.op.apply(&f, h.multiplier))
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.log {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Targets doubling from `c0`: `2·c0, 4·c0, ...`.
pub fn doubling_targets(c0: f64, steps: usize) -> Vec<f64> {
    (1..=steps).map(|i| c0 * 2f64.powi(i as i32)).collect()
}

/// Expand `state` once per target, adopting the best candidate each step.
pub fn forward_expand(
    mut state: ExpansionState,
    targets: &[f64],
    space: &SearchSpace,
    evaluator: &dyn GoodnessEvaluator,
) -> Result<ExpansionState> {
    if targets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("step targets must be strictly increasing".into()));
    }
    for &target in targets {
        let step = state.history.len();
        let candidates = ExpansionOp::ALL
            .iter()
            .map(|&op| space.nearest(op, &state.factors, target))
            .collect::<Result<Vec<_>>>()?;
        let reachable: Vec<&Candidate> = candidates
            .iter()
            .filter(|c| space.within(c.complexity, target))
            .collect();
        if reachable.is_empty() {
            let nearest = candidates
                .iter()
                .map(|c| format!("{}: {:.4e}", c.op, c.complexity))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::NoCandidate { target, nearest });
        }
        let scores = reachable
            .par_iter()
            .map(|c| {
                evaluator.evaluate(&c.factors).map_err(|e| Error::Evaluator {
                    step,
                    op: c.op.to_string(),
                    factors: c.factors.to_string(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        // first maximum wins, so ties fall to the op listed earlier
        let mut best = 0;
        for (i, &j) in scores.iter().enumerate() {
            if j > scores[best] {
                best = i;
            }
        }
        let chosen = *reachable[best];
        for c in &candidates {
            let goodness = reachable.iter().position(|r| r.op == c.op).map(|i| scores[i]);
            state.log.push(CandidateRecord {
                step,
                op: c.op,
                multiplier: c.multiplier,
                factors: c.factors,
                complexity: c.complexity,
                target,
                goodness,
                adopted: c.op == chosen.op,
            });
        }
        log::info!(
            "step {step}: adopted {} x{:.4} at C={:.4e} (target {:.4e}), J={:.4}",
            chosen.op,
            chosen.multiplier,
            chosen.complexity,
            target,
            scores[best]
        );
        state.factors = chosen.factors;
        state.history.push(HistoryEntry {
            op: chosen.op,
            multiplier: chosen.multiplier,
            factors: chosen.factors,
            complexity: chosen.complexity,
            goodness: Some(scores[best]),
            contracted: false,
        });
    }
    Ok(state)
}

/// Shrink the last expansion until `C <= target`.
pub fn backward_contract(mut state: ExpansionState, target: f64, space: &SearchSpace) -> Result<ExpansionState> {
    if space.complexity(&state.factors)? <= target {
        return Ok(state);
    }
    let last = state
        .history
        .pop()
        .ok_or_else(|| Error::Contraction("nothing to contract: the history is empty".into()))?;
    let before = state.replay();
    let c_before = space.complexity(&before)?;
    if c_before > target {
        return Err(Error::Contraction(format!(
            "undoing the last {} step still leaves C={c_before:.4e} above {target:.4e}; remove that step instead",
            last.op
        )));
    }
    // largest multiplier in [1, k] whose complexity fits
    let (mut lo, mut hi) = (1.0, last.multiplier);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if space.complexity(&last.op.apply(&before, mid))? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    let factors = last.op.apply(&before, lo);
    let complexity = space.complexity(&factors)?;
    state.factors = factors;
    state.history.push(HistoryEntry {
        op: last.op,
        multiplier: lo,
        factors,
        complexity,
        goodness: None,
        contracted: true,
    });
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_names_round_trip() {
        for op in ExpansionOp::ALL {
            assert_eq!(op.name().parse::<ExpansionOp>().unwrap(), op);
        }
        assert_eq!("width".parse::<ExpansionOp>().unwrap(), ExpansionOp::Width);
    }

    #[test]
    fn empty_targets_leave_state() {
        let state = ExpansionState::new(ExpansionFactors::IDENTITY);
        let eval = FnEvaluator(|_: &ExpansionFactors| Ok(0.0));
        let out = forward_expand(state.clone(), &[], &SearchSpace::default(), &eval).unwrap();
        assert_eq!(out, state);
    }

    #[test]
    fn constant_goodness_grows_complexity() {
        let space = SearchSpace::default();
        let c0 = space.complexity(&ExpansionFactors::IDENTITY).unwrap();
        let eval = FnEvaluator(|_: &ExpansionFactors| Ok(1.0));
        let out = forward_expand(
            ExpansionState::new(ExpansionFactors::IDENTITY),
            &doubling_targets(c0, 2),
            &space,
            &eval,
        )
        .unwrap();
        assert_eq!(out.history.len(), 2);
        assert!(out.history[1].complexity > out.history[0].complexity);
        // ties go to the first op
        assert!(out.history.iter().all(|h| h.op == ExpansionOp::Fast));
        assert_eq!(out.replay(), out.factors);
        assert_eq!(out.log.len(), 12);
    }

    #[test]
    fn unreachable_target_reports_nearest() {
        let space = SearchSpace {
            rule: CandidateRule::Grid(vec![1.0]),
            ..SearchSpace::default()
        };
        let eval = FnEvaluator(|_: &ExpansionFactors| Ok(0.0));
        let err = forward_expand(ExpansionState::new(ExpansionFactors::IDENTITY), &[1e12], &space, &eval)
            .unwrap_err();
        assert!(matches!(err, Error::NoCandidate { .. }), "{err}");
    }

    #[test]
    fn evaluator_errors_name_the_candidate() {
        let space = SearchSpace::default();
        let c0 = space.complexity(&ExpansionFactors::IDENTITY).unwrap();
        let eval = FnEvaluator(|f: &ExpansionFactors| {
            if f.gamma_w > 1.0 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(0.0)
            }
        });
        let err = forward_expand(ExpansionState::new(ExpansionFactors::IDENTITY), &[2.0 * c0], &space, &eval)
            .unwrap_err();
        match err {
            Error::Evaluator { op, .. } => assert_eq!(op, "X-Width"),
            e => panic!("unexpected {e}"),
        }
    }
}
