//! Proactive handoff decisions between two basestations.

use crate::dataset::ConjugateSample;
use crate::embedding::BeamEmbeddingTable;
use crate::error::{Error, Result};
use crate::evalkit::Tally;
use crate::seqnet::{predict_all, GruNet};
use std::fmt::Write as _;

/// Handoff is initiated only when the serving link is (predicted) blocked and
/// the alternative is (predicted) clear.
pub fn decide(serving: u8, other: u8) -> u8 {
    u8::from(serving == 1 && other == 0)
}

/// Predicted and true future link statuses at the serving and the
/// alternative basestation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoffEvent {
    pub pred_serving: u8,
    pub pred_other: u8,
    pub true_serving: u8,
    pub true_other: u8,
}

impl HandoffEvent {
    pub fn new(pred_serving: u8, pred_other: u8, true_serving: u8, true_other: u8) -> Result<Self> {
        if [pred_serving, pred_other, true_serving, true_other].iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("link statuses must be 0 or 1".into()));
        }
        Ok(Self {
            pred_serving,
            pred_other,
            true_serving,
            true_other,
        })
    }

    pub fn decision(&self) -> u8 {
        decide(self.pred_serving, self.pred_other)
    }
}

/// Success when the predicted decision equals the decision the true statuses call for.
pub fn classify_event(ev: &HandoffEvent) -> bool {
    ev.decision() == decide(ev.true_serving, ev.true_other)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HandoffReport {
    /// Category 1: serving 1, handoff to 2. Category 2: the reverse.
    pub categories: [Tally; 2],
    /// Per basestation, accuracy on samples whose true status is NLOS / LOS.
    pub nlos: [Tally; 2],
    pub los: [Tally; 2],
    /// Pairs where both basestations' predictions equal the truth.
    pub joint: Tally,
}

impl HandoffReport {
    pub fn overall(&self) -> Tally {
        Tally {
            count: self.categories[0].count + self.categories[1].count,
            correct: self.categories[0].correct + self.categories[1].correct,
        }
    }
}

/// Scores precomputed predictions (`pred_bs1[i]`, `pred_bs2[i]` for `pairs[i]`).
pub fn evaluate_predictions(pairs: &[ConjugateSample], pred_bs1: &[u8], pred_bs2: &[u8]) -> Result<HandoffReport> {
    if pred_bs1.len() != pairs.len() || pred_bs2.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            actual: pred_bs1.len().min(pred_bs2.len()),
        });
    }
    let mut rep = HandoffReport::default();
    for ((pair, &p1), &p2) in pairs.iter().zip(pred_bs1).zip(pred_bs2) {
        let (s1, s2) = (pair.bs1.label.s, pair.bs2.label.s);
        let ev = match pair.serving {
            1 => HandoffEvent::new(p1, p2, s1, s2)?,
            2 => HandoffEvent::new(p2, p1, s2, s1)?,
            n => return Err(Error::InvalidParameter(format!("serving basestation {n}"))),
        };
        let cat = usize::from(pair.category)
            .checked_sub(1)
            .filter(|&c| c < 2)
            .ok_or_else(|| Error::InvalidParameter(format!("category {}", pair.category)))?;
        rep.categories[cat].add(classify_event(&ev));
        for (i, (p, s)) in [(p1, s1), (p2, s2)].into_iter().enumerate() {
            let t = if s == 1 { &mut rep.nlos[i] } else { &mut rep.los[i] };
            t.add(p == s);
        }
        rep.joint.add(p1 == s1 && p2 == s2);
    }
    Ok(rep)
}

/// Runs the two basestation models independently, then applies [`decide`].
pub fn evaluate_handoff(
    model_bs1: (&GruNet, &BeamEmbeddingTable),
    model_bs2: (&GruNet, &BeamEmbeddingTable),
    pairs: &[ConjugateSample],
) -> Result<HandoffReport> {
    let side1: Vec<_> = pairs.iter().map(|p| p.bs1.clone()).collect();
    let side2: Vec<_> = pairs.iter().map(|p| p.bs2.clone()).collect();
    let (r1, r2) = rayon::join(
        || predict_all(model_bs1.0, model_bs1.1, &side1),
        || predict_all(model_bs2.0, model_bs2.1, &side2),
    );
    let p1: Vec<u8> = r1?.iter().map(|p| p.status()).collect();
    let p2: Vec<u8> = r2?.iter().map(|p| p.status()).collect();
    evaluate_predictions(pairs, &p1, &p2)
}

pub const CSV_HEADER: &str = "model,handoff_1_to_2,handoff_2_to_1,bs1_nlos,bs1_los,bs2_nlos,bs2_los,count_1_to_2,count_2_to_1,joint_correct";

/// One row per model, columns laid out like the usual handoff summary table.
pub fn handoff_csv(rows: &[(&str, &HandoffReport)]) -> String {
    let f = |t: &Tally| t.accuracy().map_or_else(|| "n/a".into(), |v| format!("{v:.6}"));
    let mut out = format!("{CSV_HEADER}\n");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{},{}",
            f(&r.categories[0]),
            f(&r.categories[1]),
            f(&r.nlos[0]),
            f(&r.los[0]),
            f(&r.nlos[1]),
            f(&r.los[1]),
            r.categories[0].count,
            r.categories[1].count,
            f(&r.joint)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_table() {
        assert_eq!(decide(1, 0), 1);
        assert_eq!(decide(0, 0), 0);
        assert_eq!(decide(1, 1), 0);
        assert_eq!(decide(0, 1), 0);
    }

    #[test]
    fn listed_events() {
        assert!(classify_event(&HandoffEvent::new(1, 0, 1, 0).unwrap()));
        assert!(classify_event(&HandoffEvent::new(0, 1, 0, 1).unwrap()));
        assert!(classify_event(&HandoffEvent::new(0, 0, 1, 1).unwrap()));
        assert!(!classify_event(&HandoffEvent::new(0, 0, 1, 0).unwrap()));
        assert!(HandoffEvent::new(2, 0, 0, 0).is_err());
    }
}
