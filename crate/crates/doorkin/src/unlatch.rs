//! Trial-and-error handle unlatching over simulated torque feedback.
//!
//! The wrist first turns counter-clockwise; if the torque feedback exceeds
//! the allowed threshold the movement is aborted and the clockwise
//! direction is tried. If both directions are blocked the handle needs no
//! actuation. Torque is modeled as a constant per direction: `resist_torque`
//! the free way, `block_torque` the blocked way.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    LeverCcw,
    LeverCw,
    KnobEither,
    Fixed,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MechanismKind::LeverCcw => "lever_ccw",
            MechanismKind::LeverCw => "lever_cw",
            MechanismKind::KnobEither => "knob_either",
            MechanismKind::Fixed => "fixed",
        };
        f.write_str(s)
    }
}

impl FromStr for MechanismKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lever_ccw" => Ok(MechanismKind::LeverCcw),
            "lever_cw" => Ok(MechanismKind::LeverCw),
            "knob_either" => Ok(MechanismKind::KnobEither),
            "fixed" => Ok(MechanismKind::Fixed),
            other => Err(format!("unknown mechanism kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandleMechanism {
    pub kind: MechanismKind,
    pub required_angle: f64,
    pub resist_torque: f64,
    pub block_torque: f64,
}

impl HandleMechanism {
    pub fn new(kind: MechanismKind, required_angle: f64, resist_torque: f64, block_torque: f64) -> Self {
        assert!(required_angle > 0.0, "required_angle must be positive");
        assert!(
            block_torque > resist_torque && resist_torque > 0.0,
            "torques must satisfy block > resist > 0"
        );
        Self {
            kind,
            required_angle,
            resist_torque,
            block_torque,
        }
    }

    fn torque(&self, direction: TurnDirection) -> f64 {
        let free = match self.kind {
            MechanismKind::LeverCcw => direction == TurnDirection::Ccw,
            MechanismKind::LeverCw => direction == TurnDirection::Cw,
            MechanismKind::KnobEither => true,
            MechanismKind::Fixed => false,
        };
        if free {
            self.resist_torque
        } else {
            self.block_torque
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnDirection {
    Ccw,
    Cw,
}

impl fmt::Display for TurnDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TurnDirection::Ccw => f.write_str("ccw"),
            TurnDirection::Cw => f.write_str("cw"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnlatchState {
    UnlatchedCcw,
    UnlatchedCw,
    NoActuationRequired,
}

impl fmt::Display for UnlatchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnlatchState::UnlatchedCcw => "unlatched_ccw",
            UnlatchState::UnlatchedCw => "unlatched_cw",
            UnlatchState::NoActuationRequired => "no_actuation_required",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlatchOutcome {
    pub state: UnlatchState,
    pub attempts: Vec<(TurnDirection, f64)>,
}

pub const DEFAULT_TORQUE_THRESHOLD: f64 = 2.0;

/// Turn the handle through its required angle in one direction. Succeeds
/// iff the torque stays within the threshold; reports the peak torque.
pub fn attempt_turn(
    mech: &HandleMechanism,
    direction: TurnDirection,
    threshold: f64,
) -> (bool, f64) {
    assert!(threshold > 0.0, "threshold must be positive");
    let peak = mech.torque(direction);
    (peak <= threshold, peak)
}

/// Full unlatching strategy: counter-clockwise first, then clockwise, and
/// if both abort the handle is identified as needing no actuation.
pub fn unlatch(mech: &HandleMechanism, threshold: f64) -> UnlatchOutcome {
    let mut attempts = Vec::with_capacity(2);
    let (ok, peak) = attempt_turn(mech, TurnDirection::Ccw, threshold);
    attempts.push((TurnDirection::Ccw, peak));
    if ok {
        return UnlatchOutcome {
            state: UnlatchState::UnlatchedCcw,
            attempts,
        };
    }
    let (ok, peak) = attempt_turn(mech, TurnDirection::Cw, threshold);
    attempts.push((TurnDirection::Cw, peak));
    if ok {
        return UnlatchOutcome {
            state: UnlatchState::UnlatchedCw,
            attempts,
        };
    }
    UnlatchOutcome {
        state: UnlatchState::NoActuationRequired,
        attempts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mech(kind: MechanismKind) -> HandleMechanism {
        HandleMechanism::new(kind, 0.6, 1.0, 5.0)
    }

    #[test]
    fn attempt_turn_cases() {
        let m = mech(MechanismKind::LeverCcw);
        assert_eq!(attempt_turn(&m, TurnDirection::Ccw, 2.0), (true, 1.0));
        assert_eq!(attempt_turn(&m, TurnDirection::Cw, 2.0), (false, 5.0));
        let f = mech(MechanismKind::Fixed);
        assert_eq!(attempt_turn(&f, TurnDirection::Ccw, 2.0), (false, 5.0));
        assert_eq!(attempt_turn(&f, TurnDirection::Cw, 2.0), (false, 5.0));
    }

    #[test]
    fn truth_table() {
        // (kind, threshold) -> (state, attempts); thresholds cover the
        // regimes below resist, between resist and block, and above block
        use MechanismKind::*;
        use UnlatchState::*;
        let cases = [
            (LeverCcw, 2.0, UnlatchedCcw, 1),
            (LeverCw, 2.0, UnlatchedCw, 2),
            (KnobEither, 2.0, UnlatchedCcw, 1),
            (Fixed, 2.0, NoActuationRequired, 2),
            // threshold above block torque: every direction is free
            (LeverCcw, 10.0, UnlatchedCcw, 1),
            (LeverCw, 10.0, UnlatchedCcw, 1),
            (KnobEither, 10.0, UnlatchedCcw, 1),
            (Fixed, 10.0, UnlatchedCcw, 1),
            // threshold below resist torque: nothing moves
            (LeverCcw, 0.5, NoActuationRequired, 2),
            (LeverCw, 0.5, NoActuationRequired, 2),
            (KnobEither, 0.5, NoActuationRequired, 2),
            (Fixed, 0.5, NoActuationRequired, 2),
        ];
        for (kind, threshold, state, attempts) in cases {
            let outcome = unlatch(&mech(kind), threshold);
            assert_eq!(outcome.state, state, "{kind} at {threshold}");
            assert_eq!(outcome.attempts.len(), attempts, "{kind} at {threshold}");
        }
    }

    #[test]
    fn second_attempt_only_after_failure() {
        for kind in [
            MechanismKind::LeverCcw,
            MechanismKind::LeverCw,
            MechanismKind::KnobEither,
            MechanismKind::Fixed,
        ] {
            for threshold in [0.5, 2.0, 10.0] {
                let outcome = unlatch(&mech(kind), threshold);
                assert!(outcome.attempts.len() <= 2);
                assert_eq!(outcome.attempts[0].0, TurnDirection::Ccw);
                if outcome.attempts.len() == 2 {
                    assert!(outcome.attempts[0].1 > threshold, "second attempt without failure");
                    assert_eq!(outcome.attempts[1].0, TurnDirection::Cw);
                }
            }
        }
    }

    #[test]
    fn threshold_monotonicity() {
        let success = |s: UnlatchState| s != UnlatchState::NoActuationRequired;
        for kind in [
            MechanismKind::LeverCcw,
            MechanismKind::LeverCw,
            MechanismKind::KnobEither,
            MechanismKind::Fixed,
        ] {
            let mut prev = false;
            for threshold in [0.1, 0.5, 1.0, 1.5, 2.0, 5.0, 6.0, 10.0] {
                let now = success(unlatch(&mech(kind), threshold).state);
                assert!(!prev || now, "{kind}: success lost when threshold rose");
                prev = now;
            }
        }
    }

    #[test]
    fn deterministic() {
        let m = mech(MechanismKind::LeverCw);
        assert_eq!(unlatch(&m, 2.0), unlatch(&m, 2.0));
    }

    #[test]
    #[should_panic(expected = "block > resist")]
    fn invalid_torques_rejected() {
        HandleMechanism::new(MechanismKind::Fixed, 0.5, 2.0, 1.0);
    }
}
