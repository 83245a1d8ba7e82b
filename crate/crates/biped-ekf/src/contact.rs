//! Contact schedule vocabulary shared by the simulator and the filter
//! runtime.
//!
//! Contact is an input here, not something estimated: the dataset carries a
//! per-row flag for every foot, and the transitions of those flags drive the
//! liftoff and touchdown handling in the filter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What happened to a foot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Touchdown,
    Liftoff,
}

/// A single contact transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    /// Event time, seconds.
    pub t: f64,
    /// Index of the foot that changed.
    pub foot: usize,
    pub kind: ContactKind,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("contact events out of order at t = {t}")]
    OutOfOrder { t: f64 },
    #[error("foot {foot} repeats {kind:?} at t = {t}")]
    NotAlternating {
        foot: usize,
        kind: ContactKind,
        t: f64,
    },
    #[error("foot index {foot} out of range for {n_feet} feet")]
    BadFoot { foot: usize, n_feet: usize },
}

/// Extract the contact transitions from a per-row flag table.
///
/// `flags[k][i]` is the contact flag of foot `i` at `times[k]`; an event is
/// emitted at the first row where a flag differs from the previous row.
pub fn events_from_flags(times: &[f64], flags: &[Vec<bool>]) -> Vec<ContactEvent> {
    assert_eq!(times.len(), flags.len());
    let mut events = Vec::new();
    for k in 1..flags.len() {
        for (foot, (&now, &before)) in flags[k].iter().zip(&flags[k - 1]).enumerate() {
            if now != before {
                events.push(ContactEvent {
                    t: times[k],
                    foot,
                    kind: if now {
                        ContactKind::Touchdown
                    } else {
                        ContactKind::Liftoff
                    },
                });
            }
        }
    }
    events
}

/// Check that events are time-ordered and alternate per foot, starting from
/// the given initial contact flags.
pub fn validate(
    events: &[ContactEvent],
    initial: &[bool],
    n_feet: usize,
) -> Result<(), ScheduleError> {
    let mut in_contact = initial.to_vec();
    let mut last_t = f64::NEG_INFINITY;
    for ev in events {
        if ev.foot >= n_feet {
            return Err(ScheduleError::BadFoot {
                foot: ev.foot,
                n_feet,
            });
        }
        if ev.t < last_t {
            return Err(ScheduleError::OutOfOrder { t: ev.t });
        }
        last_t = ev.t;
        let expected_contact_after = match ev.kind {
            ContactKind::Touchdown => true,
            ContactKind::Liftoff => false,
        };
        if in_contact[ev.foot] == expected_contact_after {
            return Err(ScheduleError::NotAlternating {
                foot: ev.foot,
                kind: ev.kind,
                t: ev.t,
            });
        }
        in_contact[ev.foot] = expected_contact_after;
    }
    Ok(())
}
