use super::{FeedbackConfig, FeedbackEvent, KinematicState};

/// Per-session flicker suppression.
///
/// A state is emitted once it has been the resolved state for
/// `stability_frames` consecutive frames and at least
/// `min_message_interval_ms` has passed since that state was last emitted.
/// Critical violations skip both gates when configured to.
#[derive(Debug, Clone)]
pub struct Debouncer {
    cfg: FeedbackConfig,
    run_state: Option<KinematicState>,
    run_len: u32,
    last_emitted: [Option<u64>; 7],
}

impl Debouncer {
    pub fn new(cfg: FeedbackConfig) -> Self {
        Debouncer {
            cfg,
            run_state: None,
            run_len: 0,
            last_emitted: [None; 7],
        }
    }

    pub fn config(&self) -> &FeedbackConfig {
        &self.cfg
    }

    /// Feeds one frame's resolved state and reports whether to emit it.
    pub fn admit(&mut self, state: KinematicState, t_ms: u64) -> bool {
        if self.run_state == Some(state) {
            self.run_len = self.run_len.saturating_add(1);
        } else {
            self.run_state = Some(state);
            self.run_len = 1;
        }
        if state.is_silent() {
            return false;
        }
        let bypass = state == KinematicState::CriticalViolation && self.cfg.critical_bypasses_debounce;
        let stable = self.run_len >= self.cfg.stability_frames;
        let spaced = match self.last_emitted[state.index()] {
            None => true,
            Some(last) => t_ms.saturating_sub(last) >= self.cfg.min_message_interval_ms,
        };
        let emit = bypass || (stable && spaced);
        if emit {
            self.last_emitted[state.index()] = Some(t_ms);
        }
        emit
    }

    /// Event-level form of [`Debouncer::admit`].
    pub fn debounce(&mut self, candidate: FeedbackEvent) -> Option<FeedbackEvent> {
        self.admit(candidate.state, candidate.t_ms).then_some(candidate)
    }
}
