//! Shared wireless channel: Shannon capacity, per-round bit budgets and
//! all-or-nothing spend accounting.
//!
//! The channel is a capacity abstraction only: no modulation, loss or
//! retransmission. Each round gets `floor(capacity * round_duration)` bits;
//! an optional seeded fading process perturbs the SNR per round.

use rand::Rng;
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("round duration must be positive, got {0}")]
    NonPositiveDuration(f64),
}

/// Shannon capacity in bits/second: `B * log2(1 + 10^(snr_db/10))`.
pub fn shannon_capacity(bandwidth_hz: f64, snr_db: f64) -> Result<f64, ChannelError> {
    if !(bandwidth_hz > 0.0) {
        return Err(ChannelError::NonPositiveBandwidth(bandwidth_hz));
    }
    let snr_linear = 10f64.powf(snr_db / 10.0);
    Ok(bandwidth_hz * (1.0 + snr_linear).log2())
}

/// Per-round i.i.d. uniform SNR offset in `[-range_db, +range_db]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel {
    pub range_db: f64,
    pub seed: u64,
}

impl FadingModel {
    fn offset_db(&self, round_index: u32) -> f64 {
        if self.range_db == 0.0 {
            return 0.0;
        }
        let mut rng = seeds::rng_from_indexed(self.seed, "fading", u64::from(round_index));
        rng.gen_range(-self.range_db..=self.range_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub bandwidth_hz: f64,
    pub snr_db: f64,
    pub round_duration_s: f64,
    pub fading: Option<FadingModel>,
}

impl ChannelModel {
    pub fn new(
        bandwidth_hz: f64,
        snr_db: f64,
        round_duration_s: f64,
        fading: Option<FadingModel>,
    ) -> Result<Self, ChannelError> {
        if !(bandwidth_hz > 0.0) {
            return Err(ChannelError::NonPositiveBandwidth(bandwidth_hz));
        }
        if !(round_duration_s > 0.0) {
            return Err(ChannelError::NonPositiveDuration(round_duration_s));
        }
        Ok(Self {
            bandwidth_hz,
            snr_db,
            round_duration_s,
            fading,
        })
    }

    /// Effective SNR for a round, fading offset included.
    pub fn effective_snr_db(&self, round_index: u32) -> f64 {
        self.snr_db
            + self
                .fading
                .as_ref()
                .map_or(0.0, |f| f.offset_db(round_index))
    }

    /// Builds the bit budget for a round; deterministic per round index.
    pub fn round_budget(&self, round_index: u32) -> RoundBudget {
        let capacity_bps = shannon_capacity(self.bandwidth_hz, self.effective_snr_db(round_index))
            .expect("bandwidth validated at construction");
        let budget_bits = (capacity_bps * self.round_duration_s).floor() as u64;
        RoundBudget {
            round_index,
            capacity_bps,
            budget_bits,
            spent_bits: 0,
        }
    }

    /// Largest budget any round can see; used to normalize the budget
    /// feature so it stays in [0,1] even with fading enabled.
    pub fn reference_bits(&self) -> u64 {
        let peak_snr = self.snr_db + self.fading.as_ref().map_or(0.0, |f| f.range_db);
        let capacity = shannon_capacity(self.bandwidth_hz, peak_snr)
            .expect("bandwidth validated at construction");
        (capacity * self.round_duration_s).floor() as u64
    }
}

/// One round's bit budget with spend tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundBudget {
    pub round_index: u32,
    pub capacity_bps: f64,
    pub budget_bits: u64,
    pub spent_bits: u64,
}

impl RoundBudget {
    /// Admits `bits` if they fit, all-or-nothing. Returns whether spent.
    pub fn try_spend(&mut self, bits: u64) -> bool {
        match self.spent_bits.checked_add(bits) {
            Some(total) if total <= self.budget_bits => {
                self.spent_bits = total;
                true
            }
            _ => false,
        }
    }

    pub fn remaining_bits(&self) -> u64 {
        self.budget_bits - self.spent_bits
    }
}
