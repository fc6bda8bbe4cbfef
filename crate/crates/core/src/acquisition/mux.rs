//! 10-channel analog MUX switched at 5 kHz: one frame per 10 slots.
//!
//! Each channel is sampled at its own slot time, so the channels of one frame
//! are spread over 1.8 ms. The skew is kept as is rather than interpolated.

use super::{Adc, RawFrame};
use crate::channels::CHANNEL_COUNT;

pub const SLOT_RATE_HZ: u32 = 5_000;
pub const FRAME_RATE_HZ: u32 = SLOT_RATE_HZ / CHANNEL_COUNT as u32;
pub const SLOT_PERIOD_US: u64 = 1_000_000 / SLOT_RATE_HZ as u64;

/// Incremental frame assembler fed one slot at a time.
#[derive(Clone, Debug, Default)]
pub struct MuxScheduler {
    adc: Adc,
    pending: [u16; CHANNEL_COUNT],
    slot_index: u64,
    incomplete: bool,
    seq: u16,
    emitted: u64,
    gaps: u64,
}

impl MuxScheduler {
    pub fn new(adc: Adc) -> Self {
        MuxScheduler { adc, ..Default::default() }
    }

    /// Channel sampled by the next slot.
    pub fn next_channel(&self) -> usize {
        (self.slot_index % CHANNEL_COUNT as u64) as usize
    }

    /// Time of the next slot in microseconds since the schedule started.
    pub fn next_slot_time_us(&self) -> u64 {
        self.slot_index * SLOT_PERIOD_US
    }

    /// Feeds one slot sample; `None` marks a source underrun. Returns a frame
    /// when the tenth slot of a complete frame arrives.
    pub fn push_slot(&mut self, volts: Option<f64>) -> Option<RawFrame> {
        let channel = self.next_channel();
        match volts {
            Some(v) => self.pending[channel] = self.adc.quantize(v),
            None => self.incomplete = true,
        }
        self.slot_index += 1;
        if channel + 1 < CHANNEL_COUNT {
            return None;
        }

        let frame_start_us = (self.slot_index - CHANNEL_COUNT as u64) * SLOT_PERIOD_US;
        if std::mem::take(&mut self.incomplete) {
            self.gaps += 1;
            log::debug!("mux underrun: frame at {frame_start_us} us dropped");
            return None;
        }
        let frame = RawFrame {
            seq: self.seq,
            timestamp_us: frame_start_us as u32,
            channels: self.pending,
        };
        self.seq = self.seq.wrapping_add(1);
        self.emitted += 1;
        Some(frame)
    }

    pub fn frames_emitted(&self) -> u64 {
        self.emitted
    }

    /// Frames lost to source underruns.
    pub fn gaps(&self) -> u64 {
        self.gaps
    }

    pub fn slots_consumed(&self) -> u64 {
        self.slot_index
    }
}

#[derive(Clone, Debug, Default)]
pub struct MuxOutput {
    pub frames: Vec<RawFrame>,
    pub gaps: u64,
}

/// Runs a slot stream through the schedule.
pub fn mux_schedule<I>(slots: I) -> MuxOutput
where
    I: IntoIterator<Item = Option<f64>>,
{
    let mut mux = MuxScheduler::default();
    let frames = slots.into_iter().filter_map(|s| mux.push_slot(s)).collect();
    MuxOutput { frames, gaps: mux.gaps() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_second_is_500_frames() {
        let out = mux_schedule((0..SLOT_RATE_HZ).map(|_| Some(1.0)));
        assert_eq!(out.frames.len(), 500);
        assert_eq!(FRAME_RATE_HZ, 500);
        let seqs: Vec<u16> = out.frames.iter().map(|f| f.seq).collect();
        assert_eq!(seqs, (0..500).collect::<Vec<u16>>());
        assert_eq!(out.frames[1].timestamp_us, 2_000);
    }

    #[test]
    fn constant_source_gives_identical_payloads() {
        let out = mux_schedule((0..1000).map(|_| Some(1.2)));
        assert!(out.frames.windows(2).all(|w| w[0].channels == w[1].channels));
    }

    #[test]
    fn channels_land_in_slot_order() {
        let out = mux_schedule((0..10).map(|i| Some(f64::from(i) * 0.3)));
        let expected: Vec<u16> = (0..10).map(|i| quantize_ref(f64::from(i) * 0.3)).collect();
        assert_eq!(out.frames[0].channels.to_vec(), expected);
    }

    fn quantize_ref(v: f64) -> u16 {
        Adc::default().quantize(v)
    }

    #[test]
    fn underrun_drops_frame_but_seq_stays_dense() {
        let slots = (0..30).map(|i| if i == 13 { None } else { Some(1.0) });
        let out = mux_schedule(slots);
        assert_eq!(out.gaps, 1);
        assert_eq!(out.frames.len(), 2);
        assert_eq!(out.frames[0].seq, 0);
        assert_eq!(out.frames[1].seq, 1);
        assert_eq!(out.frames[1].timestamp_us, 4_000);
    }

    proptest! {
        #[test]
        fn frame_count_is_floor_of_slots_over_ten(n in 0usize..20_000) {
            let out = mux_schedule(std::iter::repeat_n(Some(0.5), n));
            prop_assert_eq!(out.frames.len(), n / 10);
        }
    }
}
