//! Controller-side sampling path: MUX slot schedule, ADC quantization and the
//! 30-byte wire packet.

mod adc;
mod mux;
pub mod wire;

pub use adc::{quantize, to_volts, Adc, ThermistorDivider, ADC_FULL_SCALE, ADC_VREF};
pub use mux::{mux_schedule, MuxOutput, MuxScheduler, FRAME_RATE_HZ, SLOT_PERIOD_US, SLOT_RATE_HZ};
pub use wire::{decode_frame, encode_frame, StreamDecoder, WireError, PACKET_LEN};

use serde::{Deserialize, Serialize};

use crate::channels::CHANNEL_COUNT;

/// One complete 10-channel sample set.
///
/// `seq` wraps at 2^16; `timestamp_us` wraps at 2^32 (about 71 minutes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawFrame {
    pub seq: u16,
    pub timestamp_us: u32,
    /// 12-bit ADC counts in channel order.
    pub channels: [u16; CHANNEL_COUNT],
}

impl RawFrame {
    pub fn is_valid(&self) -> bool {
        self.channels.iter().all(|&c| c <= ADC_FULL_SCALE)
    }

    pub fn volts(&self) -> [f64; CHANNEL_COUNT] {
        self.channels.map(to_volts)
    }
}
