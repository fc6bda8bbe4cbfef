//! Lossless recordings of the raw frame stream.
//!
//! A recording is one JSON header line followed by back-to-back 30-byte wire
//! packets. Replaying it through a [`Pipeline`](crate::Pipeline) reproduces
//! the live output exactly, since the packets carry the ADC counts.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{decode_frame, encode_frame, RawFrame, WireError, FRAME_RATE_HZ, PACKET_LEN};
use crate::dsp::TimestampUnwrapper;

pub const RECORDING_FORMAT: &str = "bioskin-recording";
pub const RECORDING_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("corrupt packet at byte {offset}: {source}")]
    Corrupt { offset: u64, source: WireError },
    #[error("truncated packet at byte {offset}: {got} of {PACKET_LEN} bytes")]
    Truncated { offset: u64, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub format: String,
    pub version: u32,
    /// Unix seconds.
    pub created_at: u64,
    /// Scenario or device the frames came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Profile active while recording; replay does not require it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<String>,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: u32,
}

fn default_frame_rate() -> u32 {
    FRAME_RATE_HZ
}

impl RecordingHeader {
    pub fn new(source: Option<String>) -> Self {
        let created_at =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        RecordingHeader {
            format: RECORDING_FORMAT.into(),
            version: RECORDING_VERSION,
            created_at,
            source,
            profile_id: None,
            frame_rate_hz: FRAME_RATE_HZ,
        }
    }

    pub fn with_profile(mut self, id: &str) -> Self {
        self.profile_id = Some(id.to_string());
        self
    }
}

pub struct RecordingWriter<W: Write> {
    out: W,
    frames: u64,
}

impl RecordingWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &RecordingHeader) -> Result<Self, RecordingError> {
        RecordingWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> RecordingWriter<W> {
    pub fn new(mut out: W, header: &RecordingHeader) -> Result<Self, RecordingError> {
        let line = serde_json::to_string(header).map_err(|e| RecordingError::Header(e.to_string()))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(RecordingWriter { out, frames: 0 })
    }

    pub fn write(&mut self, frame: &RawFrame) -> Result<(), RecordingError> {
        self.out.write_all(&encode_frame(frame))?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn finish(mut self) -> Result<W, RecordingError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Strict reader: the first bad packet ends the stream with its byte offset.
pub struct RecordingReader<R: Read> {
    input: BufReader<R>,
    header: RecordingHeader,
    offset: u64,
    failed: bool,
}

impl RecordingReader<File> {
    pub fn open(path: &Path) -> Result<Self, RecordingError> {
        RecordingReader::new(File::open(path)?)
    }
}

impl<R: Read> RecordingReader<R> {
    pub fn new(input: R) -> Result<Self, RecordingError> {
        let mut input = BufReader::new(input);
        let mut line = Vec::new();
        input.read_until(b'\n', &mut line)?;
        let header: RecordingHeader =
            serde_json::from_slice(&line).map_err(|e| RecordingError::Header(e.to_string()))?;
        if header.format != RECORDING_FORMAT || header.version != RECORDING_VERSION {
            return Err(RecordingError::Header(format!("unsupported {} v{}", header.format, header.version)));
        }
        Ok(RecordingReader { input, header, offset: line.len() as u64, failed: false })
    }

    pub fn header(&self) -> &RecordingHeader {
        &self.header
    }

    fn read_packet(&mut self) -> Result<Option<RawFrame>, RecordingError> {
        let mut buf = [0u8; PACKET_LEN];
        let mut got = 0;
        while got < PACKET_LEN {
            match self.input.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let offset = self.offset;
        match got {
            0 => Ok(None),
            PACKET_LEN => {
                self.offset += PACKET_LEN as u64;
                decode_frame(&buf).map(Some).map_err(|source| RecordingError::Corrupt { offset, source })
            }
            _ => Err(RecordingError::Truncated { offset, got }),
        }
    }
}

impl<R: Read> Iterator for RecordingReader<R> {
    type Item = Result<RawFrame, RecordingError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.read_packet().transpose();
        self.failed = matches!(item, Some(Err(_)));
        item
    }
}

/// Sleeps so that frames are released at `speed` times their recorded rate.
/// A non-positive or infinite speed disables pacing.
#[derive(Debug)]
pub struct Pacer {
    speed: f64,
    clock: TimestampUnwrapper,
    origin: Option<(u64, Instant)>,
}

impl Pacer {
    pub fn new(speed: f64) -> Self {
        Pacer { speed, clock: TimestampUnwrapper::default(), origin: None }
    }

    /// Wall-clock offset at which `frame` is due, relative to the first frame.
    pub fn due(&mut self, frame: &RawFrame) -> Option<Duration> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return None;
        }
        let ts = self.clock.unwrap(frame.timestamp_us);
        let (t0, _) = *self.origin.get_or_insert((ts, Instant::now()));
        Some(Duration::from_secs_f64((ts - t0) as f64 / 1e6 / self.speed))
    }

    pub fn wait(&mut self, frame: &RawFrame) {
        if let Some(due) = self.due(frame) {
            let start = self.origin.expect("set by due").1;
            if let Some(left) = due.checked_sub(start.elapsed()) {
                thread::sleep(left);
            }
        }
    }
}
