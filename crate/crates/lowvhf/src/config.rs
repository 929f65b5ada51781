//! Session and channel configuration files (TOML).
//!
//! A session file:
//!
//! ```toml
//! session_id = "wire"
//! seed = 1
//! mode = "modem"          # or "flip"
//! flip_rate = 0.0         # payload bit flip probability in flip mode
//! payload_size = 1024
//! video_bit_rate_kbps = 300.0
//!
//! [source]
//! kind = "video"          # or "opaque"
//! pattern = "gradient"    # gradient | checker | moving_box | noise
//! width = 320
//! height = 240
//! channels = 1
//! frames = 15
//!
//! [modem]
//! samples_per_symbol = 4
//!
//! [channel]
//! file = "channels/indoor.toml"   # relative to this file
//!
//! [output]
//! dir = "out/wire"
//! write_iq = false
//! ```
//!
//! A channel file lists stages in order:
//!
//! ```toml
//! seed = 7   # optional; otherwise derived from the session seed
//!
//! [[stage]]
//! kind = "cfo"
//! offset_hz = 250.0
//!
//! [[stage]]
//! kind = "multipath"
//! taps = [{ delay = 0, re = 1.0 }, { delay = 3, re = 0.3, im = -0.2 }]
//!
//! [[stage]]
//! kind = "awgn"
//! ebn0_db = 8.0
//!
//! [[stage]]
//! kind = "burst_drop"
//! intervals = [{ start = 1000000, end = 2000000 }]   # samples; omit end for "forever"
//! ```
//!
//! The same `[[channel.stage]]` tables may be written inline in a session file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use lowvhf_core::channel::{ChannelModel, NoiseLevel, Stage};
use lowvhf_core::framing::DEFAULT_MAX_PAYLOAD;
use lowvhf_core::modem::ModemConfig;
use lowvhf_core::noise::split_seed;
use lowvhf_core::video::{Pattern, CHUNK_PREFIX_LEN, DEFAULT_FRAME_RATE, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use lowvhf_core::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Full modulator, channel and receiver.
    Modem,
    /// Payload bits flipped independently at `flip_rate`; no modem.
    Flip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Video,
    /// Pseudo-random bytes; BER only.
    Opaque,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternName {
    Gradient,
    Checker,
    MovingBox,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub pattern: PatternName,
    /// Seed for the noise pattern; defaults to one derived from the session seed.
    pub pattern_seed: Option<u64>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: usize,
    pub frame_rate: f64,
    /// Byte count for opaque sources.
    pub bytes: usize,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            kind: SourceKind::Video,
            pattern: PatternName::Gradient,
            pattern_seed: None,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            channels: 1,
            frames: 15,
            frame_rate: DEFAULT_FRAME_RATE,
            bytes: 1 << 20,
        }
    }
}

impl SourceSection {
    pub fn pattern(&self, session_seed: u64) -> Pattern {
        match self.pattern {
            PatternName::Gradient => Pattern::Gradient,
            PatternName::Checker => Pattern::Checker,
            PatternName::MovingBox => Pattern::MovingBox,
            PatternName::Noise => Pattern::Noise {
                seed: self.pattern_seed.unwrap_or_else(|| split_seed(session_seed, 4)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModemSection {
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
    pub rrc_rolloff: f64,
    pub rrc_span_symbols: usize,
    pub timing_loop_bw: f64,
    pub carrier_loop_bw: f64,
    pub loop_damping: f64,
    pub ramp_symbols: usize,
    /// Preamble correlation threshold, out of 64.
    pub preamble_threshold: u32,
}

impl Default for ModemSection {
    fn default() -> Self {
        let m = ModemConfig::default();
        Self {
            sample_rate: m.sample_rate,
            samples_per_symbol: m.samples_per_symbol,
            rrc_rolloff: m.rrc_rolloff,
            rrc_span_symbols: m.rrc_span_symbols,
            timing_loop_bw: m.timing_loop_bw,
            carrier_loop_bw: m.carrier_loop_bw,
            loop_damping: m.loop_damping,
            ramp_symbols: m.ramp_symbols,
            preamble_threshold: lowvhf_core::framing::DEFAULT_THRESHOLD,
        }
    }
}

impl ModemSection {
    pub fn modem_config(&self) -> ModemConfig {
        ModemConfig {
            sample_rate: self.sample_rate,
            samples_per_symbol: self.samples_per_symbol,
            rrc_rolloff: self.rrc_rolloff,
            rrc_span_symbols: self.rrc_span_symbols,
            timing_loop_bw: self.timing_loop_bw,
            carrier_loop_bw: self.carrier_loop_bw,
            loop_damping: self.loop_damping,
            ramp_symbols: self.ramp_symbols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub delay: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub start: u64,
    pub end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageSpec {
    Ideal,
    Awgn {
        ebn0_db: Option<f64>,
        snr_db: Option<f64>,
    },
    Cfo {
        offset_hz: f64,
        #[serde(default)]
        initial_phase_rad: f64,
    },
    Multipath {
        taps: Vec<TapSpec>,
    },
    BurstDrop {
        intervals: Vec<IntervalSpec>,
    },
}

impl StageSpec {
    pub fn to_stage(&self) -> anyhow::Result<Stage> {
        Ok(match self {
            Self::Ideal => Stage::Ideal,
            Self::Awgn { ebn0_db, snr_db } => match (ebn0_db, snr_db) {
                (Some(db), None) => Stage::Awgn(NoiseLevel::EbN0Db(*db)),
                (None, Some(db)) => Stage::Awgn(NoiseLevel::SnrDb(*db)),
                _ => bail!("awgn stage needs exactly one of ebn0_db and snr_db"),
            },
            Self::Cfo {
                offset_hz,
                initial_phase_rad,
            } => Stage::Cfo {
                offset_hz: *offset_hz,
                initial_phase_rad: *initial_phase_rad,
            },
            Self::Multipath { taps } => Stage::Multipath {
                taps: taps.iter().map(|t| (t.delay, Complex64::new(t.re, t.im))).collect(),
            },
            Self::BurstDrop { intervals } => Stage::BurstDrop {
                intervals: intervals.iter().map(|i| (i.start, i.end.unwrap_or(u64::MAX))).collect(),
            },
        })
    }
}

/// Contents of a channel file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub seed: Option<u64>,
    #[serde(default, rename = "stage")]
    pub stages: Vec<StageSpec>,
}

impl ChannelFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing channel file {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub file: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(rename = "stage")]
    pub stages: Vec<StageSpec>,
}

impl ChannelSection {
    /// Inline the referenced channel file, resolving relative paths against
    /// `base`. The file replaces any inline stages.
    pub fn resolve(&mut self, base: &Path) -> anyhow::Result<()> {
        if let Some(file) = self.file.take() {
            let path = if file.is_absolute() { file } else { base.join(file) };
            let loaded = ChannelFile::load(&path)?;
            self.stages = loaded.stages;
            self.seed = self.seed.or(loaded.seed);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also dump transmitted and received samples.
    pub write_iq: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            write_iq: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub session_id: String,
    pub seed: u64,
    pub mode: LinkMode,
    pub flip_rate: f64,
    pub payload_size: usize,
    /// Video bit rate the link is meant to carry; used for pacing figures only.
    pub video_bit_rate_kbps: f64,
    /// Samples are streamed through the chain this many bits at a time.
    pub block_bits: usize,
    pub source: SourceSection,
    pub modem: ModemSection,
    pub channel: ChannelSection,
    pub output: OutputSection,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            session_id: "session".into(),
            seed: 1,
            mode: LinkMode::Modem,
            flip_rate: 0.0,
            payload_size: 1024,
            video_bit_rate_kbps: 300.0,
            block_bits: 8192,
            source: SourceSection::default(),
            modem: ModemSection::default(),
            channel: ChannelSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl SessionConfig {
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: Self = toml::from_str(text).context("parsing session config")?;
        cfg.channel.resolve(base)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).with_context(|| format!("in {}", path.display()))
    }

    pub fn modem_config(&self) -> ModemConfig {
        self.modem.modem_config()
    }

    pub fn channel_model(&self) -> anyhow::Result<ChannelModel> {
        let stages = self
            .channel
            .stages
            .iter()
            .map(StageSpec::to_stage)
            .collect::<anyhow::Result<Vec<_>>>()?;
        let seed = self.channel.seed.unwrap_or_else(|| split_seed(self.seed, 1));
        let mut model = ChannelModel::new(stages, seed);
        model.samples_per_symbol = self.modem.samples_per_symbol;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(
            self.payload_size > CHUNK_PREFIX_LEN && self.payload_size <= DEFAULT_MAX_PAYLOAD,
            "payload_size must be in {}..={}, got {}",
            CHUNK_PREFIX_LEN + 1,
            DEFAULT_MAX_PAYLOAD,
            self.payload_size
        );
        ensure!(
            (0.0..=1.0).contains(&self.flip_rate),
            "flip_rate must be in [0, 1], got {}",
            self.flip_rate
        );
        ensure!(self.block_bits > 0, "block_bits must be positive");
        ensure!(
            (1..=64).contains(&self.modem.preamble_threshold),
            "preamble_threshold must be in 1..=64"
        );
        if self.source.kind == SourceKind::Video {
            ensure!(
                self.source.frames <= 1 << 16,
                "at most 65536 frames fit the chunk prefix"
            );
            ensure!(self.source.frames > 0, "frames must be positive");
            ensure!(self.source.frame_rate > 0.0, "frame_rate must be positive");
        }
        self.modem_config().validate()?;
        self.channel_model()?;
        Ok(())
    }

    /// Set the Eb/N0 of the first AWGN stage, adding one at the end if the
    /// channel has none.
    pub fn set_ebn0_db(&mut self, db: f64) {
        let awgn = StageSpec::Awgn {
            ebn0_db: Some(db),
            snr_db: None,
        };
        match self.channel.stages.iter_mut().find(|s| matches!(s, StageSpec::Awgn { .. })) {
            Some(s) => *s = awgn,
            None => self.channel.stages.push(awgn),
        }
    }

    /// Switch to flip mode at rate `p`.
    pub fn set_flip_rate(&mut self, p: f64) {
        self.mode = LinkMode::Flip;
        self.flip_rate = p;
    }
}

/// Command-line overrides, applied after the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub channel: Option<PathBuf>,
    pub ebn0_db: Option<f64>,
    pub flip_rate: Option<f64>,
    pub frames: Option<usize>,
    pub payload_size: Option<usize>,
    pub sps: Option<usize>,
    pub rolloff: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SessionConfig) -> anyhow::Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if let Some(path) = &self.channel {
            let file = ChannelFile::load(path)?;
            cfg.channel = ChannelSection {
                file: None,
                seed: file.seed,
                stages: file.stages,
            };
        }
        if let Some(db) = self.ebn0_db {
            cfg.set_ebn0_db(db);
        }
        if let Some(p) = self.flip_rate {
            cfg.set_flip_rate(p);
        }
        if let Some(n) = self.frames {
            cfg.source.frames = n;
        }
        if let Some(n) = self.payload_size {
            cfg.payload_size = n;
        }
        if let Some(n) = self.sps {
            cfg.modem.samples_per_symbol = n;
        }
        if let Some(r) = self.rolloff {
            cfg.modem.rrc_rolloff = r;
        }
        Ok(())
    }
}
