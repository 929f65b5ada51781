//! End-to-end sessions: source, link, receiver, reconstruction and report.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lowvhf_core::channel::ChannelRunner;
use lowvhf_core::framing::{extract_packets, FramingConfig, Packet, Polarity, ReceivedPacket, DEFAULT_MAX_PAYLOAD};
use lowvhf_core::metrics::{build_report, compute_ber, match_packets, LinkReport};
use lowvhf_core::modem::{ramp_bits, Demodulator, Modulator, RxDiagnostics};
use lowvhf_core::noise::{split_seed, GaussianSource};
use lowvhf_core::video::{generate_test_pattern, packetize, psnr_series, reconstruct, FrameStream, Geometry};
use lowvhf_core::Complex64;
use rayon::prelude::*;

use crate::config::{LinkMode, SessionConfig, SourceKind};
use crate::frames::{read_frames, write_frames, write_psnr_csv};
use crate::iqfile::IqWriter;
use crate::pktlog::{Direction, LogRecord, PacketLog};
use crate::report::{write_reports, write_sweep, SweepRow};

pub const REPORT_FILE: &str = "report.csv";
pub const PSNR_FILE: &str = "psnr.csv";
pub const TX_LOG_FILE: &str = "tx.nlpk";
pub const RX_LOG_FILE: &str = "rx.nlpk";
pub const TX_CSV_FILE: &str = "tx_packets.csv";
pub const RX_CSV_FILE: &str = "rx_packets.csv";
pub const REFERENCE_STEM: &str = "reference";
pub const RECEIVED_STEM: &str = "received";
pub const TX_IQ_FILE: &str = "tx.iq";
pub const RX_IQ_FILE: &str = "rx.iq";
pub const SWEEP_FILE: &str = "sweep.csv";

const BITS_PER_SYMBOL: u16 = 1;

/// Everything a session produced.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub report: LinkReport,
    pub tx_log: PacketLog,
    pub rx_log: PacketLog,
    /// Source frames, for video sessions.
    pub reference: Option<FrameStream>,
    /// Frames with at least one received chunk.
    pub received: Option<FrameStream>,
    /// Receiver state, for modem sessions.
    pub diagnostics: Option<RxDiagnostics>,
}

/// Payloads to send and, for video, the frames they carry.
fn source_payloads(cfg: &SessionConfig) -> anyhow::Result<(Vec<Vec<u8>>, Option<FrameStream>)> {
    let src = &cfg.source;
    match src.kind {
        SourceKind::Video => {
            let mut stream =
                generate_test_pattern(src.pattern(cfg.seed), src.width, src.height, src.channels, src.frames)?;
            stream.frame_rate = src.frame_rate;
            let payloads = packetize(&stream, cfg.payload_size)?;
            Ok((payloads, Some(stream)))
        }
        SourceKind::Opaque => {
            let mut rng = GaussianSource::new(split_seed(cfg.seed, 3));
            let mut bytes = Vec::with_capacity(src.bytes + 8);
            while bytes.len() < src.bytes {
                bytes.extend_from_slice(&rng.next_u64().to_le_bytes());
            }
            bytes.truncate(src.bytes);
            Ok((bytes.chunks(cfg.payload_size).map(<[u8]>::to_vec).collect(), None))
        }
    }
}

/// Flip each payload bit independently with probability `p`, jumping
/// between flips with geometric gaps.
fn flip_payloads(packets: &mut [Packet], p: f64, seed: u64) {
    if p <= 0.0 {
        return;
    }
    let mut rng = GaussianSource::new(seed);
    let total: u64 = packets.iter().map(|pk| 8 * pk.payload.len() as u64).sum();
    let log_q = (-p).ln_1p();
    let next = |rng: &mut GaussianSource| -> u64 {
        if p >= 1.0 {
            return 0;
        }
        let u = 1.0 - rng.uniform();
        let gap = (u.ln() / log_q).floor();
        if gap >= total as f64 {
            total
        } else {
            gap as u64
        }
    };
    let mut pos = next(&mut rng);
    let mut packet = 0;
    let mut base = 0u64;
    while pos < total {
        while pos >= base + 8 * packets[packet].payload.len() as u64 {
            base += 8 * packets[packet].payload.len() as u64;
            packet += 1;
        }
        let bit = (pos - base) as usize;
        packets[packet].payload[bit / 8] ^= 0x80 >> (bit % 8);
        pos = pos.saturating_add(1).saturating_add(next(&mut rng));
    }
}

struct IqSinks {
    tx: IqWriter<BufWriter<File>>,
    rx: IqWriter<BufWriter<File>>,
}

impl IqSinks {
    fn open(dir: &Path, sample_rate: f64) -> anyhow::Result<Self> {
        let open = |name| -> anyhow::Result<IqWriter<BufWriter<File>>> {
            let path = dir.join(name);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            Ok(IqWriter::new(BufWriter::new(file), sample_rate)?)
        };
        Ok(Self {
            tx: open(TX_IQ_FILE)?,
            rx: open(RX_IQ_FILE)?,
        })
    }
}

fn deliver(
    tx: &[Complex64],
    rx: &[Complex64],
    sinks: Option<&mut IqSinks>,
    demod: &mut Demodulator,
    bits: &mut Vec<u8>,
) -> anyhow::Result<()> {
    if let Some(s) = sinks {
        s.tx.write(tx)?;
        s.rx.write(rx)?;
    }
    demod.process(rx, bits);
    Ok(())
}

/// Stream the packets through modulator, channel and receiver in blocks.
fn run_modem(
    cfg: &SessionConfig,
    tx: &[Packet],
    iq_dir: Option<&Path>,
) -> anyhow::Result<(Vec<ReceivedPacket>, PacketLog, RxDiagnostics)> {
    let modem = cfg.modem_config();
    let model = cfg.channel_model()?;
    let sps = modem.samples_per_symbol;
    let mut modulator = Modulator::new(&modem);
    let mut channel = ChannelRunner::new(&model, modem.sample_rate, 1.0 / sps as f64)?;
    let mut demod = Demodulator::new(&modem);
    let mut sinks = iq_dir.map(|d| IqSinks::open(d, modem.sample_rate)).transpose()?;

    let mut bits = ramp_bits(modem.ramp_symbols);
    for p in tx {
        p.append_bits(&mut bits);
    }
    let mut rx_bits = Vec::with_capacity(bits.len() + 64);
    let mut samples = Vec::with_capacity(cfg.block_bits * sps);
    for block in bits.chunks(cfg.block_bits) {
        samples.clear();
        modulator.push_bits(block, &mut samples);
        let out = channel.process(&samples);
        deliver(&samples, &out, sinks.as_mut(), &mut demod, &mut rx_bits)?;
    }
    samples.clear();
    modulator.finish(&mut samples);
    let mut out = channel.process(&samples);
    out.extend(channel.finish());
    deliver(&samples, &out, sinks.as_mut(), &mut demod, &mut rx_bits)?;
    let diagnostics = demod.finish(&mut rx_bits);
    if let Some(s) = sinks {
        s.tx.finish()?;
        s.rx.finish()?;
    }

    let framing = FramingConfig {
        max_payload: DEFAULT_MAX_PAYLOAD,
        threshold: cfg.modem.preamble_threshold,
    };
    let extraction = extract_packets(&rx_bits, &framing);
    let mut log = PacketLog::new(&cfg.session_id);
    // Log in stream order, packets and discards interleaved.
    let mut records: Vec<LogRecord> = extraction
        .packets
        .iter()
        .map(LogRecord::rx)
        .chain(extraction.discards.iter().map(LogRecord::discard))
        .collect();
    records.sort_by_key(|r| r.capture_index);
    log.records = records;
    Ok((extraction.packets, log, diagnostics))
}

fn run_flip(cfg: &SessionConfig, tx: &[Packet]) -> (Vec<ReceivedPacket>, PacketLog) {
    let mut rx = tx.to_vec();
    flip_payloads(&mut rx, cfg.flip_rate, split_seed(cfg.seed, 2));
    let mut offset = 0;
    let received: Vec<ReceivedPacket> = rx
        .into_iter()
        .map(|packet| {
            let bit_offset = offset;
            offset += 8 * packet.serialized_len();
            ReceivedPacket {
                bit_offset,
                polarity: Polarity::Normal,
                packet,
            }
        })
        .collect();
    let mut log = PacketLog::new(&cfg.session_id);
    log.records = received.iter().map(LogRecord::rx).collect();
    (received, log)
}

/// Report from logs and frames alone; the session and [`cmd_analyze`] both
/// go through here.
pub fn analyze(
    tx_log: &PacketLog,
    rx_log: &PacketLog,
    reference: Option<&FrameStream>,
    received: Option<&FrameStream>,
) -> anyhow::Result<LinkReport> {
    let tx = tx_log.packets(Direction::Tx);
    let rx = rx_log.packets(Direction::Rx);
    let matches = match_packets(&tx, &rx);
    let series = match (reference, received) {
        (Some(r), Some(t)) => psnr_series(r, t)?,
        (Some(_), None) | (None, Some(_)) => bail!("PSNR needs both reference and received frames"),
        (None, None) => Vec::new(),
    };
    Ok(build_report(
        &tx_log.session_id,
        &matches,
        compute_ber(&matches),
        &series,
        rx_log.count(Direction::DiscardMalformed) as u64,
    ))
}

/// Run a session in memory. Sample dumps go to `iq_dir` when given.
pub fn run_session(cfg: &SessionConfig, iq_dir: Option<&Path>) -> anyhow::Result<SessionOutcome> {
    cfg.validate()?;
    let (payloads, reference) = source_payloads(cfg)?;
    let tx: Vec<Packet> = payloads
        .into_iter()
        .enumerate()
        .map(|(i, p)| Packet::new(p, i as u16, BITS_PER_SYMBOL, DEFAULT_MAX_PAYLOAD))
        .collect::<Result<_, _>>()?;
    let mut tx_log = PacketLog::new(&cfg.session_id);
    tx_log.records = tx.iter().enumerate().map(|(i, p)| LogRecord::tx(i as u64, p)).collect();

    let (received, rx_log, diagnostics) = match cfg.mode {
        LinkMode::Modem => {
            let (r, log, d) = run_modem(cfg, &tx, iq_dir)?;
            (r, log, Some(d))
        }
        LinkMode::Flip => {
            let (r, log) = run_flip(cfg, &tx);
            (r, log, None)
        }
    };

    let received_frames = match &reference {
        Some(_) => {
            let src = &cfg.source;
            let geometry = Geometry {
                width: src.width,
                height: src.height,
                channels: src.channels,
                n_frames: src.frames,
                payload_size: cfg.payload_size,
            };
            let rec = reconstruct(
                received.iter().map(|r| r.packet.payload.as_slice()),
                &geometry,
                src.frame_rate,
            )?;
            Some(rec.present_stream())
        }
        None => None,
    };
    let report = analyze(&tx_log, &rx_log, reference.as_ref(), received_frames.as_ref())?;
    Ok(SessionOutcome {
        report,
        tx_log,
        rx_log,
        reference,
        received: received_frames,
        diagnostics,
    })
}

/// Write the report, logs, frame dumps and PSNR series into `dir`.
pub fn write_artifacts(outcome: &SessionOutcome, cfg: &SessionConfig, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let path = dir.join(name);
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    };
    write_reports(create(REPORT_FILE)?, std::slice::from_ref(&outcome.report))?;
    outcome.tx_log.write_to(create(TX_LOG_FILE)?)?;
    outcome.rx_log.write_to(create(RX_LOG_FILE)?)?;
    outcome.tx_log.write_csv(create(TX_CSV_FILE)?)?;
    outcome.rx_log.write_csv(create(RX_CSV_FILE)?)?;
    if let (Some(reference), Some(received)) = (&outcome.reference, &outcome.received) {
        let geometry = (cfg.source.width, cfg.source.height, cfg.source.channels);
        write_frames(&dir.join(REFERENCE_STEM), reference, geometry)?;
        write_frames(&dir.join(RECEIVED_STEM), received, geometry)?;
        write_psnr_csv(create(PSNR_FILE)?, &outcome.report.psnr_series)?;
    }
    Ok(())
}

/// Run a session and write all artifacts to `cfg.output.dir`.
pub fn cmd_simulate(cfg: &SessionConfig) -> anyhow::Result<SessionOutcome> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let iq_dir = (cfg.output.write_iq && cfg.mode == LinkMode::Modem).then_some(dir.as_path());
    let outcome = run_session(cfg, iq_dir)?;
    write_artifacts(&outcome, cfg, dir)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Ebn0Db,
    FlipRate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ebn0Db => "ebn0_db",
            Self::FlipRate => "flip_rate",
        }
    }
}

pub fn point_dir(base: &Path, index: usize) -> PathBuf {
    base.join(format!("point-{index:03}"))
}

/// One session per value, in parallel. A failing point becomes a failed row;
/// the rest of the sweep still runs. Writes `sweep.csv` into
/// `base.output.dir`.
pub fn cmd_sweep(base: &SessionConfig, axis: SweepAxis, values: &[f64]) -> anyhow::Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let out = &base.output.dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Ebn0Db => cfg.set_ebn0_db(value),
                SweepAxis::FlipRate => cfg.set_flip_rate(value),
            }
            cfg.session_id = format!("{}-{}-{i:03}", base.session_id, axis.name());
            cfg.output.dir = point_dir(out, i);
            SweepRow {
                axis: axis.name().into(),
                value,
                report: cmd_simulate(&cfg).map(|o| o.report).map_err(|e| format!("{e:#}")),
            }
        })
        .collect();
    let path = out.join(SWEEP_FILE);
    write_sweep(
        BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?),
        &rows,
    )?;
    Ok(rows)
}

/// Rebuild a report from persisted logs and, optionally, frame dumps.
pub fn cmd_analyze(
    tx_log: &Path,
    rx_log: &Path,
    frames: Option<(&Path, &Path)>,
) -> anyhow::Result<LinkReport> {
    let tx = PacketLog::load(tx_log).with_context(|| format!("reading {}", tx_log.display()))?;
    let rx = PacketLog::load(rx_log).with_context(|| format!("reading {}", rx_log.display()))?;
    let frames = frames
        .map(|(r, t)| -> anyhow::Result<_> {
            let reference = read_frames(r).with_context(|| format!("reading {}", r.display()))?;
            let received = read_frames(t).with_context(|| format!("reading {}", t.display()))?;
            Ok((reference, received))
        })
        .transpose()?;
    analyze(&tx, &rx, frames.as_ref().map(|f| &f.0), frames.as_ref().map(|f| &f.1))
}

/// Throughput figures for a configuration.
pub fn pacing_summary(cfg: &SessionConfig) -> String {
    let modem = cfg.modem_config();
    let link_kbps = modem.symbol_rate() * f64::from(BITS_PER_SYMBOL) / 1e3;
    let src = &cfg.source;
    let frame_bytes = (src.width * src.height * src.channels) as f64;
    let chunk = (cfg.payload_size - lowvhf_core::video::CHUNK_PREFIX_LEN) as f64;
    let packets_per_frame = (frame_bytes / chunk).ceil();
    let overhead = lowvhf_core::framing::HEADER_LEN as f64 + lowvhf_core::video::CHUNK_PREFIX_LEN as f64;
    let frame_air_bits = 8.0 * (frame_bytes + packets_per_frame * overhead);
    let raw_kbps = frame_air_bits * src.frame_rate / 1e3;
    format!(
        "sample rate           {:.0} S/s\n\
         samples per symbol    {}\n\
         link bit rate         {:.3} kbit/s\n\
         target video rate     {:.3} kbit/s\n\
         raw frame             {} x {} x {} bytes, {} packets\n\
         raw video at {:.1} fps {:.3} kbit/s on air\n\
         frames per second the link can carry raw: {:.4}\n",
        modem.sample_rate,
        modem.samples_per_symbol,
        link_kbps,
        cfg.video_bit_rate_kbps,
        src.width,
        src.height,
        src.channels,
        packets_per_frame,
        src.frame_rate,
        raw_kbps,
        link_kbps * 1e3 / frame_air_bits,
    )
}
