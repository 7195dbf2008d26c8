//! On-disk formats.
//!
//! Checkpoint: `"SMCD"`, version `0x01`, little-endian `u32` count of layer
//! sizes, the sizes as `u32`, `f64` dropout probability, `u32` masked hidden
//! layer (`u32::MAX` for all), then per layer the row-major `f64` weights
//! followed by the biases.
//!
//! Dataset binary twin: `"SMCD"`, version `0x01`, tag `b'T'`, `u64` record
//! count, then per record `u32` task, episode and step followed by eight
//! `f64` values in CSV column order.
//!
//! Every CSV is UTF-8 with LF line endings and a header row. Reals are
//! written with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use smcd_core::arm::TrajectoryRecord;
use smcd_core::control::ControlTrace;
use smcd_core::interpret::MaskBankEntry;
use smcd_core::linalg::Matrix;
use smcd_core::net::{Dense, DropoutNet, MaskScope};

use crate::error::{LabError, Result};

const MAGIC: &[u8; 4] = b"SMCD";
const VERSION: u8 = 0x01;
const ALL_LAYERS: u32 = u32::MAX;
const DATASET_TAG: u8 = b'T';

pub const DATASET_HEADER: [&str; 11] = ["task_id", "episode_id", "step", "q1", "q2", "u1", "u2", "x", "y", "l1", "l2"];
pub const CONTROL_HEADER: [&str; 12] = ["seed", "step", "q1", "q2", "u1", "u2", "x", "y", "xg", "yg", "err", "l2"];
pub const RESULT_HEADER: [&str; 6] = ["strategy", "burn_in", "horizon", "task_id", "rmse", "wall_time_ms"];

/// 17 significant digits in scientific notation.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn checkpoint_bytes(net: &DropoutNet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let sizes = net.layer_sizes();
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&net.dropout_p().to_le_bytes());
    let scope = match net.layout().scope() {
        MaskScope::AllHidden => ALL_LAYERS,
        MaskScope::Layer(l) => l as u32,
    };
    out.extend_from_slice(&scope.to_le_bytes());
    for layer in net.layers() {
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(LabError::format(self.path, format!("truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self) -> Result<()> {
        if self.take(4)? != MAGIC {
            return Err(LabError::format(self.path, "bad magic"));
        }
        let v = self.take(1)?[0];
        if v != VERSION {
            return Err(LabError::format(self.path, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(LabError::format(self.path, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<DropoutNet> {
    let mut c = Cursor { bytes, pos: 0, path };
    c.header()?;
    let n = c.u32()? as usize;
    if !(2..=1 << 16).contains(&n) {
        return Err(LabError::format(path, format!("implausible layer count {n}")));
    }
    let sizes: Vec<usize> = (0..n).map(|_| c.u32().map(|s| s as usize)).collect::<Result<_>>()?;
    let p = c.f64()?;
    let scope = match c.u32()? {
        ALL_LAYERS => MaskScope::AllHidden,
        l => MaskScope::Layer(l as usize),
    };
    let mut layers = Vec::with_capacity(n - 1);
    for w in sizes.windows(2) {
        let (i, o) = (w[0], w[1]);
        let weights = (0..i * o).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let bias = (0..o).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Dense { weights: Matrix::from_vec(o, i, weights), bias });
    }
    c.finish()?;
    Ok(DropoutNet::from_layers(layers, p)?.with_mask_scope(scope)?)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| LabError::io(path, e))?;
    Ok(buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn save_checkpoint(path: &Path, net: &DropoutNet) -> Result<()> {
    write_bytes(path, &checkpoint_bytes(net))
}

pub fn load_checkpoint(path: &Path) -> Result<DropoutNet> {
    checkpoint_from_bytes(&read_bytes(path)?, path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| LabError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn flush<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner().map_err(|e| LabError::io(path, e.into_error()))?.flush().map_err(|e| LabError::io(path, e))
}

pub fn write_dataset_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(DATASET_HEADER)?;
    for r in records {
        let mut row = vec![r.task_id.to_string(), r.episode_id.to_string(), r.step.to_string()];
        row.extend([r.q1, r.q2, r.u1, r.u2, r.x, r.y, r.l1, r.l2].map(real));
        w.write_record(&row)?;
    }
    flush(w, path)
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != DATASET_HEADER {
        return Err(LabError::format(path, format!("unexpected header {header:?}")));
    }
    let bad = |line: usize, what: &str| LabError::format(path, format!("record {line}: bad {what}"));
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let int = |i: usize| rec[i].parse::<u32>().map_err(|_| bad(n + 1, DATASET_HEADER[i]));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(n + 1, DATASET_HEADER[i]));
        out.push(TrajectoryRecord {
            task_id: int(0)?,
            episode_id: int(1)?,
            step: int(2)?,
            q1: f(3)?,
            q2: f(4)?,
            u1: f(5)?,
            u2: f(6)?,
            x: f(7)?,
            y: f(8)?,
            l1: f(9)?,
            l2: f(10)?,
        });
    }
    Ok(out)
}

pub fn dataset_bytes(records: &[TrajectoryRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + records.len() * 76);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DATASET_TAG);
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        for v in [r.task_id, r.episode_id, r.step] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [r.q1, r.q2, r.u1, r.u2, r.x, r.y, r.l1, r.l2] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn dataset_from_bytes(bytes: &[u8], path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut c = Cursor { bytes, pos: 0, path };
    c.header()?;
    if c.take(1)?[0] != DATASET_TAG {
        return Err(LabError::format(path, "not a dataset file"));
    }
    let n = c.u64()? as usize;
    if n.saturating_mul(76) > bytes.len() {
        return Err(LabError::format(path, format!("record count {n} exceeds file size")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(TrajectoryRecord {
            task_id: c.u32()?,
            episode_id: c.u32()?,
            step: c.u32()?,
            q1: c.f64()?,
            q2: c.f64()?,
            u1: c.f64()?,
            u2: c.f64()?,
            x: c.f64()?,
            y: c.f64()?,
            l1: c.f64()?,
            l2: c.f64()?,
        });
    }
    c.finish()?;
    Ok(out)
}

pub fn write_dataset_bin(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    write_bytes(path, &dataset_bytes(records))
}

pub fn read_dataset_bin(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    dataset_from_bytes(&read_bytes(path)?, path)
}

/// Reads a dataset, choosing the binary reader for `.bin` files.
pub fn read_dataset(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_dataset_bin(path)
    } else {
        read_dataset_csv(path)
    }
}

/// One row per adaptation step: step, effective sample size, MMSE mask.
pub fn write_mask_trace(path: &Path, rows: &[(usize, f64, Vec<f64>)]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.2.len());
    let mut w = csv_writer(path)?;
    let mut header = vec!["step".to_string(), "n_eff".to_string()];
    header.extend((0..d).map(|i| format!("m_{i}")));
    w.write_record(&header)?;
    for (step, n_eff, mask) in rows {
        let mut row = vec![step.to_string(), real(*n_eff)];
        row.extend(mask.iter().map(|&m| real(m)));
        w.write_record(&row)?;
    }
    flush(w, path)
}

/// Control traces in long format, one block of rows per seed.
pub fn write_control_traces(path: &Path, traces: &[(u64, &ControlTrace)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CONTROL_HEADER)?;
    for (seed, trace) in traces {
        for r in &trace.records {
            let mut row = vec![seed.to_string(), r.step.to_string()];
            row.extend([r.q[0], r.q[1], r.u[0], r.u[1], r.x[0], r.x[1], r.target[0], r.target[1], r.error, r.l2].map(real));
            w.write_record(&row)?;
        }
    }
    flush(w, path)
}

pub fn write_bank(path: &Path, bank: &[MaskBankEntry]) -> Result<()> {
    let d = bank.first().map_or(0, |e| e.mask.len());
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["task_id", "l1", "l2", "label", "burn_in", "seed"].map(String::from).to_vec();
    header.extend((0..d).map(|i| format!("m_{i}")));
    w.write_record(&header)?;
    for e in bank {
        let mut row = vec![
            e.task_id.to_string(),
            real(e.links.l1),
            real(e.links.l2),
            e.label.to_string(),
            e.burn_in.to_string(),
            e.seed.to_string(),
        ];
        row.extend(e.mask.iter().map(|&m| real(m)));
        w.write_record(&row)?;
    }
    flush(w, path)
}

pub fn read_bank(path: &Path) -> Result<Vec<MaskBankEntry>> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let width = r.headers()?.len();
    if width < 6 {
        return Err(LabError::format(path, "bank header too short"));
    }
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || LabError::format(path, format!("bank record {}: unparsable field", n + 1));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        out.push(MaskBankEntry {
            task_id: rec[0].parse().map_err(|_| bad())?,
            links: smcd_core::arm::LinkLengths::new(f(1)?, f(2)?),
            label: rec[3].parse().map_err(|_| bad())?,
            burn_in: rec[4].parse().map_err(|_| bad())?,
            seed: rec[5].parse().map_err(|_| bad())?,
            mask: (6..width).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Generic table writer for results and summaries.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    flush(w, path)
}
