//! On-disk formats: coordinate-list forward matrices, framed binary traces,
//! vector / summary CSVs. All binary data is little-endian.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{Dic, PosteriorSummary, ScalarSummary};
use crate::forward::{BlockSizes, ForwardProblem, ModelKind};
use crate::sampler::{ChainSamples, DrawScalars, PriorStructure};
use crate::sparse::{LinalgError, SparseMatrix};
use crate::spatial::NodeSet;

pub const FORWARD_MAGIC: &[u8; 8] = b"GMRFCOO\0";
pub const TRACE_MAGIC: &[u8; 8] = b"GMRFTRC\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), FormatError> {
    let mut m = [0; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(FormatError::Corrupt("wrong magic header".into()));
    }
    let v = get_u32(r)?;
    if v != FORMAT_VERSION {
        return Err(FormatError::Corrupt(format!("unsupported format version {v}")));
    }
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_str<R: Read>(r: &mut R, max: usize) -> Result<String, FormatError> {
    let n = get_u32(r)? as usize;
    if n > max {
        return Err(FormatError::Corrupt(format!("string of {n} bytes")));
    }
    let mut b = vec![0; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| FormatError::Corrupt("non-utf8 string".into()))
}

/// Layout: magic, version, hash string, `nrows ncols usa hyp time nnz`
/// (u64), then `nnz` records of `(row u64, col u64, value f64)`.
pub fn write_forward<W: Write>(mut w: W, problem: &ForwardProblem<f64>, hash: &str) -> io::Result<()> {
    let x = problem.design();
    let b = problem.blocks();
    w.write_all(FORWARD_MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_str(&mut w, hash)?;
    for v in [x.nrows(), x.ncols(), b.usa, b.hyp, b.time, x.nnz()] {
        put_u64(&mut w, v as u64)?;
    }
    for (r, c, v) in x.iter() {
        put_u64(&mut w, r as u64)?;
        put_u64(&mut w, c as u64)?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Reads a forward matrix; observations are zero-filled.
pub fn read_forward<R: Read>(r: R) -> Result<(ForwardProblem<f64>, String), FormatError> {
    let mut r = BufReader::new(r);
    check_magic(&mut r, FORWARD_MAGIC)?;
    let hash = get_str(&mut r, 1 << 10)?;
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = get_u64(&mut r)? as usize;
    }
    let [nrows, ncols, usa, hyp, time, nnz] = dims;
    if usa + hyp + time != ncols || (hyp == 0) != (time == 0) {
        return Err(FormatError::Corrupt(format!("block sizes {usa}+{hyp}+{time} vs {ncols} columns")));
    }
    let mut parts: [Vec<(usize, usize, f64)>; 3] = Default::default();
    for _ in 0..nnz {
        let (row, col, v) = (get_u64(&mut r)? as usize, get_u64(&mut r)? as usize, get_f64(&mut r)?);
        match col {
            c if c < usa => parts[0].push((row, c, v)),
            c if c < usa + hyp => parts[1].push((row, c - usa, v)),
            c => parts[2].push((row, c - usa - hyp, v)),
        }
    }
    if r.fill_buf()?.len() > 0 {
        return Err(FormatError::Corrupt("trailing bytes".into()));
    }
    let [pu, ph, pt] = parts;
    let x_usa = SparseMatrix::from_triplets(nrows, usa, pu)?;
    let (x_hyp, x_time) = if hyp > 0 {
        (
            Some(SparseMatrix::from_triplets(nrows, hyp, ph)?),
            Some(SparseMatrix::from_triplets(nrows, time, pt)?),
        )
    } else {
        (None, None)
    };
    Ok((
        ForwardProblem {
            x_usa,
            x_hyp,
            x_time,
            y: vec![0.0; nrows],
        },
        hash,
    ))
}

/// Hash line that precedes the header of every CSV artifact.
fn hash_line<W: Write>(w: &mut W, hash: &str) -> io::Result<()> {
    writeln!(w, "# hash={hash}")
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Hash recorded in the leading `# hash=` line, if any.
pub fn read_hash_line<R: Read>(r: R) -> io::Result<Option<String>> {
    let mut line = String::new();
    BufReader::new(r).read_line(&mut line)?;
    Ok(line.trim().strip_prefix("# hash=").map(str::to_owned))
}

/// `index,value` CSV.
pub fn write_vector_csv<W: Write>(mut w: W, values: &[f64], hash: &str) -> Result<(), FormatError> {
    hash_line(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        c.write_record([i.to_string(), format_f64(*v)])?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_vector_csv<R: Read>(r: R) -> Result<Vec<f64>, FormatError> {
    #[derive(Deserialize)]
    struct Row {
        index: usize,
        value: f64,
    }
    let mut out = Vec::new();
    for (k, row) in csv_reader(r).deserialize::<Row>().enumerate() {
        let row = row?;
        if row.index != k {
            return Err(FormatError::Corrupt(format!("row {k} has index {}", row.index)));
        }
        out.push(row.value);
    }
    Ok(out)
}

/// `id,x,y,z` node coordinates.
pub fn write_nodes_csv<W: Write>(mut w: W, nodes: &NodeSet<f64>, hash: &str) -> Result<(), FormatError> {
    hash_line(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["id", "x", "y", "z"])?;
    for (i, p) in nodes.coords().iter().enumerate() {
        c.write_record([i.to_string(), format_f64(p[0]), format_f64(p[1]), format_f64(p[2])])?;
    }
    c.flush()?;
    Ok(())
}

/// Shortest representation that round-trips.
fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Identifies a trace and ties it to its configuration and problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config_hash: String,
    pub data_hash: String,
    pub blocks: BlockSizes,
    pub model: ModelKind,
    pub structure: PriorStructure,
    pub seed: u64,
}

/// Streams draws as length-prefixed records:
/// `u32 len | u64 iteration | 7 x f64 scalars | d x f64 beta`.
pub struct TraceWriter<W: Write> {
    inner: W,
    dim: usize,
    buf: Vec<u8>,
}

const SCALARS_PER_RECORD: usize = 7;

impl<W: Write> TraceWriter<W> {
    pub fn new(mut inner: W, header: &TraceHeader) -> Result<Self, FormatError> {
        inner.write_all(TRACE_MAGIC)?;
        put_u32(&mut inner, FORMAT_VERSION)?;
        put_str(&mut inner, &serde_json::to_string(header)?)?;
        inner.flush()?;
        Ok(Self {
            inner,
            dim: header.blocks.total(),
            buf: Vec::new(),
        })
    }

    /// Appends and flushes one record, so a crash loses at most the record
    /// being written.
    pub fn write(&mut self, s: &DrawScalars<f64>, beta: &[f64]) -> io::Result<()> {
        if beta.len() != self.dim {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "draw length"));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&(s.iteration as u64).to_le_bytes());
        for v in [s.eta_usa, s.eta_hyp, s.eta_time, s.phi, s.psi, s.log_likelihood, s.log_posterior]
            .iter()
            .chain(beta)
        {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut self.inner, self.buf.len() as u32)?;
        self.inner.write_all(&self.buf)?;
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[derive(Debug, Clone)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub samples: ChainSamples<f64>,
    /// A trailing partial record was dropped.
    pub truncated: bool,
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got)
}

/// Reads every complete record; a torn final record is reported, not fatal.
pub fn read_trace<R: Read>(r: R) -> Result<TraceFile, FormatError> {
    let mut r = BufReader::new(r);
    check_magic(&mut r, TRACE_MAGIC)?;
    let header: TraceHeader = serde_json::from_str(&get_str(&mut r, 1 << 20)?)?;
    let dim = header.blocks.total();
    let expected = 8 * (1 + SCALARS_PER_RECORD + dim);
    let mut samples = ChainSamples::empty(header.blocks, header.model, header.structure);
    let mut truncated = false;
    let mut len = [0u8; 4];
    let mut rec = vec![0u8; expected];
    let mut beta = vec![0.0; dim];
    loop {
        match read_full(&mut r, &mut len)? {
            0 => break,
            4 => {}
            _ => {
                truncated = true;
                break;
            }
        }
        if u32::from_le_bytes(len) as usize != expected {
            return Err(FormatError::Corrupt(format!("record of {} bytes, expected {expected}", u32::from_le_bytes(len))));
        }
        if read_full(&mut r, &mut rec)? < expected {
            truncated = true;
            break;
        }
        let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let iteration = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes")) as usize;
        for (i, b) in beta.iter_mut().enumerate() {
            *b = f(1 + SCALARS_PER_RECORD + i);
        }
        samples.push(
            DrawScalars {
                iteration,
                eta_usa: f(1),
                eta_hyp: f(2),
                eta_time: f(3),
                phi: f(4),
                psi: f(5),
                log_likelihood: f(6),
                log_posterior: f(7),
            },
            &beta,
        );
    }
    if truncated {
        log::warn!("trace ends in a partial record; kept {} complete draws", samples.len());
    }
    Ok(TraceFile {
        header,
        samples,
        truncated,
    })
}

/// One row per draw: scalars then `beta_0 .. beta_{d-1}`.
pub fn export_trace_csv<W: Write>(mut w: W, samples: &ChainSamples<f64>, hash: &str) -> Result<(), FormatError> {
    hash_line(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    let mut head: Vec<String> = [
        "iteration",
        "eta_usa",
        "eta_hyp",
        "eta_time",
        "phi",
        "psi",
        "log_likelihood",
        "log_posterior",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    head.extend((0..samples.dim()).map(|i| format!("beta_{i}")));
    c.write_record(&head)?;
    for (s, b) in samples.scalars.iter().zip(samples.draws()) {
        let mut row = vec![s.iteration.to_string()];
        row.extend(
            [s.eta_usa, s.eta_hyp, s.eta_time, s.phi, s.psi, s.log_likelihood, s.log_posterior]
                .iter()
                .chain(b)
                .map(|&v| format_f64(v)),
        );
        c.write_record(&row)?;
    }
    c.flush()?;
    Ok(())
}

/// Global scalars of a posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub config_hash: String,
    pub data_hash: String,
    pub structure: PriorStructure,
    pub model: ModelKind,
    pub n_draws: usize,
    pub quantiles: (f64, f64),
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub dic_short_chain: bool,
    pub data_misfit_mode: f64,
    pub data_misfit_lower: f64,
    pub data_misfit_upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_misfit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub significant_count: usize,
    pub mean_interval_width: f64,
    pub phi: ScalarSummary,
    pub eta_usa: ScalarSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hyp: Option<ScalarSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_time: Option<ScalarSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<ScalarSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_acceptance: Option<f64>,
}

impl SummaryReport {
    pub fn new(s: &PosteriorSummary, header: &TraceHeader) -> Self {
        let Dic {
            dic,
            p_d,
            mean_deviance,
            deviance_at_mean,
        } = s.dic;
        Self {
            config_hash: header.config_hash.clone(),
            data_hash: header.data_hash.clone(),
            structure: header.structure,
            model: header.model,
            n_draws: s.n_draws,
            quantiles: s.quantiles,
            dic,
            p_d,
            mean_deviance,
            deviance_at_mean,
            dic_short_chain: s.dic_short_chain,
            data_misfit_mode: s.data_misfit_mode,
            data_misfit_lower: s.data_misfit_lower,
            data_misfit_upper: s.data_misfit_upper,
            model_misfit: s.model_misfit,
            coverage: s.coverage,
            significant_count: s.significant_count(),
            mean_interval_width: s.mean_interval_width(header.blocks.usa),
            phi: s.phi,
            eta_usa: s.eta_usa,
            eta_hyp: s.eta_hyp,
            eta_time: s.eta_time,
            psi: s.psi,
            psi_acceptance: s.psi_acceptance,
        }
    }
}

/// Per-parameter CSV: velocity nodes carry coordinates, source
/// parameters (Model 2) leave them empty.
pub fn write_summary_csv<W: Write>(mut w: W, s: &PosteriorSummary, nodes: &NodeSet<f64>, blocks: BlockSizes, hash: &str) -> Result<(), FormatError> {
    if s.mean.len() != blocks.total() || nodes.len() != blocks.usa {
        return Err(FormatError::Corrupt("summary does not match the node set".into()));
    }
    hash_line(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["index", "block", "x", "y", "z", "mean", "mode", "lower", "upper", "ess", "significant"])?;
    for i in 0..s.mean.len() {
        let (block, xyz) = if i < blocks.usa {
            let p = nodes.coords()[i];
            ("usa", [format_f64(p[0]), format_f64(p[1]), format_f64(p[2])])
        } else if i < blocks.usa + blocks.hyp {
            ("hyp", Default::default())
        } else {
            ("time", Default::default())
        };
        let [x, y, z] = xyz;
        c.write_record([
            i.to_string(),
            block.to_string(),
            x,
            y,
            z,
            format_f64(s.mean[i]),
            format_f64(s.mode[i]),
            format_f64(s.lower[i]),
            format_f64(s.upper[i]),
            s.ess[i].map(format_f64).unwrap_or_default(),
            (s.significant[i] as u8).to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

/// `index,x,y,z,mean` for a point estimate, a column subset of the summary CSV.
pub fn write_estimate_csv<W: Write>(mut w: W, beta: &[f64], nodes: &NodeSet<f64>, hash: &str) -> Result<(), FormatError> {
    hash_line(&mut w, hash)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["index", "block", "x", "y", "z", "mean"])?;
    for (i, b) in beta.iter().enumerate() {
        let (block, xyz) = match nodes.coords().get(i) {
            Some(p) => ("usa", [format_f64(p[0]), format_f64(p[1]), format_f64(p[2])]),
            None => ("source", Default::default()),
        };
        let [x, y, z] = xyz;
        c.write_record([i.to_string(), block.to_string(), x, y, z, format_f64(*b)])?;
    }
    c.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(usa: usize) -> TraceHeader {
        TraceHeader {
            config_hash: "c".into(),
            data_hash: "d".into(),
            blocks: BlockSizes { usa, hyp: 0, time: 0 },
            model: ModelKind::Model1,
            structure: PriorStructure::SphericalReciprocal,
            seed: 3,
        }
    }

    fn scalars(k: usize) -> DrawScalars<f64> {
        DrawScalars {
            iteration: k,
            eta_usa: 1.5,
            eta_hyp: 1.0,
            eta_time: 1.0,
            phi: 0.4,
            psi: 10.0 + k as f64,
            log_likelihood: -3.0,
            log_posterior: -(k as f64),
        }
    }

    #[test]
    fn trace_round_trip_and_torn_tail() {
        let mut w = TraceWriter::new(Vec::new(), &header(2)).unwrap();
        for k in 0..3 {
            w.write(&scalars(k), &[k as f64, -0.1]).unwrap();
        }
        let bytes = w.into_inner();
        let t = read_trace(&bytes[..]).unwrap();
        assert!(!t.truncated);
        assert_eq!(t.samples.len(), 3);
        assert_eq!(t.samples.draw(2), &[2.0, -0.1]);
        assert_eq!(t.samples.scalars[1], scalars(1));
        let cut = read_trace(&bytes[..bytes.len() - 5]).unwrap();
        assert!(cut.truncated);
        assert_eq!(cut.samples.len(), 2);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_trace(&bad[..]).is_err());
    }

    #[test]
    fn forward_round_trip() {
        let x = SparseMatrix::from_triplets(2, 5, [(0, 0, 1.5), (1, 2, 0.25), (0, 3, -0.1), (1, 4, 1.0)]).unwrap();
        let cols = |lo: usize, hi: usize| {
            SparseMatrix::from_triplets(2, hi - lo, x.iter().filter(|e| e.1 >= lo && e.1 < hi).map(|(r, c, v)| (r, c - lo, v))).unwrap()
        };
        let p = ForwardProblem {
            x_usa: cols(0, 2),
            x_hyp: Some(cols(2, 4)),
            x_time: Some(cols(4, 5)),
            y: vec![0.0; 2],
        };
        let mut buf = Vec::new();
        write_forward(&mut buf, &p, "abc").unwrap();
        assert_eq!(&buf[..8], FORWARD_MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        let (q, h) = read_forward(&buf[..]).unwrap();
        assert_eq!(h, "abc");
        assert_eq!(q, p);
    }

    #[test]
    fn vector_csv_round_trip_with_hash() {
        let v = vec![0.1, -2.0, 1e-300, 3.0];
        let mut buf = Vec::new();
        write_vector_csv(&mut buf, &v, "h1").unwrap();
        assert_eq!(read_hash_line(&buf[..]).unwrap().as_deref(), Some("h1"));
        assert_eq!(read_vector_csv(&buf[..]).unwrap(), v);
    }
}
