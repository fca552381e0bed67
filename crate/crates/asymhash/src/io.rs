//! Flat file formats: datasets (binary and CSV), similarity matrices, packed
//! code files, model files, id sidecars, and the CSV reports. All binary
//! fields are little-endian; floats round-trip exactly because they are
//! stored (or, in model headers, printed) as raw bit patterns.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bitcode::PackedCodeMatrix;
use crate::datagen::{Dataset, SimilarityMatrix};
use crate::eval::{BitsRequired, PrPoint};
use crate::mat::Mat;
use crate::train::{CodeSide, LinearHash, TraceEntry, TrainedModel, Variant};
use crate::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"ABHX";
const SIMILARITY_MAGIC: &[u8; 4] = b"ABHS";
const CODES_MAGIC: &[u8; 4] = b"ABHC";
const WEIGHTS_MAGIC: &[u8; 4] = b"ABHW";
const MODEL_MAGIC: &[u8] = b"ABHM1\n";

fn read_exact_magic(r: &mut impl Read, magic: &[u8], what: &str) -> Result<()> {
    let mut buf = vec![0u8; magic.len()];
    r.read_exact(&mut buf)?;
    if buf != magic {
        return Err(Error::Format(format!("bad magic for {what}")));
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

// Upper bound on elements implied by any header before we allocate for
// them; a corrupt length field should fail cleanly, not abort on a huge
// allocation.
const MAX_FILE_ELEMENTS: usize = 1 << 31;

fn checked_len(a: usize, b: usize, what: &str) -> Result<usize> {
    match a.checked_mul(b) {
        Some(len) if len <= MAX_FILE_ELEMENTS => Ok(len),
        _ => Err(Error::Format(format!(
            "unreasonable {what} size: {a} x {b}"
        ))),
    }
}

// --------------------------------------------------------------------------
// datasets
// --------------------------------------------------------------------------

/// Writes the `ABHX` binary dataset: magic, u32 d, u32 n, then the points
/// column-major (one point after another) as f64.
pub fn write_dataset(w: &mut impl Write, x: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(x.d() as u32).to_le_bytes())?;
    w.write_all(&(x.n() as u32).to_le_bytes())?;
    for i in 0..x.n() {
        for &v in x.point(i) {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<Dataset> {
    read_exact_magic(r, DATASET_MAGIC, "dataset")?;
    let d = read_u32(r)? as usize;
    let n = read_u32(r)? as usize;
    let mut data = vec![0.0; checked_len(d, n, "dataset")?];
    for v in data.iter_mut() {
        *v = read_f64(r)?;
    }
    Dataset::new(d, n, data)
}

/// CSV dataset: one point per row, `d` comma-separated columns.
pub fn write_dataset_csv(w: &mut impl Write, x: &Dataset) -> Result<()> {
    for i in 0..x.n() {
        let row: Vec<String> = x.point(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_dataset_csv(r: &mut impl Read) -> Result<Dataset> {
    let reader = BufReader::new(r);
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        match d {
            None => d = Some(row.len()),
            Some(expect) if expect != row.len() => {
                return Err(Error::Format(format!(
                    "line {}: {} columns, expected {expect}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend_from_slice(&row);
        n += 1;
    }
    let d = d.ok_or_else(|| Error::Format("empty CSV dataset".to_string()))?;
    Dataset::new(d, n, data)
}

/// Loads a dataset, choosing the format by file extension (`.csv` or binary).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut file = std::fs::File::open(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_dataset_csv(&mut file)
    } else {
        read_dataset(&mut file)
    }
}

// --------------------------------------------------------------------------
// similarity matrices
// --------------------------------------------------------------------------

/// Writes the `ABHS` similarity file: magic, u32 n, then the n*n signs
/// packed row-major, one bit each (`1` encodes `+1`), LSB first.
pub fn write_similarity(w: &mut impl Write, s: &SimilarityMatrix) -> Result<()> {
    w.write_all(SIMILARITY_MAGIC)?;
    let n = s.n();
    w.write_all(&(n as u32).to_le_bytes())?;
    let total = n * n;
    let mut bytes = vec![0u8; total.div_ceil(8)];
    for (p, &sign) in s.signs().iter().enumerate() {
        if sign == 1 {
            bytes[p / 8] |= 1 << (p % 8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_similarity(r: &mut impl Read) -> Result<SimilarityMatrix> {
    read_exact_magic(r, SIMILARITY_MAGIC, "similarity")?;
    let n = read_u32(r)? as usize;
    let total = checked_len(n, n, "similarity")?;
    let mut bytes = vec![0u8; total.div_ceil(8)];
    r.read_exact(&mut bytes)?;
    let signs: Vec<i8> = (0..total)
        .map(|p| {
            if bytes[p / 8] >> (p % 8) & 1 == 1 {
                1
            } else {
                -1
            }
        })
        .collect();
    SimilarityMatrix::from_signs(n, signs)
}

// --------------------------------------------------------------------------
// packed codes
// --------------------------------------------------------------------------

/// Writes the `ABHC` code file: magic, u32 k, u32 n, then n columns of
/// ceil(k/64) u64 words.
pub fn write_codes(w: &mut impl Write, codes: &PackedCodeMatrix) -> Result<()> {
    w.write_all(CODES_MAGIC)?;
    w.write_all(&(codes.k() as u32).to_le_bytes())?;
    w.write_all(&(codes.n() as u32).to_le_bytes())?;
    for &word in codes.words() {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_codes(r: &mut impl Read) -> Result<PackedCodeMatrix> {
    read_exact_magic(r, CODES_MAGIC, "codes")?;
    let k = read_u32(r)? as usize;
    let n = read_u32(r)? as usize;
    let wpc = k.div_ceil(64);
    let mut words = vec![0u64; checked_len(wpc, n, "codes")?];
    for word in words.iter_mut() {
        *word = read_u64(r)?;
    }
    PackedCodeMatrix::from_words(k, n, words)
}

// --------------------------------------------------------------------------
// id sidecars
// --------------------------------------------------------------------------

/// One id per line.
pub fn write_ids(w: &mut impl Write, ids: &[String]) -> Result<()> {
    for id in ids {
        writeln!(w, "{id}")?;
    }
    Ok(())
}

pub fn read_ids(r: &mut impl Read) -> Result<Vec<String>> {
    BufReader::new(r)
        .lines()
        .map(|line| line.map_err(Error::from))
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .collect()
}

// --------------------------------------------------------------------------
// models
// --------------------------------------------------------------------------

fn write_hash_block(w: &mut impl Write, hash: &LinearHash) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&(hash.k() as u32).to_le_bytes())?;
    w.write_all(&(hash.d() as u32).to_le_bytes())?;
    for i in 0..hash.k() {
        for &v in hash.weights().row(i) {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_hash_block(r: &mut impl Read) -> Result<LinearHash> {
    read_exact_magic(r, WEIGHTS_MAGIC, "weights")?;
    let k = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    checked_len(k, d, "weights")?;
    let mut rows = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = vec![0.0; d];
        for v in row.iter_mut() {
            *v = read_f64(r)?;
        }
        rows.push(row);
    }
    LinearHash::new(Mat::from_rows(rows)?)
}

fn write_side(w: &mut impl Write, side: &CodeSide) -> Result<()> {
    match side {
        CodeSide::Hash(h) => write_hash_block(w, h),
        CodeSide::Codes(c) => write_codes(w, c),
    }
}

fn side_tag(side: &CodeSide) -> &'static str {
    match side {
        CodeSide::Hash(_) => "hash",
        CodeSide::Codes(_) => "codes",
    }
}

/// Writes a model file: a short text header (variant, k, theta and beta as
/// hex bit patterns, optional center, side kinds), then the two side blocks.
/// Loss traces and stage history are run artifacts, not part of the model.
pub fn write_model(w: &mut impl Write, model: &TrainedModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    writeln!(w, "variant {}", model.variant.as_str())?;
    writeln!(w, "k {}", model.k())?;
    writeln!(w, "theta {:016x}", model.theta.to_bits())?;
    writeln!(w, "beta {:016x}", model.beta.to_bits())?;
    if let Some(center) = &model.center {
        let hex: Vec<String> = center
            .iter()
            .map(|v| format!("{:016x}", v.to_bits()))
            .collect();
        writeln!(w, "center {}", hex.join(" "))?;
    }
    writeln!(w, "query {}", side_tag(&model.query))?;
    writeln!(w, "database {}", side_tag(&model.database))?;
    writeln!(w, "end")?;
    write_side(w, &model.query)?;
    write_side(w, &model.database)?;
    Ok(())
}

fn parse_hex_f64(tok: &str) -> Result<f64> {
    u64::from_str_radix(tok, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::Format(format!("bad hex float '{tok}': {e}")))
}

/// Reads a model file back. The returned model carries no loss trace or
/// stage history.
pub fn read_model(r: &mut impl Read) -> Result<TrainedModel> {
    let mut reader = BufReader::new(r);
    let mut magic = vec![0u8; MODEL_MAGIC.len()];
    reader.read_exact(&mut magic)?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format("bad magic for model".to_string()));
    }
    let mut variant = None;
    let mut theta = None;
    let mut beta = None;
    let mut center = None;
    let mut query_tag = None;
    let mut db_tag = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("model header ended early".to_string()));
        }
        let line = line.trim_end();
        if line == "end" {
            break;
        }
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("bad header line '{line}'")))?;
        match key {
            "variant" => variant = Some(Variant::parse(rest)?),
            "k" => {} // implied by the side blocks
            "theta" => theta = Some(parse_hex_f64(rest)?),
            "beta" => beta = Some(parse_hex_f64(rest)?),
            "center" => {
                center = Some(
                    rest.split(' ')
                        .map(parse_hex_f64)
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            "query" => query_tag = Some(rest.to_string()),
            "database" => db_tag = Some(rest.to_string()),
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    let variant = variant.ok_or_else(|| Error::Format("model header missing variant".into()))?;
    let theta = theta.ok_or_else(|| Error::Format("model header missing theta".into()))?;
    let beta = beta.ok_or_else(|| Error::Format("model header missing beta".into()))?;
    let mut read_side = |tag: Option<String>| -> Result<CodeSide> {
        match tag.as_deref() {
            Some("hash") => Ok(CodeSide::Hash(read_hash_block(&mut reader)?)),
            Some("codes") => Ok(CodeSide::Codes(read_codes(&mut reader)?)),
            other => Err(Error::Format(format!("bad side tag {other:?}"))),
        }
    };
    let query = read_side(query_tag)?;
    let database = read_side(db_tag)?;
    Ok(TrainedModel {
        variant,
        beta,
        theta,
        query,
        database,
        center,
        loss_trace: Vec::new(),
        stages: Vec::new(),
    })
}

// --------------------------------------------------------------------------
// CSV reports
// --------------------------------------------------------------------------

pub fn write_loss_trace_csv(w: &mut impl Write, trace: &[TraceEntry]) -> Result<()> {
    writeln!(w, "k,sweep,loss")?;
    for e in trace {
        writeln!(w, "{},{},{}", e.k, e.sweep, e.loss)?;
    }
    Ok(())
}

pub fn write_pr_csv(w: &mut impl Write, points: &[PrPoint]) -> Result<()> {
    writeln!(w, "theta,precision,recall")?;
    for p in points {
        writeln!(w, "{},{},{}", p.theta, p.precision, p.recall)?;
    }
    Ok(())
}

pub fn write_kap_csv(w: &mut impl Write, per_stage: &[(usize, f64)]) -> Result<()> {
    writeln!(w, "k,ap")?;
    for (k, ap) in per_stage {
        writeln!(w, "{k},{ap}")?;
    }
    Ok(())
}

/// Paired bits-required table: one row per AP target, symmetric and
/// asymmetric first-crossing code lengths (`-` when never reached).
pub fn write_bits_table_csv(
    w: &mut impl Write,
    sym: &[BitsRequired],
    asym: &[BitsRequired],
) -> Result<()> {
    if sym.len() != asym.len() {
        return Err(Error::dims("tables have different lengths".to_string()));
    }
    writeln!(w, "ap_target,k_sym,k_asym")?;
    for (s, a) in sym.iter().zip(asym) {
        if (s.target - a.target).abs() > 1e-12 {
            return Err(Error::invalid(
                "tables were built for different targets".to_string(),
            ));
        }
        let fmt = |b: Option<usize>| b.map_or("-".to_string(), |k| k.to_string());
        writeln!(w, "{},{},{}", s.target, fmt(s.bits), fmt(a.bits))?;
    }
    Ok(())
}

/// Convenience wrapper: create the file (and parents) and write through a
/// buffered writer.
pub fn save<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<std::fs::File>) -> Result<()>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcode::SignMatrix;
    use crate::datagen::gen_uniform;
    use crate::train::TrainConfig;
    use rand::Rng;

    #[test]
    fn dataset_binary_round_trip() {
        let x = gen_uniform(37, 5, 8).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &x).unwrap();
        let back = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(back, x);
        // byte-stable
        let mut buf2 = Vec::new();
        write_dataset(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let x = gen_uniform(9, 4, 20).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &x).unwrap();
        let back = read_dataset_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn csv_rejects_ragged_and_garbage() {
        assert!(read_dataset_csv(&mut "1,2\n3\n".as_bytes()).is_err());
        assert!(read_dataset_csv(&mut "1,2\n3,x\n".as_bytes()).is_err());
        assert!(read_dataset_csv(&mut "".as_bytes()).is_err());
    }

    #[test]
    fn corrupt_headers_fail_without_allocating() {
        // dataset header claiming u32::MAX x u32::MAX points
        let mut buf = Vec::new();
        buf.extend_from_slice(b"ABHX");
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_dataset(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));

        let mut buf = Vec::new();
        buf.extend_from_slice(b"ABHS");
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_similarity(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));

        let mut buf = Vec::new();
        buf.extend_from_slice(b"ABHC");
        buf.extend_from_slice(&1024u32.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_codes(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn similarity_round_trip() {
        let x = gen_uniform(23, 3, 5).unwrap();
        let s = SimilarityMatrix::from_radius(&x, 0.6).unwrap();
        let mut buf = Vec::new();
        write_similarity(&mut buf, &s).unwrap();
        let back = read_similarity(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn codes_round_trip_and_padding_check() {
        let mut rng = crate::seed_stream(71, "test/io");
        let rows: Vec<Vec<i8>> = (0..67)
            .map(|_| {
                (0..19)
                    .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                    .collect()
            })
            .collect();
        let codes = SignMatrix::from_rows(rows).unwrap().to_packed();
        let mut buf = Vec::new();
        write_codes(&mut buf, &codes).unwrap();
        let back = read_codes(&mut buf.as_slice()).unwrap();
        assert_eq!(back, codes);
        // corrupt a padding bit: the reader must reject it
        let last = buf.len() - 1;
        buf[last] |= 0x80;
        assert!(read_codes(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn model_files_round_trip_exactly_for_every_variant() {
        let x = gen_uniform(14, 6, 31).unwrap();
        let target = 0.3 * 13.0;
        let radius = crate::datagen::threshold_for_avg_neighbors(&x, target)
            .unwrap()
            .radius;
        let s = SimilarityMatrix::from_radius(&x, radius).unwrap();
        let config = TrainConfig {
            k_max: 3,
            seed: 77,
            sweeps_per_bit: 4,
            ..TrainConfig::default()
        };
        let mut models = vec![
            crate::train::train_unconstrained(&s, &config).unwrap(),
            crate::train::train_symmetric(&s, &config).unwrap(),
            crate::train::train_lin_lin(&x, &s, &config).unwrap(),
            crate::train::train_lin_v(&x, &s, &config).unwrap(),
            crate::baseline::lsh_model(6, 3, 77).unwrap(),
        ];
        models[2].center = Some(vec![0.25, -0.5, 0.125, 0.0, 1.0, -2.0]);
        for model in &models {
            let mut buf = Vec::new();
            write_model(&mut buf, model).unwrap();
            let back = read_model(&mut buf.as_slice()).unwrap();
            assert_eq!(back.variant, model.variant);
            assert_eq!(back.theta.to_bits(), model.theta.to_bits());
            assert_eq!(back.beta.to_bits(), model.beta.to_bits());
            assert_eq!(back.query, model.query);
            assert_eq!(back.database, model.database);
            assert_eq!(back.center, model.center);
            // write -> read -> write is byte-identical
            let mut buf2 = Vec::new();
            write_model(&mut buf2, &back).unwrap();
            assert_eq!(buf, buf2, "variant {:?}", model.variant);
        }
    }

    #[test]
    fn truncated_model_files_are_rejected() {
        let model = crate::baseline::lsh_model(4, 3, 5).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        for cut in [3, 10, buf.len() / 2, buf.len() - 1] {
            assert!(
                read_model(&mut buf[..cut].as_ref()).is_err(),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn ids_round_trip() {
        let ids: Vec<String> = (0..10).map(|i| format!("{i:04}")).collect();
        let mut buf = Vec::new();
        write_ids(&mut buf, &ids).unwrap();
        assert_eq!(read_ids(&mut buf.as_slice()).unwrap(), ids);
    }

    #[test]
    fn loss_trace_csv_shape() {
        let trace = vec![
            TraceEntry {
                k: 1,
                sweep: 0,
                loss: 12.5,
            },
            TraceEntry {
                k: 1,
                sweep: 1,
                loss: 10.0,
            },
        ];
        let mut buf = Vec::new();
        write_loss_trace_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "k,sweep,loss\n1,0,12.5\n1,1,10\n");
    }

    #[test]
    fn bits_table_csv_marks_unreached_targets() {
        let sym = vec![
            BitsRequired {
                target: 0.5,
                bits: Some(4),
            },
            BitsRequired {
                target: 0.9,
                bits: None,
            },
        ];
        let asym = vec![
            BitsRequired {
                target: 0.5,
                bits: Some(2),
            },
            BitsRequired {
                target: 0.9,
                bits: Some(6),
            },
        ];
        let mut buf = Vec::new();
        write_bits_table_csv(&mut buf, &sym, &asym).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "ap_target,k_sym,k_asym\n0.5,4,2\n0.9,-,6\n");
    }
}
