//! JSONL dataset I/O: one sample object per `\n`-terminated line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Batch, BatchRole, Sample};

pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample =
            serde_json::from_str(&line).map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_batch_file(path: &Path, batch: &Batch) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_samples(&mut w, batch.samples())?;
    w.flush()?;
    Ok(())
}

pub fn read_batch_file(path: &Path, role: BatchRole) -> Result<Batch> {
    Batch::new(read_samples(File::open(path)?)?, role)
}

pub fn append_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    write_samples(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Provenance;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn arb_sample() -> impl Strategy<Value = Sample> {
        (
            "[a-z0-9-]{1,12}",
            prop::collection::btree_map("[A-Za-z0-9 ]{1,8}", "\\PC{0,40}", 1..4),
            "\\PC{0,20}",
            prop_oneof![
                Just(Provenance::Real),
                Just(Provenance::Generated),
                Just(Provenance::Feedback),
                Just(Provenance::Judge)
            ],
            0u64..1000,
        )
            .prop_map(|(id, inputs, label, provenance, iteration)| Sample {
                id,
                inputs,
                label,
                provenance,
                iteration,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(samples in prop::collection::vec(arb_sample(), 0..8)) {
            let mut buf = Vec::new();
            write_samples(&mut buf, &samples).unwrap();
            prop_assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), samples.len());
            prop_assert_eq!(read_samples(&buf[..]).unwrap(), samples);
        }
    }

    #[test]
    fn wire_shape() {
        let s = Sample {
            id: "1-0-0".into(),
            inputs: BTreeMap::from([("Text".into(), "hi".into())]),
            label: "pos".into(),
            provenance: Provenance::Generated,
            iteration: 0,
        };
        let mut buf = Vec::new();
        write_samples(&mut buf, std::slice::from_ref(&s)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"id\":\"1-0-0\",\"inputs\":{\"Text\":\"hi\"},\"label\":\"pos\",\"provenance\":\"generated\",\"iteration\":0}\n"
        );
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_samples(&b"{\"id\":1}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
