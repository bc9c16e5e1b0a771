//! JSON Lines dataset files, arena-disjoint folds and height rebalancing.
//!
//! A dataset file is a header line followed by one sample per line:
//!
//! ```text
//! {"schema_version":1,"folds":{"A":[0,3],"B":[1,4],"C":[2]}}
//! {"id":0,"arena":0,"cal":{...},"ball_3d":[X,Y,Z],"ball_px":[x,y],"foot_px":[x,y],"h_true":..,"diam_px":..}
//! ```
//!
//! Doubles are written in shortest round-trip form and parsed with correct
//! rounding, so a write/read cycle is bit-exact.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use thiserror::Error;

use crate::rng::{self, domain};
use crate::synth::BallSample;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: u32 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed record at sample {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("fold violation: {0}")]
    FoldViolation(String),
    #[error("unknown fold {0:?}")]
    UnknownFold(String),
    #[error("every sample lies on one side of {threshold_m} m")]
    OneSidedDataset { threshold_m: f64 },
}

pub type Folds = BTreeMap<String, BTreeSet<u32>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema_version: u32,
    pub samples: Vec<BallSample>,
    pub folds: Folds,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    folds: Folds,
}

/// Fold names `A`, `B`, ... with arena `a` in fold `a % n_folds`.
pub fn round_robin_folds(n_arenas: u32, n_folds: u32) -> Folds {
    let n_folds = n_folds.clamp(1, 26).min(n_arenas.max(1));
    let mut folds = Folds::new();
    for a in 0..n_arenas {
        let name = char::from(b'A' + (a % n_folds) as u8).to_string();
        folds.entry(name).or_default().insert(a);
    }
    folds
}

impl Dataset {
    pub fn new(samples: Vec<BallSample>, folds: Folds) -> Result<Self, DataError> {
        let ds = Self { schema_version: SCHEMA_VERSION, samples, folds };
        ds.check()?;
        Ok(ds)
    }

    /// Checks fold membership and id uniqueness.
    pub fn check(&self) -> Result<(), DataError> {
        let mut owner: BTreeMap<u32, &str> = BTreeMap::new();
        for (name, arenas) in &self.folds {
            for &a in arenas {
                if let Some(prev) = owner.insert(a, name) {
                    return Err(DataError::FoldViolation(format!(
                        "arena {a} is in folds {prev:?} and {name:?}"
                    )));
                }
            }
        }
        let mut ids = HashSet::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if !owner.contains_key(&s.arena_id) {
                return Err(DataError::FoldViolation(format!(
                    "sample {i} has arena {} which belongs to no fold",
                    s.arena_id
                )));
            }
            if !ids.insert(s.sample_id) {
                return Err(DataError::MalformedRecord {
                    index: i,
                    reason: format!("duplicate id {}", s.sample_id),
                });
            }
        }
        Ok(())
    }

    pub fn fold_of(&self, arena_id: u32) -> Option<&str> {
        self.folds
            .iter()
            .find(|(_, arenas)| arenas.contains(&arena_id))
            .map(|(name, _)| name.as_str())
    }
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut sink: W) -> Result<(), DataError> {
    let header = Header { schema_version: ds.schema_version, folds: ds.folds.clone() };
    serde_json::to_writer(&mut sink, &header).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    for s in &ds.samples {
        serde_json::to_writer(&mut sink, s).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(source: R) -> Result<Dataset, DataError> {
    let mut lines = source.lines();
    let header_line =
        lines.next().ok_or_else(|| DataError::MalformedHeader("empty file".into()))??;
    let raw: serde_json::Value = serde_json::from_str(&header_line)
        .map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    let found = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DataError::MalformedHeader("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(DataError::SchemaVersionMismatch { found: found as u32 });
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| DataError::MalformedHeader(e.to_string()))?;

    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = samples.len();
        let sample: BallSample = serde_json::from_str(&line)
            .map_err(|e| DataError::MalformedRecord { index, reason: e.to_string() })?;
        samples.push(sample);
    }
    let ds = Dataset { schema_version: header.schema_version, samples, folds: header.folds };
    ds.check()?;
    Ok(ds)
}

/// Splits into (train, test) with `test_fold` held out.
pub fn split(ds: &Dataset, test_fold: &str) -> Result<(Dataset, Dataset), DataError> {
    let test_arenas =
        ds.folds.get(test_fold).ok_or_else(|| DataError::UnknownFold(test_fold.to_string()))?;
    let (test, train): (Vec<_>, Vec<_>) =
        ds.samples.iter().cloned().partition(|s| test_arenas.contains(&s.arena_id));
    let mut train_folds = ds.folds.clone();
    let test_folds = Folds::from([(test_fold.to_string(), train_folds.remove(test_fold).unwrap())]);
    Ok((
        Dataset { schema_version: ds.schema_version, samples: train, folds: train_folds },
        Dataset { schema_version: ds.schema_version, samples: test, folds: test_folds },
    ))
}

/// Oversamples whichever side of `threshold_m` (ball height) has fewer samples
/// until both sides are equal. Originals keep their order; duplicates are
/// appended.
pub fn rebalance(
    samples: &[BallSample],
    threshold_m: f64,
    seed: u64,
) -> Result<Vec<BallSample>, DataError> {
    let (above, below): (Vec<usize>, Vec<usize>) =
        (0..samples.len()).partition(|&i| samples[i].ball_3d.z > threshold_m);
    if above.is_empty() || below.is_empty() {
        return Err(DataError::OneSidedDataset { threshold_m });
    }
    let (minority, deficit) = if above.len() < below.len() {
        (&above, below.len() - above.len())
    } else {
        (&below, above.len() - below.len())
    };
    let mut rng = rng::stream(seed, domain::REBALANCE, 0);
    let mut out = samples.to_vec();
    out.extend(
        (0..deficit).map(|_| samples[minority[rng.random_range(0..minority.len())]].clone()),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, ArenaSpec, HeightDistSpec};
    use nalgebra::Point3;

    fn small(n: usize, n_arenas: u32) -> Dataset {
        let s = generate_dataset(
            4,
            n,
            &ArenaSpec::default(),
            &HeightDistSpec::ballistic_like(),
            n_arenas,
        )
        .unwrap();
        Dataset::new(s, round_robin_folds(n_arenas, 3)).unwrap()
    }

    fn roundtrip(ds: &Dataset) -> Dataset {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        read_dataset(buf.as_slice()).unwrap()
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset::new(vec![], Folds::new()).unwrap();
        assert_eq!(roundtrip(&ds), ds);
    }

    #[test]
    fn synthetic_dataset_round_trips_bit_exact() {
        let ds = small(500, 6);
        let back = roundtrip(&ds);
        assert_eq!(back, ds);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.ball_3d.x.to_bits(), b.ball_3d.x.to_bits());
            assert_eq!(a.cal.rotation[(1, 2)].to_bits(), b.cal.rotation[(1, 2)].to_bits());
        }
    }

    #[test]
    fn record_layout() {
        let ds = small(2, 1);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), r#"{"schema_version":1,"folds":{"A":[0]}}"#);
        let rec: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        let keys: Vec<&str> = rec.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["id", "arena", "cal", "ball_3d", "ball_px", "foot_px", "h_true", "diam_px"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(rec["ball_3d"].as_array().unwrap().len(), 3);
        assert_eq!(rec["ball_px"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn missing_cal_is_malformed_at_index() {
        let ds = small(3, 1);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
        rec.as_object_mut().unwrap().remove("cal");
        lines[2] = rec.to_string();
        let err = read_dataset(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedRecord { index: 1, .. }), "{err}");
    }

    #[test]
    fn header_errors() {
        let err = read_dataset(r#"{"schema_version":2,"folds":{}}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::SchemaVersionMismatch { found: 2 }));
        assert!(matches!(read_dataset("".as_bytes()), Err(DataError::MalformedHeader(_))));
        assert!(matches!(read_dataset("nope".as_bytes()), Err(DataError::MalformedHeader(_))));
    }

    #[test]
    fn fold_violations() {
        let ds = small(4, 2);
        let mut folds = Folds::new();
        folds.insert("A".into(), BTreeSet::from([0]));
        assert!(matches!(
            Dataset::new(ds.samples.clone(), folds.clone()),
            Err(DataError::FoldViolation(_))
        ));
        folds.insert("B".into(), BTreeSet::from([0, 1]));
        assert!(matches!(
            Dataset::new(ds.samples.clone(), folds),
            Err(DataError::FoldViolation(_))
        ));
        let mut dup = ds.samples.clone();
        dup[1].sample_id = dup[0].sample_id;
        assert!(matches!(
            Dataset::new(dup, ds.folds.clone()),
            Err(DataError::MalformedRecord { index: 1, .. })
        ));
    }

    #[test]
    fn split_is_arena_disjoint() {
        let ds = small(300, 15);
        for fold in ds.folds.keys() {
            let (train, test) = split(&ds, fold).unwrap();
            assert_eq!(train.samples.len() + test.samples.len(), 300);
            let tr: BTreeSet<u32> = train.samples.iter().map(|s| s.arena_id).collect();
            let te: BTreeSet<u32> = test.samples.iter().map(|s| s.arena_id).collect();
            assert!(tr.is_disjoint(&te));
            assert!(!te.is_empty());
            train.check().unwrap();
            test.check().unwrap();
        }
        assert!(matches!(split(&ds, "Z"), Err(DataError::UnknownFold(_))));

        let single = small(10, 1);
        let (train, test) = split(&single, "A").unwrap();
        assert!(train.samples.is_empty());
        assert_eq!(test.samples.len(), 10);
    }

    fn with_heights(zs: &[f64]) -> Vec<BallSample> {
        let template = small(1, 1).samples[0].clone();
        zs.iter()
            .enumerate()
            .map(|(i, &z)| BallSample {
                sample_id: i as u64,
                ball_3d: Point3::new(0.0, 0.0, z),
                ..template.clone()
            })
            .collect()
    }

    #[test]
    fn rebalance_examples() {
        let balanced = with_heights(&[0.5, 3.0, 1.0, 2.5]);
        assert_eq!(rebalance(&balanced, 2.0, 1).unwrap(), balanced);

        let mut zs = vec![3.5; 60];
        zs.extend(std::iter::repeat_n(1.0, 741));
        let skewed = with_heights(&zs);
        let out = rebalance(&skewed, 2.0, 7).unwrap();
        let above = out.iter().filter(|s| s.ball_3d.z > 2.0).count();
        assert_eq!((above, out.len() - above), (741, 741));
        assert_eq!(&out[..801], skewed.as_slice());
        assert_eq!(out, rebalance(&skewed, 2.0, 7).unwrap());
        // idempotent once balanced
        assert_eq!(rebalance(&out, 2.0, 99).unwrap(), out);

        let err = rebalance(&with_heights(&[0.1, 0.2]), 2.0, 1).unwrap_err();
        assert!(matches!(err, DataError::OneSidedDataset { .. }));
    }
}
