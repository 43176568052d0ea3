//! Labeled feature datasets: assembly from a circuit graph, CSV I/O, and
//! the stratified train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{all_distances, compute_lgfi, FeatureError, FeatureVector};
use crate::graph::CircuitGraph;

pub const CSV_HEADER: &str = "circuit,net,line,LGFi,FFi,FFo,PI,PO,label";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("malformed feature CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("stratum {stratum} cannot be split: {reason}")]
    EmptyStratum { stratum: String, reason: String },
}

/// Where a sample came from: circuit, driving net, and the source line of
/// the driving instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub circuit: String,
    pub net: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// 0 benign, 1 trojan.
    pub label: u8,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub n_benign: usize,
    pub n_trojan: usize,
}

impl ClassCounts {
    /// N_benign / N_trojan, the default positive-class weight.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        if self.n_trojan == 0 {
            None
        } else {
            Some(self.n_benign as f64 / self.n_trojan as f64)
        }
    }
}

/// Sentinel value substituted for unreachable distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SentinelPolicy {
    /// Longest finite level observed in the circuit, plus one.
    MaxFinitePlusOne,
    Fixed(u32),
}

/// An ordered collection of labeled samples. Samples are immutable after
/// construction, so the stored class counts always match a recount.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    counts: ClassCounts,
    /// Per-circuit sentinel used for unreachable distances (header metadata).
    sentinels: BTreeMap<String, u32>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, sentinels: BTreeMap<String, u32>) -> Self {
        let counts = recount(&samples);
        Dataset {
            samples,
            counts,
            sentinels,
        }
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        self.counts
    }

    pub fn sentinels(&self) -> &BTreeMap<String, u32> {
        &self.sentinels
    }

    pub fn merge<I: IntoIterator<Item = Dataset>>(parts: I) -> Dataset {
        let mut samples = Vec::new();
        let mut sentinels = BTreeMap::new();
        for part in parts {
            samples.extend(part.samples);
            sentinels.extend(part.sentinels);
        }
        Dataset::new(samples, sentinels)
    }

    /// Write the feature CSV: fixed header, one row per net, LF endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            let f = &s.features;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.provenance.circuit,
                s.provenance.net,
                s.provenance.line,
                f.lgfi,
                f.ffi,
                f.ffo,
                f.pi,
                f.po,
                s.label
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Dataset, DatasetError> {
        let mut samples = Vec::new();
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(header))) if header.trim_end() == CSV_HEADER => {}
            Some((_, Ok(header))) => {
                return Err(DatasetError::MalformedCsv {
                    line: 1,
                    message: format!("unexpected header `{header}`"),
                })
            }
            Some((_, Err(e))) => return Err(DatasetError::Io(e)),
            None => {
                return Err(DatasetError::MalformedCsv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        for (idx, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(DatasetError::MalformedCsv {
                    line: idx + 1,
                    message: format!("expected 9 fields, found {}", fields.len()),
                });
            }
            let parse_u32 = |s: &str, what: &str| -> Result<u32, DatasetError> {
                s.parse().map_err(|_| DatasetError::MalformedCsv {
                    line: idx + 1,
                    message: format!("bad {what} `{s}`"),
                })
            };
            let label: u8 = match fields[8] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(DatasetError::MalformedCsv {
                        line: idx + 1,
                        message: format!("bad label `{other}`"),
                    })
                }
            };
            samples.push(LabeledSample {
                features: FeatureVector {
                    lgfi: parse_u32(fields[3], "LGFi")?,
                    ffi: parse_u32(fields[4], "FFi")?,
                    ffo: parse_u32(fields[5], "FFo")?,
                    pi: parse_u32(fields[6], "PI")?,
                    po: parse_u32(fields[7], "PO")?,
                },
                label,
                provenance: Provenance {
                    circuit: fields[0].to_string(),
                    net: fields[1].to_string(),
                    line: parse_u32(fields[2], "line")?,
                },
            });
        }
        Ok(Dataset::new(samples, BTreeMap::new()))
    }

    pub fn from_csv_str(text: &str) -> Result<Dataset, DatasetError> {
        Self::read_csv(text.as_bytes())
    }
}

fn recount(samples: &[LabeledSample]) -> ClassCounts {
    let n_trojan = samples.iter().filter(|s| s.label == 1).count();
    ClassCounts {
        n_benign: samples.len() - n_trojan,
        n_trojan,
    }
}

/// One sample per gate-driven net, in deterministic order (combinational
/// depth, ties by net name). Unreachable distances take the circuit's
/// sentinel value.
pub fn extract_all(
    graph: &CircuitGraph,
    trojan_nets: &BTreeSet<String>,
    policy: SentinelPolicy,
) -> Result<Dataset, DatasetError> {
    let distances = all_distances(graph);
    let depth = graph.comb_depth();

    let mut nets = graph.gate_nets();
    nets.sort_by(|&a, &b| {
        depth[a]
            .cmp(&depth[b])
            .then_with(|| graph.net_name(a).cmp(graph.net_name(b)))
    });

    let sentinel = match policy {
        SentinelPolicy::Fixed(v) => v,
        SentinelPolicy::MaxFinitePlusOne => {
            let max_finite = nets
                .iter()
                .flat_map(|&n| {
                    [
                        distances.ffi[n],
                        distances.ffo[n],
                        distances.pi[n],
                        distances.po[n],
                    ]
                })
                .flatten()
                .max();
            max_finite.unwrap_or(0) + 1
        }
    };

    let mut samples = Vec::with_capacity(nets.len());
    for &net in &nets {
        let name = graph.net_name(net);
        let lgfi = compute_lgfi(graph, name)?;
        let features = FeatureVector {
            lgfi,
            ffi: distances.ffi[net].unwrap_or(sentinel),
            ffo: distances.ffo[net].unwrap_or(sentinel),
            pi: distances.pi[net].unwrap_or(sentinel),
            po: distances.po[net].unwrap_or(sentinel),
        };
        samples.push(LabeledSample {
            features,
            label: u8::from(trojan_nets.contains(name)),
            provenance: Provenance {
                circuit: graph.name().to_string(),
                net: name.to_string(),
                line: graph.node(graph.driver_of(net)).source_line,
            },
        });
    }
    let mut sentinels = BTreeMap::new();
    sentinels.insert(graph.name().to_string(), sentinel);
    Ok(Dataset::new(samples, sentinels))
}

/// FNV-1a over the seed and stratum identity; stable across platforms.
fn stratum_seed(seed: u64, circuit: &str, class: u8) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in seed.to_le_bytes() {
        eat(b);
    }
    for b in circuit.bytes() {
        eat(b);
    }
    eat(class);
    h
}

/// Split stratified by (circuit, class). Per-class test counts follow
/// largest-remainder allocation across circuits so that each class's global
/// test share matches the fraction to within rounding; membership within a
/// stratum is a seeded shuffle. Original sample order is preserved on both
/// sides.
pub fn stratified_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::InvalidFraction(test_fraction));
    }
    // (class, circuit) -> sample indices, in a deterministic order
    let mut strata: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        strata
            .entry((s.label, s.provenance.circuit.clone()))
            .or_default()
            .push(i);
    }

    let mut is_test = vec![false; dataset.len()];
    for class in [0u8, 1u8] {
        let class_strata: Vec<(&String, &Vec<usize>)> = strata
            .iter()
            .filter(|((c, _), _)| *c == class)
            .map(|((_, circuit), idxs)| (circuit, idxs))
            .collect();
        let total: usize = class_strata.iter().map(|(_, v)| v.len()).sum();
        if total == 0 {
            continue;
        }
        let target = (test_fraction * total as f64).round() as usize;
        if target == 0 || target == total {
            return Err(SplitError::EmptyStratum {
                stratum: format!("class {class} (all circuits)"),
                reason: format!("{total} samples at fraction {test_fraction} leave one side empty"),
            });
        }
        // largest-remainder allocation of `target` across circuits
        let mut base: Vec<usize> = Vec::with_capacity(class_strata.len());
        let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(class_strata.len());
        for (pos, (_, idxs)) in class_strata.iter().enumerate() {
            let quota = test_fraction * idxs.len() as f64;
            let b = quota.floor() as usize;
            base.push(b.min(idxs.len()));
            remainders.push((quota - b as f64, pos));
        }
        let assigned: usize = base.iter().sum();
        let mut leftover = target.saturating_sub(assigned);
        remainders.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("remainders are finite")
                .then_with(|| class_strata[a.1].0.cmp(class_strata[b.1].0))
        });
        for &(_, pos) in remainders.iter().cycle().take(remainders.len() * 2) {
            if leftover == 0 {
                break;
            }
            if base[pos] < class_strata[pos].1.len() {
                base[pos] += 1;
                leftover -= 1;
            }
        }
        for (pos, (circuit, idxs)) in class_strata.iter().enumerate() {
            let mut order: Vec<usize> = (*idxs).clone();
            let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed, circuit, class));
            order.shuffle(&mut rng);
            for &i in order.iter().take(base[pos]) {
                is_test[i] = true;
            }
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        if is_test[i] {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        Dataset::new(train, dataset.sentinels.clone()),
        Dataset::new(test, dataset.sentinels.clone()),
    ))
}
