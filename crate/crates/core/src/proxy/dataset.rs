//! Training samples `(Y*, X_s, L(Y*, X_s))` and their binary file format.
//!
//! ```text
//! "PXDS" | u16 version | u32 len | header JSON
//!        | per sample: u64 problem id | f64 × slots | f64 × dim | f64 target
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::encoding::EncodingDescriptor;
use crate::error::{Error, Result};
use crate::landscape::{configuration_loss, InverseProblem};
use crate::numcore::checkpoint::{read_f64s, read_json_bytes, write_f64s, write_json};
use crate::simulators::SystemSpec;

pub const MAGIC: &[u8; 4] = b"PXDS";
pub const VERSION: u16 = 1;

/// Stream offset separating sample draws from problem generation.
const SAMPLE_STREAM_SALT: u64 = 0x5A4D_504C_0000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub system: SystemSpec,
    pub encoding: EncodingDescriptor,
    pub seed: u64,
    pub samples_per_trajectory: usize,
    pub problem_count: usize,
    pub sample_count: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub problem_ids: Vec<u64>,
    /// Unscaled trajectory slots, one row per sample.
    pub encoded: Array2<f64>,
    /// Raw `X_s`, one row per sample.
    pub params: Array2<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_json(w, &self.header)?;
        for i in 0..self.len() {
            w.write_all(&self.problem_ids[i].to_le_bytes())?;
            write_f64s(w, self.encoded.row(i).iter().copied())?;
            write_f64s(w, self.params.row(i).iter().copied())?;
            write_f64s(w, [self.targets[i]])?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format(format!("bad magic {magic:?}, expected PXDS")));
        }
        let mut version = [0u8; 2];
        r.read_exact(&mut version)?;
        let version = u16::from_le_bytes(version);
        if version != VERSION {
            return Err(Error::format(format!("unsupported dataset version {version}")));
        }
        let header: DatasetHeader = serde_json::from_slice(&read_json_bytes(r)?)?;
        let (n, s, d) = (
            header.sample_count,
            header.encoding.slot_count(),
            header.encoding.param_dim(),
        );
        let mut ids = Vec::with_capacity(n);
        let mut encoded = Vec::with_capacity(n * s);
        let mut params = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let mut id = [0u8; 8];
            r.read_exact(&mut id)?;
            ids.push(u64::from_le_bytes(id));
            encoded.extend(read_f64s(r, s)?);
            params.extend(read_f64s(r, d)?);
            targets.push(read_f64s(r, 1)?[0]);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after last sample"));
        }
        Ok(Self {
            header,
            problem_ids: ids,
            encoded: Array2::from_shape_vec((n, s), encoded).expect("sized"),
            params: Array2::from_shape_vec((n, d), params).expect("sized"),
            targets,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}

struct ProblemSamples {
    id: u64,
    encoded: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
    skipped: usize,
}

fn sample_problem(
    problem: &InverseProblem,
    encoding: &EncodingDescriptor,
    n: usize,
    seed: u64,
) -> Result<ProblemSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM_SALT ^ problem.id);
    let encoded = match &problem.true_trajectory {
        Some(y) => encoding.raw_slots(y)?,
        None => Vec::new(),
    };
    let bounds = problem.bounds();
    let mut rows = Vec::with_capacity(n);
    let mut skipped = 0;
    for _ in 0..n {
        let xs = bounds.sample(&mut rng);
        match configuration_loss(problem, &xs) {
            Ok(l) if l.is_finite() => rows.push((xs, l)),
            Ok(l) => {
                log::warn!("problem {}: non-finite loss {l} at {xs:?}, sample skipped", problem.id);
                skipped += 1;
            }
            Err(e) => {
                log::warn!("{e}; sample at {xs:?} skipped");
                skipped += 1;
            }
        }
    }
    Ok(ProblemSamples {
        id: problem.id,
        encoded,
        rows,
        skipped,
    })
}

/// Draw `n` uniform `X_s ∈ Z` per problem and record `L(Y*, X_s)`.
/// Samples are stored problem-major; failed simulations are skipped, and the
/// run fails when more than 1% of samples are skipped.
pub fn generate_dataset(
    problems: &[InverseProblem],
    config: &TrainingConfig,
    encoding: &EncodingDescriptor,
) -> Result<Dataset> {
    let first = problems
        .first()
        .ok_or_else(|| Error::config("generate_dataset needs at least one problem"))?;
    if problems.iter().any(|p| p.system != first.system) {
        return Err(Error::config("all problems in a dataset must share one system"));
    }
    check_inputs(&first.system, config, encoding)?;
    let per_problem = problems
        .par_iter()
        .map(|p| sample_problem(p, encoding, config.samples_per_trajectory, config.seed))
        .collect::<Result<Vec<_>>>()?;
    assemble(&first.system, config, encoding, per_problem)
}

/// [`generate_dataset`] over `InverseProblem::batch(system, problem_seed,
/// config.dataset_size)`, simulating each problem inside its worker so only
/// the encoded slots stay in memory.
pub fn generate_seeded_dataset(
    system: &SystemSpec,
    problem_seed: u64,
    config: &TrainingConfig,
    encoding: &EncodingDescriptor,
) -> Result<Dataset> {
    check_inputs(system, config, encoding)?;
    if config.dataset_size == 0 {
        return Err(Error::config("dataset_size must be positive"));
    }
    let per_problem = (0..config.dataset_size as u64)
        .into_par_iter()
        .map(|i| {
            let p = InverseProblem::generate(system, problem_seed, i)?;
            sample_problem(&p, encoding, config.samples_per_trajectory, config.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(system, config, encoding, per_problem)
}

fn check_inputs(system: &SystemSpec, config: &TrainingConfig, encoding: &EncodingDescriptor) -> Result<()> {
    if encoding.system != system.id() {
        return Err(Error::shape("encoding descriptor belongs to a different system"));
    }
    if config.samples_per_trajectory == 0 {
        return Err(Error::config("samples_per_trajectory must be positive"));
    }
    Ok(())
}

fn assemble(
    system: &SystemSpec,
    config: &TrainingConfig,
    encoding: &EncodingDescriptor,
    per_problem: Vec<ProblemSamples>,
) -> Result<Dataset> {
    let n = config.samples_per_trajectory;
    let problem_count = per_problem.len();
    let total = problem_count * n;
    let skipped: usize = per_problem.iter().map(|p| p.skipped).sum();
    if skipped * 100 > total {
        return Err(Error::TooManySkipped { skipped, total });
    }
    let count = total - skipped;
    let (s, d) = (encoding.slot_count(), encoding.param_dim());
    let mut ids = Vec::with_capacity(count);
    let mut encoded = Vec::with_capacity(count * s);
    let mut params = Vec::with_capacity(count * d);
    let mut targets = Vec::with_capacity(count);
    for p in per_problem {
        for (xs, l) in p.rows {
            ids.push(p.id);
            encoded.extend_from_slice(&p.encoded);
            params.extend(xs);
            targets.push(l);
        }
    }
    Ok(Dataset {
        header: DatasetHeader {
            system: system.clone(),
            encoding: encoding.clone(),
            seed: config.seed,
            samples_per_trajectory: n,
            problem_count,
            sample_count: count,
            skipped,
        },
        problem_ids: ids,
        encoded: Array2::from_shape_vec((count, s), encoded).expect("sized"),
        params: Array2::from_shape_vec((count, d), params).expect("sized"),
        targets,
    })
}
