//! In-process map/shuffle/reduce engine.
//!
//! Semantics are those of the sequential definition: group map outputs by
//! key, order groups by key bytes, order values inside a group by payload
//! bytes, reduce each group and concatenate the outputs in key order. The
//! parallel execution below is observationally identical to that, whatever
//! the worker count.
//!
//! Keys and values travel as bytes. Keys use a big-endian fixed-width
//! encoding, so unsigned integers and tuples of them sort numerically.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use bincode::Options;
use itertools::Itertools;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Records a map worker keeps in memory before sealing a sorted run.
pub const DEFAULT_SPILL_THRESHOLD: usize = 1 << 16;

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("job `{job}`: map failed on record {record}: {source}")]
    Map {
        job: &'static str,
        record: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("job `{job}`: reduce failed on key {key}: {source}")]
    Reduce {
        job: &'static str,
        key: String,
        #[source]
        source: Box<Error>,
    },
    #[error("job `{job}`: cannot {action} {what}: {source}")]
    Codec {
        job: &'static str,
        action: &'static str,
        what: String,
        #[source]
        source: bincode::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn codec() -> impl Options + Copy {
    bincode::DefaultOptions::new()
        .with_big_endian()
        .with_fixint_encoding()
}

pub fn encode<T: Serialize + ?Sized>(value: &T) -> bincode::Result<Vec<u8>> {
    codec().serialize(value)
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> bincode::Result<T> {
    codec().deserialize(bytes)
}

/// Map output in wire form: one buffer, records addressed by span.
#[derive(Debug, Default)]
struct Run {
    bytes: Vec<u8>,
    spans: Vec<Span>,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    key_len: u32,
    value_len: u32,
}

impl Run {
    fn len(&self) -> usize {
        self.spans.len()
    }

    fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    fn record(&self, s: &Span) -> (&[u8], &[u8]) {
        let mid = s.start + s.key_len as usize;
        (&self.bytes[s.start..mid], &self.bytes[mid..mid + s.value_len as usize])
    }

    fn sorted(mut self) -> Self {
        let mut spans = std::mem::take(&mut self.spans);
        spans.sort_unstable_by(|a, b| self.record(a).cmp(&self.record(b)));
        spans.shrink_to_fit();
        self.spans = spans;
        self.bytes.shrink_to_fit();
        self
    }

    fn records(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.spans.iter().map(|s| self.record(s))
    }
}

/// Collects the key/value pairs a map function emits.
pub struct Emitter<K, V> {
    job: &'static str,
    run: Run,
    tag: Option<u8>,
    _types: std::marker::PhantomData<fn(K, V)>,
}

impl<K: Serialize, V: Serialize> Emitter<K, V> {
    fn new(job: &'static str, tag: Option<u8>) -> Self {
        Self {
            job,
            run: Run::default(),
            tag,
            _types: std::marker::PhantomData,
        }
    }

    pub fn emit(&mut self, key: &K, value: &V) -> Result<(), JobError> {
        let start = self.run.bytes.len();
        let written = self.write(key, value);
        if written.is_err() {
            self.run.bytes.truncate(start);
        }
        let (key_len, value_len) = written?;
        self.run.spans.push(Span {
            start,
            key_len,
            value_len,
        });
        Ok(())
    }

    fn write(&mut self, key: &K, value: &V) -> Result<(u32, u32), JobError> {
        let bytes = &mut self.run.bytes;
        let start = bytes.len();
        codec().serialize_into(&mut *bytes, key).map_err(|source| JobError::Codec {
            job: self.job,
            action: "encode",
            what: "key".into(),
            source,
        })?;
        let mid = bytes.len();
        if let Some(tag) = self.tag {
            bytes.push(tag);
        }
        codec()
            .serialize_into(&mut *bytes, value)
            .map_err(|source| JobError::Codec {
                job: self.job,
                action: "encode",
                what: "value".into(),
                source,
            })?;
        let len = |n: usize| u32::try_from(n).expect("shuffled record under 4 GiB");
        Ok((len(mid - start), len(bytes.len() - mid)))
    }
}

/// Provenance of a value in a two-input job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tagged<A, B> {
    Left(A),
    Right(B),
}

type MapFn<'a, I, K, V> = dyn Fn(&I, &mut Emitter<K, V>) -> Result<(), Error> + Send + Sync + 'a;
type ReduceFn<'a, K, V, O> = dyn Fn(&K, Vec<V>, &mut Vec<O>) -> Result<(), Error> + Send + Sync + 'a;

/// A single-input job. Side inputs are whatever the closures borrow; they
/// must be read-only for the duration of the job.
pub struct JobSpec<'a, I, K, V, O> {
    pub name: &'static str,
    pub map: Box<MapFn<'a, I, K, V>>,
    pub reduce: Box<ReduceFn<'a, K, V, O>>,
}

impl<'a, I, K, V, O> JobSpec<'a, I, K, V, O> {
    pub fn new(
        name: &'static str,
        map: impl Fn(&I, &mut Emitter<K, V>) -> Result<(), Error> + Send + Sync + 'a,
        reduce: impl Fn(&K, Vec<V>, &mut Vec<O>) -> Result<(), Error> + Send + Sync + 'a,
    ) -> Self {
        Self {
            name,
            map: Box::new(map),
            reduce: Box::new(reduce),
        }
    }
}

/// A job over two inputs with one map function each. Reduce sees the
/// co-grouped values, left-input values first.
pub struct DualJobSpec<'a, A, B, K, VA, VB, O> {
    pub name: &'static str,
    pub map_left: Box<MapFn<'a, A, K, VA>>,
    pub map_right: Box<MapFn<'a, B, K, VB>>,
    pub reduce: Box<ReduceFn<'a, K, Tagged<VA, VB>, O>>,
}

impl<'a, A, B, K, VA, VB, O> DualJobSpec<'a, A, B, K, VA, VB, O> {
    pub fn new(
        name: &'static str,
        map_left: impl Fn(&A, &mut Emitter<K, VA>) -> Result<(), Error> + Send + Sync + 'a,
        map_right: impl Fn(&B, &mut Emitter<K, VB>) -> Result<(), Error> + Send + Sync + 'a,
        reduce: impl Fn(&K, Vec<Tagged<VA, VB>>, &mut Vec<O>) -> Result<(), Error>
            + Send
            + Sync
            + 'a,
    ) -> Self {
        Self {
            name,
            map_left: Box::new(map_left),
            map_right: Box::new(map_right),
            reduce: Box::new(reduce),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobTrace {
    pub job: &'static str,
    pub phase: &'static str,
    pub records_in: usize,
    pub records_out: usize,
    pub groups: usize,
    pub elapsed: Duration,
}

impl std::fmt::Display for JobTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "job={} phase={} records_in={} records_out={} groups={} elapsed_ms={:.3}",
            self.job,
            self.phase,
            self.records_in,
            self.records_out,
            self.groups,
            self.elapsed.as_secs_f64() * 1e3
        )
    }
}

pub struct Engine {
    pool: rayon::ThreadPool,
    workers: usize,
    spill_threshold: usize,
    traces: Mutex<Vec<JobTrace>>,
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self, JobError> {
        Self::with_spill_threshold(workers, DEFAULT_SPILL_THRESHOLD)
    }

    pub fn with_spill_threshold(workers: usize, spill_threshold: usize) -> Result<Self, JobError> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("gridknn-worker-{i}"))
            .build()
            .map_err(|e| JobError::Pool(e.to_string()))?;
        Ok(Self {
            pool,
            workers,
            spill_threshold: spill_threshold.max(1),
            traces: Mutex::new(Vec::new()),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Drains the per-phase trace collected so far.
    pub fn take_traces(&self) -> Vec<JobTrace> {
        std::mem::take(&mut *self.traces.lock().unwrap())
    }

    fn trace(&self, t: JobTrace) {
        log::debug!("{t}");
        self.traces.lock().unwrap().push(t);
    }

    pub fn execute<I, K, V, O>(
        &self,
        job: &JobSpec<'_, I, K, V, O>,
        input: &[I],
    ) -> Result<Vec<O>, JobError>
    where
        I: Sync,
        K: Serialize + DeserializeOwned,
        V: Serialize + DeserializeOwned,
        O: Send,
    {
        let started = Instant::now();
        let runs = self.map_side(job.name, input, None, &*job.map)?;
        let emitted = runs.iter().map(Run::len).sum();
        self.trace(JobTrace {
            job: job.name,
            phase: "map",
            records_in: input.len(),
            records_out: emitted,
            groups: 0,
            elapsed: started.elapsed(),
        });
        self.reduce_side(job.name, runs, emitted, |key: &K, values: &[&[u8]], out| {
            let values = values
                .iter()
                .map(|v| decode_value::<V>(job.name, v))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((job.reduce)(key, values, out))
        })
    }

    pub fn execute_dual_input<A, B, K, VA, VB, O>(
        &self,
        job: &DualJobSpec<'_, A, B, K, VA, VB, O>,
        left: &[A],
        right: &[B],
    ) -> Result<Vec<O>, JobError>
    where
        A: Sync,
        B: Sync,
        K: Serialize + DeserializeOwned,
        VA: Serialize + DeserializeOwned,
        VB: Serialize + DeserializeOwned,
        O: Send,
    {
        let started = Instant::now();
        let mut runs = self.map_side(job.name, left, Some(0), &*job.map_left)?;
        runs.extend(self.map_side(job.name, right, Some(1), &*job.map_right)?);
        let emitted = runs.iter().map(Run::len).sum();
        self.trace(JobTrace {
            job: job.name,
            phase: "map",
            records_in: left.len() + right.len(),
            records_out: emitted,
            groups: 0,
            elapsed: started.elapsed(),
        });
        self.reduce_side(job.name, runs, emitted, |key: &K, values: &[&[u8]], out| {
            let values = values
                .iter()
                .map(|v| match v.split_first() {
                    Some((0, rest)) => decode_value::<VA>(job.name, rest).map(Tagged::Left),
                    Some((_, rest)) => decode_value::<VB>(job.name, rest).map(Tagged::Right),
                    None => unreachable!("tagged payloads are never empty"),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((job.reduce)(key, values, out))
        })
    }

    /// Parallel map with no shuffle; output order follows input order.
    pub fn map_only<I, O>(
        &self,
        name: &'static str,
        input: &[I],
        f: impl Fn(&I) -> Result<O, Error> + Send + Sync,
    ) -> Result<Vec<O>, JobError>
    where
        I: Sync,
        O: Send,
    {
        let started = Instant::now();
        let out = self.pool.install(|| {
            input
                .par_iter()
                .enumerate()
                .map(|(record, x)| {
                    f(x).map_err(|e| JobError::Map {
                        job: name,
                        record,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        self.trace(JobTrace {
            job: name,
            phase: "map",
            records_in: input.len(),
            records_out: out.len(),
            groups: 0,
            elapsed: started.elapsed(),
        });
        Ok(out)
    }

    fn map_side<I, K, V>(
        &self,
        job: &'static str,
        input: &[I],
        tag: Option<u8>,
        map: &MapFn<'_, I, K, V>,
    ) -> Result<Vec<Run>, JobError>
    where
        I: Sync,
        K: Serialize,
        V: Serialize,
    {
        if input.is_empty() {
            return Ok(Vec::new());
        }
        let chunk = input.len().div_ceil(self.workers * 4).max(1);
        let threshold = self.spill_threshold;
        let per_chunk = self.pool.install(|| {
            input
                .par_chunks(chunk)
                .enumerate()
                .map(|(chunk_index, records)| {
                    let mut runs = Vec::new();
                    let mut emitter = Emitter::new(job, tag);
                    for (offset, record) in records.iter().enumerate() {
                        let index = chunk_index * chunk + offset;
                        map(record, &mut emitter).map_err(|e| match e {
                            Error::Job(inner) => inner,
                            other => JobError::Map {
                                job,
                                record: index,
                                source: Box::new(other),
                            },
                        })?;
                        if emitter.run.len() >= threshold {
                            runs.push(std::mem::take(&mut emitter.run).sorted());
                        }
                    }
                    if !emitter.run.is_empty() {
                        runs.push(emitter.run.sorted());
                    }
                    Ok(runs)
                })
                .collect::<Result<Vec<_>, JobError>>()
        })?;
        Ok(per_chunk.into_iter().flatten().collect())
    }

    fn reduce_side<K, O>(
        &self,
        job: &'static str,
        runs: Vec<Run>,
        emitted: usize,
        reduce: impl Fn(&K, &[&[u8]], &mut Vec<O>) -> Result<Result<(), Error>, JobError>
            + Send
            + Sync,
    ) -> Result<Vec<O>, JobError>
    where
        K: Serialize + DeserializeOwned,
        O: Send,
    {
        let started = Instant::now();
        let merged: Vec<(&[u8], &[u8])> = runs.iter().map(Run::records).kmerge().collect();
        let groups: Vec<&[(&[u8], &[u8])]> = merged.chunk_by(|a, b| a.0 == b.0).collect();

        let per_group = self.pool.install(|| {
            groups
                .par_iter()
                .map(|group| {
                    let key: K = decode(group[0].0).map_err(|source| JobError::Codec {
                        job,
                        action: "decode",
                        what: "key".into(),
                        source,
                    })?;
                    let values: Vec<&[u8]> = group.iter().map(|r| r.1).collect();
                    let mut out = Vec::new();
                    reduce(&key, &values, &mut out)?.map_err(|e| JobError::Reduce {
                        job,
                        key: hex_key(group[0].0),
                        source: Box::new(e),
                    })?;
                    Ok(out)
                })
                .collect::<Result<Vec<_>, JobError>>()
        })?;
        let out: Vec<O> = per_group.into_iter().flatten().collect();
        self.trace(JobTrace {
            job,
            phase: "reduce",
            records_in: emitted,
            records_out: out.len(),
            groups: groups.len(),
            elapsed: started.elapsed(),
        });
        Ok(out)
    }
}

fn decode_value<V: DeserializeOwned>(job: &'static str, bytes: &[u8]) -> Result<V, JobError> {
    decode(bytes).map_err(|source| JobError::Codec {
        job,
        action: "decode",
        what: "value".into(),
        source,
    })
}

fn hex_key(bytes: &[u8]) -> String {
    let mut s = String::from("0x");
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
