//! An embedded MapReduce executor.
//!
//! A job maps every record of its input splits to key/value pairs, routes
//! each pair to a partition by a seeded hash of the encoded key, groups each
//! partition by key, and calls the reducer exactly once per distinct key.
//! Map tasks run in parallel over splits and reduce tasks in parallel over
//! partitions, with a barrier between the phases. With the `parallel`
//! feature disabled, or with one worker, everything runs on the calling
//! thread.
//!
//! Splits are cut by a fixed record count, independent of the worker count,
//! so a job's output set never depends on how many workers or partitions
//! were configured.

pub mod codec;
mod spill;
pub mod wordcount;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use indexmap::IndexSet;

use codec::stable_hash;
pub use codec::Datum;
use spill::{GroupedMerge, Run};

#[derive(Debug, thiserror::Error)]
pub enum MrError {
    #[error("job `{job}`: map failed on input {input}, record {index} ({record}): {message}")]
    Map {
        job: String,
        input: usize,
        index: usize,
        record: String,
        message: String,
    },
    #[error("job `{job}`: reduce failed on key {key}: {message}")]
    Reduce { job: String, key: String, message: String },
    #[error("job `{job}`: spill I/O failed: {source}")]
    Spill {
        job: String,
        #[source]
        source: io::Error,
    },
    #[error("pipeline stage {index}: {source}")]
    Stage {
        index: usize,
        #[source]
        source: Box<MrError>,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Failure reported by a user map or reduce function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskError(pub String);

impl<S: Into<String>> From<S> for TaskError {
    fn from(s: S) -> Self {
        TaskError(s.into())
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// Reduce partitions; 0 means one per worker.
    pub partitions: usize,
    /// Records per map split.
    pub split_size: usize,
    /// Directory for spilled map output. `None` keeps everything in memory.
    pub spill_dir: Option<PathBuf>,
    /// Buffered records per map-task partition before a sorted run is spilled.
    pub spill_threshold: usize,
    /// Groups larger than this are counted as skewed in [`JobStats`].
    pub group_limit: usize,
    pub hash_seed: u64,
    /// Keep a [`JobStats`] entry for every job run.
    pub keep_log: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            partitions: 0,
            split_size: 4096,
            spill_dir: None,
            spill_threshold: 1 << 20,
            group_limit: 1 << 20,
            hash_seed: 0x5eed_0f4a_11aa,
            keep_log: true,
        }
    }
}

impl EngineConfig {
    pub fn with_workers(workers: usize, partitions: usize) -> Self {
        EngineConfig {
            workers,
            partitions,
            ..Default::default()
        }
    }
}

/// Per-job counters, one line each in the job log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobStats {
    pub name: String,
    pub splits: usize,
    pub partitions: usize,
    pub map_records_in: usize,
    pub map_records_out: usize,
    pub reduce_groups: usize,
    pub reduce_records_out: usize,
    pub max_group: usize,
    pub skewed_groups: usize,
    pub spilled_runs: usize,
    pub wall: Duration,
}

impl fmt::Display for JobStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "job={} in={} map_out={} groups={} out={} max_group={} skewed={} spilled={} ms={:.3}",
            self.name,
            self.map_records_in,
            self.map_records_out,
            self.reduce_groups,
            self.reduce_records_out,
            self.max_group,
            self.skewed_groups,
            self.spilled_runs,
            self.wall.as_secs_f64() * 1e3
        )
    }
}

/// Random access to the records of one job input.
pub trait Source<I>: Sync {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> &I;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<I: Sync> Source<I> for [I] {
    fn len(&self) -> usize {
        <[I]>::len(self)
    }
    fn get(&self, index: usize) -> &I {
        &self[index]
    }
}

impl<I: Sync> Source<I> for &[I] {
    fn len(&self) -> usize {
        <[I]>::len(self)
    }
    fn get(&self, index: usize) -> &I {
        &self[index]
    }
}

impl<I: Sync> Source<I> for Vec<I> {
    fn len(&self) -> usize {
        Vec::len(self)
    }
    fn get(&self, index: usize) -> &I {
        &self[index]
    }
}

impl<I: Sync, S: Sync> Source<I> for IndexSet<I, S> {
    fn len(&self) -> usize {
        IndexSet::len(self)
    }
    fn get(&self, index: usize) -> &I {
        &self[index]
    }
}

/// Collects the key/value pairs produced by one map task, already routed to partitions.
pub struct Emitter<K, V> {
    seed: u64,
    buffers: Vec<Vec<(K, V)>>,
    scratch: Vec<u8>,
    spill_threshold: usize,
    full: Vec<usize>,
}

impl<K: Datum, V> Emitter<K, V> {
    fn new(partitions: usize, seed: u64, spill_threshold: usize) -> Self {
        Emitter {
            seed,
            buffers: (0..partitions).map(|_| Vec::new()).collect(),
            scratch: Vec::new(),
            spill_threshold,
            full: Vec::new(),
        }
    }

    pub fn emit(&mut self, key: K, value: V) {
        let p = if self.buffers.len() == 1 {
            0
        } else {
            self.scratch.clear();
            key.encode(&mut self.scratch);
            (stable_hash(&self.scratch, self.seed) % self.buffers.len() as u64) as usize
        };
        self.buffers[p].push((key, value));
        if self.buffers[p].len() == self.spill_threshold {
            self.full.push(p);
        }
    }
}

type Mapper<'a, I, K, V> = Box<dyn Fn(usize, &I, &mut Emitter<K, V>) -> Result<(), TaskError> + Send + Sync + 'a>;
type Reducer<'a, K, V, O> = Box<dyn Fn(&K, Vec<V>, &mut Vec<O>) -> Result<(), TaskError> + Send + Sync + 'a>;
type Combiner<'a, K, V> = Box<dyn Fn(&K, Vec<V>) -> Vec<V> + Send + Sync + 'a>;

/// A map/shuffle/reduce job over tagged inputs.
///
/// The mapper receives the tag of the input a record came from, which plays
/// the role of the predicate name checked by relational map functions.
pub struct JobSpec<'a, I, K, V, O> {
    name: String,
    inputs: Vec<(usize, &'a dyn Source<I>)>,
    mapper: Mapper<'a, I, K, V>,
    reducer: Reducer<'a, K, V, O>,
    combiner: Option<Combiner<'a, K, V>>,
    partitions: Option<usize>,
}

impl<'a, I, K, V, O> JobSpec<'a, I, K, V, O> {
    pub fn new(
        name: impl Into<String>,
        mapper: impl Fn(usize, &I, &mut Emitter<K, V>) -> Result<(), TaskError> + Send + Sync + 'a,
        reducer: impl Fn(&K, Vec<V>, &mut Vec<O>) -> Result<(), TaskError> + Send + Sync + 'a,
    ) -> Self {
        JobSpec {
            name: name.into(),
            inputs: Vec::new(),
            mapper: Box::new(mapper),
            reducer: Box::new(reducer),
            combiner: None,
            partitions: None,
        }
    }

    pub fn input(mut self, tag: usize, source: &'a dyn Source<I>) -> Self {
        self.inputs.push((tag, source));
        self
    }

    /// Map-side pre-aggregation, applied per map task to every key group.
    pub fn combiner(mut self, f: impl Fn(&K, Vec<V>) -> Vec<V> + Send + Sync + 'a) -> Self {
        self.combiner = Some(Box::new(f));
        self
    }

    /// Overrides the engine's partition count for this job.
    pub fn partitions(mut self, n: usize) -> Self {
        self.partitions = Some(n.max(1));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Clone, Copy)]
struct Split {
    input: usize,
    start: usize,
    end: usize,
}

struct MapOutput<K, V> {
    buffers: Vec<Vec<(K, V)>>,
    runs: Vec<Vec<Run>>,
    records_in: usize,
    records_out: usize,
}

struct ReduceOutput<O> {
    out: Vec<O>,
    groups: usize,
    max_group: usize,
    skewed: usize,
}

/// A pipeline stage: consumes the previous stage's output, runs one job.
pub type Stage<'a, T> = Box<dyn FnOnce(&Engine, Vec<T>) -> Result<(Vec<T>, JobStats), MrError> + 'a>;

pub struct Engine {
    config: EngineConfig,
    workers: usize,
    partitions: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    jobs: AtomicUsize,
    log: Mutex<Vec<JobStats>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("workers", &self.workers)
            .field("partitions", &self.partitions)
            .field("jobs", &self.jobs_run())
            .finish()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Engine, MrError> {
        let available = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut workers = if config.workers == 0 { available } else { config.workers };
        if !cfg!(feature = "parallel") && workers > 1 {
            log::debug!("built without the `parallel` feature; running {workers} workers sequentially");
            workers = 1;
        }
        let partitions = if config.partitions == 0 {
            workers
        } else {
            config.partitions
        };
        #[cfg(feature = "parallel")]
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("wfsmr-worker-{i}"))
                    .build()
                    .map_err(|e| MrError::Pool(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Engine {
            config,
            workers,
            partitions,
            #[cfg(feature = "parallel")]
            pool,
            jobs: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Single worker, single partition.
    pub fn sequential() -> Engine {
        Engine::new(EngineConfig::with_workers(1, 1)).expect("sequential engine")
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    /// Jobs run so far by this engine.
    pub fn jobs_run(&self) -> usize {
        self.jobs.load(Ordering::Relaxed)
    }

    pub fn job_log(&self) -> Vec<JobStats> {
        self.log.lock().unwrap().clone()
    }

    pub fn take_job_log(&self) -> Vec<JobStats> {
        std::mem::take(&mut *self.log.lock().unwrap())
    }

    fn execute<T: Send, R: Send>(&self, items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().map(&f).collect());
        }
        items.into_iter().map(f).collect()
    }

    pub fn run_job<I, K, V, O>(&self, spec: JobSpec<'_, I, K, V, O>) -> Result<(Vec<O>, JobStats), MrError>
    where
        I: fmt::Debug,
        K: Datum + Ord + Clone + fmt::Debug + Sync,
        V: Datum + Sync,
        O: Send,
    {
        let started = Instant::now();
        let partitions = spec.partitions.unwrap_or(self.partitions).max(1);
        let split_size = self.config.split_size.max(1);
        let splits: Vec<Split> = spec
            .inputs
            .iter()
            .enumerate()
            .flat_map(|(input, (_, src))| {
                let len = src.len();
                (0..len).step_by(split_size).map(move |start| Split {
                    input,
                    start,
                    end: (start + split_size).min(len),
                })
            })
            .collect();
        let n_splits = splits.len();

        let mapped = self.execute(splits, |split| self.map_task(&spec, partitions, split));
        let mut stats = JobStats {
            name: spec.name.clone(),
            splits: n_splits,
            partitions,
            ..Default::default()
        };
        #[allow(clippy::type_complexity)]
        let mut per_partition: Vec<(Vec<Vec<(K, V)>>, Vec<Run>)> =
            (0..partitions).map(|_| (Vec::new(), Vec::new())).collect();
        for out in mapped {
            let out = out?;
            stats.map_records_in += out.records_in;
            stats.map_records_out += out.records_out;
            for (p, (buf, runs)) in out.buffers.into_iter().zip(out.runs).enumerate() {
                stats.spilled_runs += runs.len();
                if !buf.is_empty() {
                    per_partition[p].0.push(buf);
                }
                per_partition[p].1.extend(runs);
            }
        }

        // barrier: every map task has finished before any reduce starts
        let reduced = self.execute(per_partition, |(bufs, runs)| self.reduce_task(&spec, bufs, runs));
        let mut output = Vec::new();
        for r in reduced {
            let r = r?;
            stats.reduce_groups += r.groups;
            stats.max_group = stats.max_group.max(r.max_group);
            stats.skewed_groups += r.skewed;
            stats.reduce_records_out += r.out.len();
            output.extend(r.out);
        }
        stats.wall = started.elapsed();
        if stats.skewed_groups > 0 {
            log::warn!(
                "job `{}`: {} key group(s) exceed {} values (largest {})",
                stats.name,
                stats.skewed_groups,
                self.config.group_limit,
                stats.max_group
            );
        }
        self.jobs.fetch_add(1, Ordering::Relaxed);
        if self.config.keep_log {
            self.log.lock().unwrap().push(stats.clone());
        }
        log::trace!("{stats}");
        Ok((output, stats))
    }

    fn map_task<I, K, V, O>(
        &self,
        spec: &JobSpec<'_, I, K, V, O>,
        partitions: usize,
        split: Split,
    ) -> Result<MapOutput<K, V>, MrError>
    where
        I: fmt::Debug,
        K: Datum + Ord + Clone,
        V: Datum,
    {
        let spill_threshold = match self.config.spill_dir {
            Some(_) => self.config.spill_threshold.max(1),
            None => usize::MAX,
        };
        let mut emitter = Emitter::new(partitions, self.config.hash_seed, spill_threshold);
        let mut runs: Vec<Vec<Run>> = (0..partitions).map(|_| Vec::new()).collect();
        let mut records_out = 0;
        let (tag, source) = spec.inputs[split.input];
        for index in split.start..split.end {
            let record = source.get(index);
            (spec.mapper)(tag, record, &mut emitter).map_err(|e| MrError::Map {
                job: spec.name.clone(),
                input: tag,
                index,
                record: format!("{record:?}"),
                message: e.0,
            })?;
            for p in std::mem::take(&mut emitter.full) {
                let buf = std::mem::take(&mut emitter.buffers[p]);
                let buf = sort_and_combine(buf, spec.combiner.as_deref());
                records_out += buf.len();
                let dir = self.config.spill_dir.as_deref().expect("spill enabled");
                let run = Run::write(dir, &buf).map_err(|source| MrError::Spill {
                    job: spec.name.clone(),
                    source,
                })?;
                runs[p].push(run);
            }
        }
        let buffers: Vec<Vec<(K, V)>> = emitter
            .buffers
            .into_iter()
            .map(|b| match &spec.combiner {
                Some(c) => sort_and_combine(b, Some(c.as_ref())),
                None => b,
            })
            .collect();
        records_out += buffers.iter().map(Vec::len).sum::<usize>();
        Ok(MapOutput {
            buffers,
            runs,
            records_in: split.end - split.start,
            records_out,
        })
    }

    fn reduce_task<I, K, V, O>(
        &self,
        spec: &JobSpec<'_, I, K, V, O>,
        bufs: Vec<Vec<(K, V)>>,
        runs: Vec<Run>,
    ) -> Result<ReduceOutput<O>, MrError>
    where
        K: Datum + Ord + fmt::Debug,
        V: Datum,
    {
        let mut records: Vec<(K, V)> = if bufs.len() == 1 {
            bufs.into_iter().next().unwrap()
        } else {
            bufs.into_iter().flatten().collect()
        };
        records.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut acc = ReduceOutput {
            out: Vec::new(),
            groups: 0,
            max_group: 0,
            skewed: 0,
        };
        let limit = self.config.group_limit;
        let reduce = |key: K, values: Vec<V>, acc: &mut ReduceOutput<O>| {
            acc.groups += 1;
            acc.max_group = acc.max_group.max(values.len());
            if values.len() > limit {
                acc.skewed += 1;
            }
            (spec.reducer)(&key, values, &mut acc.out).map_err(|e| MrError::Reduce {
                job: spec.name.clone(),
                key: format!("{key:?}"),
                message: e.0,
            })
        };
        if runs.is_empty() {
            let mut it = records.into_iter().peekable();
            while let Some((key, v)) = it.next() {
                let mut values = vec![v];
                while let Some((k, _)) = it.peek() {
                    if *k != key {
                        break;
                    }
                    values.push(it.next().unwrap().1);
                }
                reduce(key, values, &mut acc)?;
            }
        } else {
            let spill_err = |source| MrError::Spill {
                job: spec.name.clone(),
                source,
            };
            #[allow(clippy::type_complexity)]
            let mut sources: Vec<Box<dyn Iterator<Item = io::Result<(K, V)>>>> =
                vec![Box::new(records.into_iter().map(Ok))];
            sources.extend(
                runs.into_iter()
                    .map(|r| Box::new(r.into_reader::<K, V>()) as Box<dyn Iterator<Item = _>>),
            );
            let mut merge = GroupedMerge::new(sources).map_err(spill_err)?;
            while let Some((key, values)) = merge.next_group().map_err(spill_err)? {
                reduce(key, values, &mut acc)?;
            }
        }
        Ok(acc)
    }

    /// Runs `stages` left to right, feeding each stage the previous output.
    pub fn run_pipeline<T>(
        &self,
        input: Vec<T>,
        stages: Vec<Stage<'_, T>>,
    ) -> Result<(Vec<T>, Vec<JobStats>), MrError> {
        let mut data = input;
        let mut stats = Vec::with_capacity(stages.len());
        for (index, stage) in stages.into_iter().enumerate() {
            let (out, s) = stage(self, data).map_err(|e| MrError::Stage {
                index,
                source: Box::new(e),
            })?;
            data = out;
            stats.push(s);
        }
        Ok((data, stats))
    }
}

#[allow(clippy::type_complexity)]
fn sort_and_combine<K: Ord + Clone, V>(
    mut buf: Vec<(K, V)>,
    combiner: Option<&(dyn Fn(&K, Vec<V>) -> Vec<V> + Send + Sync + '_)>,
) -> Vec<(K, V)> {
    buf.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let Some(combine) = combiner else {
        return buf;
    };
    let mut out = Vec::with_capacity(buf.len());
    let mut it = buf.into_iter().peekable();
    while let Some((key, v)) = it.next() {
        let mut values = vec![v];
        while let Some((k, _)) = it.peek() {
            if *k != key {
                break;
            }
            values.push(it.next().unwrap().1);
        }
        let combined = combine(&key, values);
        let mut combined = combined.into_iter();
        if let Some(last) = combined.next_back() {
            for v in combined {
                out.push((key.clone(), v));
            }
            out.push((key, last));
        }
    }
    out
}
