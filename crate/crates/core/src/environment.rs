//! A synthetic learning environment of translationally invariant Boolean
//! functions over a one-dimensional retina.
//!
//! Valid inputs are binary vectors whose active pixels form a single
//! cyclic run (wrapping at the edge is allowed) of bounded length. A task
//! labels an input purely by its run length, so every task is invariant
//! under cyclic shifts. With retina size 10 and maximum run 4 this gives
//! the 40 admissible inputs and the 14 nontrivial tasks used throughout
//! the experiment suite — small enough that true error is computed by
//! exhaustive enumeration rather than sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::composite::{Example, SampleMatrix};
use crate::{Error, Result};

/// One admissible retina pattern: a single cyclic run of 1s.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RetinaInput {
    bits: Vec<u8>,
}

impl RetinaInput {
    /// Validates that `bits` holds exactly one cyclic run of 1s.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() < 2 {
            return Err(Error::InvalidInput("retina needs at least two pixels".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("pixels must be 0 or 1".into()));
        }
        let r = bits.len();
        let falling: usize = (0..r).filter(|&i| bits[i] == 1 && bits[(i + 1) % r] == 0).count();
        if falling != 1 {
            return Err(Error::InvalidInput(format!(
                "expected exactly one cyclic run of 1s, found {falling} run boundaries in {}",
                bits.iter().map(|b| b.to_string()).collect::<String>()
            )));
        }
        Ok(RetinaInput { bits })
    }

    /// Builds the run of `len` ones starting at `start`, wrapping cyclically.
    pub fn from_run(retina_size: usize, start: usize, len: usize) -> Result<Self> {
        if len == 0 || len >= retina_size {
            return Err(Error::InvalidInput(format!(
                "run length {len} not in [1, {})",
                retina_size
            )));
        }
        let mut bits = vec![0u8; retina_size];
        for k in 0..len {
            bits[(start + k) % retina_size] = 1;
        }
        Ok(RetinaInput { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Length of the single cyclic run; with the construction invariant
    /// this is just the number of active pixels.
    pub fn run_length(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Rotates the pattern `shift` pixels to the right.
    pub fn cyclic_shift(&self, shift: usize) -> RetinaInput {
        let r = self.bits.len();
        let mut bits = vec![0u8; r];
        for i in 0..r {
            bits[(i + shift) % r] = self.bits[i];
        }
        RetinaInput { bits }
    }

    /// Encodes the pixels as 0.0/1.0 network inputs.
    pub fn to_input_vec(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }

    pub fn bitstring(&self) -> String {
        self.bits.iter().map(|b| char::from(b'0' + b)).collect()
    }

    pub fn parse_bitstring(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(Error::InvalidInput(format!("bad bitstring character {c:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        RetinaInput::new(bits)
    }
}

/// A translationally invariant Boolean task: one label per object class
/// (run length), excluding the two constant functions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanTaskTable {
    labels: Vec<u8>,
}

impl BooleanTaskTable {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("task table needs at least one class".into()));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("task labels must be 0 or 1".into()));
        }
        if labels.iter().all(|&b| b == 0) || labels.iter().all(|&b| b == 1) {
            return Err(Error::InvalidParameter("constant task tables are excluded".into()));
        }
        Ok(BooleanTaskTable { labels })
    }

    /// Label for object class `class` (1-based).
    pub fn label_for_class(&self, class: usize) -> Result<u8> {
        if class == 0 || class > self.labels.len() {
            return Err(Error::InvalidParameter(format!(
                "object class {class} outside [1, {}]",
                self.labels.len()
            )));
        }
        Ok(self.labels[class - 1])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Number of classes labeled 1.
    pub fn positive_classes(&self) -> usize {
        self.labels.iter().map(|&b| b as usize).sum()
    }
}

/// All valid inputs with a single cyclic run of length 1..=`max_run`,
/// ordered by run length and then start position.
pub fn enumerate_inputs(retina_size: usize, max_run: usize) -> Result<Vec<RetinaInput>> {
    if retina_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "retina size must be at least 2, got {retina_size}"
        )));
    }
    if max_run == 0 || max_run >= retina_size {
        return Err(Error::InvalidParameter(format!(
            "max run {max_run} must satisfy 1 <= max_run < retina size {retina_size}"
        )));
    }
    let mut inputs = Vec::with_capacity(retina_size * max_run);
    for len in 1..=max_run {
        for start in 0..retina_size {
            inputs.push(RetinaInput::from_run(retina_size, start, len)?);
        }
    }
    Ok(inputs)
}

/// All `2^max_run - 2` nonconstant task tables, ordered by the table read
/// as a binary number (class 1 is the least significant bit).
pub fn enumerate_tasks(max_run: usize) -> Result<Vec<BooleanTaskTable>> {
    if max_run == 0 {
        return Err(Error::InvalidParameter("max run must be at least 1".into()));
    }
    if max_run >= usize::BITS as usize {
        return Err(Error::InvalidParameter(format!("max run {max_run} too large")));
    }
    let full = 1usize << max_run;
    let mut tasks = Vec::with_capacity(full.saturating_sub(2));
    for code in 1..full.saturating_sub(1) {
        let labels = (0..max_run).map(|k| ((code >> k) & 1) as u8).collect();
        tasks.push(BooleanTaskTable { labels });
    }
    Ok(tasks)
}

/// The task distribution and input distribution: uniform over all
/// nonconstant translation-invariant tasks and all valid inputs.
#[derive(Clone, Debug)]
pub struct Environment {
    retina_size: usize,
    max_run: usize,
    tasks: Vec<BooleanTaskTable>,
    inputs: Vec<RetinaInput>,
}

impl Environment {
    pub fn new(retina_size: usize, max_run: usize) -> Result<Self> {
        let inputs = enumerate_inputs(retina_size, max_run)?;
        let tasks = enumerate_tasks(max_run)?;
        Ok(Environment { retina_size, max_run, tasks, inputs })
    }

    /// The 10-pixel retina with runs up to length 4: 40 inputs, 14 tasks.
    pub fn paper_default() -> Environment {
        Environment::new(10, 4).expect("default environment parameters are valid")
    }

    pub fn retina_size(&self) -> usize {
        self.retina_size
    }

    pub fn max_run(&self) -> usize {
        self.max_run
    }

    pub fn inputs(&self) -> &[RetinaInput] {
        &self.inputs
    }

    pub fn tasks(&self) -> &[BooleanTaskTable] {
        &self.tasks
    }

    pub fn task(&self, index: usize) -> Result<&BooleanTaskTable> {
        self.tasks.get(index).ok_or(Error::TaskIndex { index, len: self.tasks.len() })
    }

    /// The object class of an input: its cyclic run length, checked
    /// against this environment's bounds.
    pub fn object_class(&self, x: &RetinaInput) -> Result<usize> {
        if x.len() != self.retina_size {
            return Err(Error::InvalidInput(format!(
                "input has {} pixels, environment expects {}",
                x.len(),
                self.retina_size
            )));
        }
        let class = x.run_length();
        if class == 0 || class > self.max_run {
            return Err(Error::InvalidInput(format!(
                "run length {class} outside [1, {}]",
                self.max_run
            )));
        }
        Ok(class)
    }

    /// Labels an input under a task: the table entry of its object class.
    pub fn label(&self, task: &BooleanTaskTable, x: &RetinaInput) -> Result<u8> {
        task.label_for_class(self.object_class(x)?)
    }

    pub fn label_by_index(&self, task_index: usize, x: &RetinaInput) -> Result<u8> {
        self.label(self.task(task_index)?, x)
    }

    /// The full truth table of one task: every valid input with its label.
    pub fn truth_table_row(&self, task_index: usize) -> Result<Vec<(RetinaInput, u8)>> {
        let task = self.task(task_index)?;
        self.inputs
            .iter()
            .map(|x| Ok((x.clone(), self.label(task, x)?)))
            .collect()
    }

    /// Draws an (n,m)-sample: n tasks i.i.d. uniform (with replacement),
    /// then m inputs i.i.d. uniform per task, labeled by that task.
    pub fn sample_nm(&self, n: usize, m: usize, seed: u64) -> Result<NMSample> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!("need n >= 1 and m >= 1, got ({n},{m})")));
        }
        if self.tasks.is_empty() {
            return Err(Error::InvalidParameter("environment has no tasks to sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task_ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.tasks.len())).collect();
        let mut rows = Vec::with_capacity(n);
        for &tid in &task_ids {
            let mut row = Vec::with_capacity(m);
            for _ in 0..m {
                let x = self.inputs[rng.random_range(0..self.inputs.len())].clone();
                let y = self.label_by_index(tid, &x)?;
                row.push((x, y));
            }
            rows.push(row);
        }
        Ok(NMSample { task_ids, rows, seed })
    }
}

/// An (n,m)-sample: n task draws and one row of m labeled inputs each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NMSample {
    task_ids: Vec<usize>,
    rows: Vec<Vec<(RetinaInput, u8)>>,
    seed: u64,
}

impl NMSample {
    /// Assembles a sample from explicit rows (used for full truth tables
    /// and tests); rows must be non-empty and of equal length.
    pub fn from_rows(task_ids: Vec<usize>, rows: Vec<Vec<(RetinaInput, u8)>>, seed: u64) -> Result<Self> {
        if task_ids.is_empty() || task_ids.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} task ids for {} rows",
                task_ids.len(),
                rows.len()
            )));
        }
        let m = rows[0].len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("rows must be non-empty and of equal length".into()));
        }
        Ok(NMSample { task_ids, rows, seed })
    }

    pub fn n(&self) -> usize {
        self.task_ids.len()
    }

    pub fn m(&self) -> usize {
        self.rows[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn task_ids(&self) -> &[usize] {
        &self.task_ids
    }

    pub fn rows(&self) -> &[Vec<(RetinaInput, u8)>] {
        &self.rows
    }

    /// Converts to the numeric matrix the composite losses consume.
    pub fn to_matrix(&self) -> SampleMatrix {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(x, y)| Example::new(x.to_input_vec(), f64::from(*y)))
                    .collect()
            })
            .collect();
        SampleMatrix::new(rows).expect("validated at construction")
    }

    /// Line-oriented text form: header `n m seed`, then one
    /// `task_index bitstring label` line per example, row-major.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {} {}\n", self.n(), self.m(), self.seed));
        for (row, &tid) in self.rows.iter().zip(self.task_ids.iter()) {
            for (x, y) in row {
                out.push_str(&format!("{} {} {}\n", tid, x.bitstring(), y));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(Error::Parse { line: 1, message: "empty sample document".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: 1, message: "header must be `n m seed`".into() });
        }
        let parse_int = |s: &str, line: usize| -> Result<u64> {
            s.parse::<u64>().map_err(|e| Error::Parse { line, message: format!("bad integer {s:?}: {e}") })
        };
        let n = parse_int(fields[0], 1)? as usize;
        let m = parse_int(fields[1], 1)? as usize;
        let seed = parse_int(fields[2], 1)?;
        if n == 0 || m == 0 {
            return Err(Error::Parse { line: 1, message: format!("invalid sample shape {n}x{m}") });
        }
        let mut task_ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(m);
            let mut row_tid = None;
            for j in 0..m {
                let lineno = 2 + i * m + j;
                let (_, line) = lines.next().ok_or(Error::Parse {
                    line: lineno,
                    message: format!("expected {} example lines, document truncated", n * m),
                })?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "expected `task_index bitstring label`".into(),
                    });
                }
                let tid = parse_int(parts[0], lineno)? as usize;
                match row_tid {
                    None => row_tid = Some(tid),
                    Some(t) if t != tid => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("task index changed from {t} to {tid} within a row"),
                        })
                    }
                    _ => {}
                }
                let x = RetinaInput::parse_bitstring(parts[1])
                    .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
                let y = parse_int(parts[2], lineno)?;
                if y > 1 {
                    return Err(Error::Parse { line: lineno, message: format!("label {y} not in {{0,1}}") });
                }
                row.push((x, y as u8));
            }
            task_ids.push(row_tid.expect("m >= 1"));
            rows.push(row);
        }
        Ok(NMSample { task_ids, rows, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_environment_has_40_inputs_and_14_tasks() {
        let env = Environment::paper_default();
        assert_eq!(env.inputs().len(), 40);
        assert_eq!(env.tasks().len(), 14);
        assert_eq!(enumerate_inputs(10, 1).unwrap().len(), 10);
        assert_eq!(enumerate_tasks(1).unwrap().len(), 0);
        assert_eq!(enumerate_tasks(2).unwrap().len(), 2);
    }

    #[test]
    fn enumerated_inputs_match_exhaustive_bitmask_scan() {
        // Oracle: scan all 2^5 vectors for a single cyclic run of length <= 2.
        let singles: Vec<Vec<u8>> = (0u32..32)
            .map(|mask| (0..5).map(|i| ((mask >> i) & 1) as u8).collect::<Vec<u8>>())
            .filter(|bits| {
                let ones: usize = bits.iter().map(|&b| b as usize).sum();
                if ones == 0 || ones > 2 {
                    return false;
                }
                let falling = (0..5)
                    .filter(|&i| bits[i] == 1 && bits[(i + 1) % 5] == 0)
                    .count();
                falling == 1
            })
            .collect();
        let enumerated = enumerate_inputs(5, 2).unwrap();
        assert_eq!(enumerated.len(), 10);
        assert_eq!(enumerated.len(), singles.len());
        for x in &enumerated {
            assert!(singles.contains(&x.bits().to_vec()));
        }
        // Deterministic order: run length then start position.
        assert_eq!(enumerated[0].bitstring(), "10000");
        assert_eq!(enumerated[5].bitstring(), "11000");
        assert!(enumerate_inputs(5, 5).is_err());
    }

    #[test]
    fn object_class_counts_cyclic_runs() {
        let env = Environment::paper_default();
        let x = RetinaInput::parse_bitstring("1110000000").unwrap();
        assert_eq!(env.object_class(&x).unwrap(), 3);
        let wrap = RetinaInput::parse_bitstring("1000000001").unwrap();
        assert_eq!(env.object_class(&wrap).unwrap(), 2);
        // Oracle: direct maximal-run counter over all 40 inputs.
        for x in env.inputs() {
            let bits = x.bits();
            let r = bits.len();
            let mut best = 0usize;
            for start in 0..r {
                if bits[start] == 1 && bits[(start + r - 1) % r] == 0 {
                    let mut len = 0;
                    while bits[(start + len) % r] == 1 {
                        len += 1;
                    }
                    best = best.max(len);
                }
            }
            assert_eq!(env.object_class(x).unwrap(), best);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(RetinaInput::parse_bitstring("0000000000").is_err());
        assert!(RetinaInput::parse_bitstring("1010000000").is_err());
        assert!(RetinaInput::parse_bitstring("1111111111").is_err());
        let env = Environment::paper_default();
        // Structurally valid but too long for max_run = 4.
        let long = RetinaInput::parse_bitstring("1111100000").unwrap();
        assert!(env.object_class(&long).is_err());
    }

    #[test]
    fn labels_follow_the_table_and_are_shift_invariant() {
        let env = Environment::paper_default();
        let task = BooleanTaskTable::new(vec![0, 0, 1, 0]).unwrap();
        for start in 0..10 {
            let x = RetinaInput::from_run(10, start, 3).unwrap();
            assert_eq!(env.label(&task, &x).unwrap(), 1);
        }
        for task in env.tasks() {
            for x in env.inputs() {
                let base = env.label(task, x).unwrap();
                for s in 0..10 {
                    assert_eq!(env.label(task, &x.cyclic_shift(s)).unwrap(), base);
                }
            }
        }
    }

    #[test]
    fn positive_count_is_ten_per_positive_class() {
        let env = Environment::paper_default();
        for task in env.tasks() {
            let positives = env
                .inputs()
                .iter()
                .filter(|x| env.label(task, x).unwrap() == 1)
                .count();
            assert_eq!(positives, 10 * task.positive_classes());
        }
    }

    #[test]
    fn sample_nm_is_consistent_and_deterministic() {
        let env = Environment::paper_default();
        let s = env.sample_nm(3, 5, 99).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.m(), 5);
        for (row, &tid) in s.rows().iter().zip(s.task_ids()) {
            for (x, y) in row {
                assert_eq!(*y, env.label_by_index(tid, x).unwrap());
            }
        }
        assert_eq!(s, env.sample_nm(3, 5, 99).unwrap());
        assert_ne!(s, env.sample_nm(3, 5, 100).unwrap());
        assert!(env.sample_nm(0, 5, 1).is_err());
    }

    #[test]
    fn balanced_task_yields_half_positive_labels() {
        let env = Environment::paper_default();
        // Find a task with exactly two positive classes: p = 0.5.
        let tid = env
            .tasks()
            .iter()
            .position(|t| t.positive_classes() == 2)
            .unwrap();
        let mut positives = 0usize;
        let total = 10_000usize;
        // One task row of m = total examples.
        let mut env_task_sample = None;
        for seed in 0..50 {
            let s = env.sample_nm(1, total, seed).unwrap();
            if s.task_ids()[0] == tid {
                env_task_sample = Some(s);
                break;
            }
        }
        let s = env_task_sample.expect("a seed hitting the balanced task");
        for (_, y) in &s.rows()[0] {
            positives += *y as usize;
        }
        let frac = positives as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02, "positive fraction {frac}");
    }

    #[test]
    fn task_frequencies_pass_chi_squared_uniformity() {
        let env = Environment::paper_default();
        let n = 10_000usize;
        let s = env.sample_nm(n, 1, 4242).unwrap();
        let mut counts = vec![0usize; env.tasks().len()];
        for &tid in s.task_ids() {
            counts[tid] += 1;
        }
        let expected = n as f64 / env.tasks().len() as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // Critical value of chi-squared with 13 degrees of freedom at
        // significance 0.001.
        assert!(chi2 < 34.528, "chi2 = {chi2}");
    }

    #[test]
    fn sample_text_roundtrip_and_parse_errors() {
        let env = Environment::paper_default();
        let s = env.sample_nm(2, 3, 7).unwrap();
        let text = s.serialize();
        let back = NMSample::parse(&text).unwrap();
        assert_eq!(s, back);

        let mut truncated: Vec<&str> = text.lines().collect();
        truncated.pop();
        let truncated = truncated.join("\n");
        match NMSample::parse(&truncated) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(NMSample::parse("not a header").is_err());
    }
}
