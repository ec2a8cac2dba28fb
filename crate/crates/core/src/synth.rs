//! Synthetic corpus generation from a Markov chain over event symbols.
//!
//! A [`MarkovSpec`] describes a first- or second-order chain whose states are
//! IDE event symbols. [`generate`] samples whole sessions from the chain and
//! then injects the two artifacts the cleansing stages exist to remove —
//! exact duplicates (same timestamp and type) and rapid repeats (same symbol
//! at +1ms offsets) — recording how many of each were injected so a pipeline
//! run can be checked against ground truth. [`bayes_optimal_accuracy`] scores
//! the chain itself: no predictor that observes the full context can beat it,
//! so it upper-bounds what any model trained on the corpus may achieve.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventType, RawEvent};

/// Milliseconds between consecutive drawn events within a session. Injected
/// repeats sit at +1..+3ms, so distinct draws can never collide with them.
const STEP_MS: i64 = 1_000;

/// Milliseconds between session start times (one day).
const SESSION_STRIDE_MS: i64 = 86_400_000;

/// Epoch of the first session, 2017-03-01T00:00:00Z.
const CORPUS_EPOCH_MS: i64 = 1_488_326_400_000;

/// Tolerance for probability vectors summing to one.
const SUM_TOL: f64 = 1e-9;

/// Convergence threshold for the stationary-distribution power iteration.
const STATIONARY_TOL: f64 = 1e-14;

/// Iteration cap for the power iteration; small chains converge in hundreds.
const STATIONARY_MAX_ITERS: usize = 200_000;

/// One state of the chain: an event type plus an optional descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
}

impl SymbolSpec {
    /// The token base this symbol flattens to: the type name, or
    /// `"<type>-<descriptor>"` when a descriptor is present.
    pub fn token_base(&self) -> String {
        match &self.descriptor {
            Some(d) => format!("{}-{}", self.event_type, d),
            None => self.event_type.clone(),
        }
    }
}

/// A seeded Markov chain over event symbols, plus corpus-shape parameters.
///
/// `order` is 1 or 2. With `A = symbols.len()`, `initial` has `A^order`
/// entries (order 2 draws the first *pair*, indexed `first * A + second`) and
/// `transition` has `A^order` rows of `A` columns; row `k` gives the
/// distribution of the next symbol given context `k`. Context indices for
/// order 2 follow the same `first * A + second` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub order: usize,
    pub symbols: Vec<SymbolSpec>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub session_count: usize,
    /// Inclusive bounds on drawn session length, in events.
    pub session_length: (usize, usize),
    /// Per-step probability of appending one exact duplicate of the event.
    #[serde(default)]
    pub duplicate_rate: f64,
    /// Per-step probability of appending 1–3 copies at +1ms offsets.
    #[serde(default)]
    pub repeat_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MarkovSpec {
    /// Number of context states: `A` for order 1, `A^2` for order 2.
    pub fn context_count(&self) -> usize {
        self.symbols.len().pow(self.order as u32)
    }

    /// Checks every structural invariant; all other entry points call this.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.order, 1 | 2) {
            return Err(Error::config(format!(
                "chain order must be 1 or 2, got {}",
                self.order
            )));
        }
        if self.symbols.is_empty() {
            return Err(Error::empty("the chain needs at least one symbol"));
        }
        let mut seen = std::collections::HashSet::new();
        for symbol in &self.symbols {
            if !seen.insert(symbol.token_base()) {
                return Err(Error::config(format!(
                    "duplicate symbol {:?}",
                    symbol.token_base()
                )));
            }
        }
        let contexts = self.context_count();
        if self.initial.len() != contexts {
            return Err(Error::config(format!(
                "initial distribution has {} entries, expected {} (one per order-{} context)",
                self.initial.len(),
                contexts,
                self.order
            )));
        }
        check_distribution(&self.initial, "initial")?;
        if self.transition.len() != contexts {
            return Err(Error::config(format!(
                "transition table has {} rows, expected {}",
                self.transition.len(),
                contexts
            )));
        }
        for (k, row) in self.transition.iter().enumerate() {
            if row.len() != self.symbols.len() {
                return Err(Error::config(format!(
                    "transition row {} has {} entries, expected {}",
                    k,
                    row.len(),
                    self.symbols.len()
                )));
            }
            check_distribution(row, &format!("transition row {k}"))?;
        }
        if self.session_count == 0 {
            return Err(Error::config("session_count must be at least 1"));
        }
        let (lo, hi) = self.session_length;
        if lo < self.order {
            return Err(Error::config(format!(
                "minimum session length {} cannot seat an order-{} context",
                lo, self.order
            )));
        }
        if lo > hi {
            return Err(Error::config(format!(
                "session_length bounds are inverted: {lo} > {hi}"
            )));
        }
        for (rate, name) in [
            (self.duplicate_rate, "duplicate_rate"),
            (self.repeat_rate, "repeat_rate"),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(format!(
                    "{name} must lie in [0, 1), got {rate}"
                )));
            }
        }
        Ok(())
    }

    /// Context index after observing symbol `c` in context `k`.
    fn next_context(&self, k: usize, c: usize) -> usize {
        match self.order {
            1 => c,
            _ => (k % self.symbols.len()) * self.symbols.len() + c,
        }
    }
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::config(format!(
                "{what} contains an invalid probability {p}"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::config(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// What the generator actually injected, for checking a cleansing run.
///
/// A corpus built from a spec with distinct adjacent draws (zero transition
/// diagonal for order 1) and only developer-induced event types cleanses to
/// exactly `base_events` tokens minus compressed runs: dedup removes
/// `injected_duplicates` and run compression removes `injected_repeat_events`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTruth {
    pub sessions: u64,
    /// Events drawn from the chain, before any injection.
    pub base_events: u64,
    /// Exact copies added at an existing timestamp.
    pub injected_duplicates: u64,
    /// Extra copies added at +1..+3ms offsets, counted per copy.
    pub injected_repeat_events: u64,
}

/// Samples a corpus from the chain and injects duplicates and repeats.
///
/// Events are returned in generation order: sessions consecutively, each
/// session's draws at 1s intervals with any injected copies immediately
/// after their source event. The same spec always yields the same corpus.
pub fn generate(spec: &MarkovSpec) -> Result<(Vec<RawEvent>, GenerationTruth)> {
    spec.validate()?;
    let a = spec.symbols.len();
    let initial = weighted(&spec.initial, "initial")?;
    let rows = spec
        .transition
        .iter()
        .enumerate()
        .map(|(k, row)| weighted(row, &format!("transition row {k}")))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();
    let mut truth = GenerationTruth {
        sessions: spec.session_count as u64,
        ..GenerationTruth::default()
    };
    let (lo, hi) = spec.session_length;

    for s in 0..spec.session_count {
        let session_id = format!("s{s:06}");
        let start = CORPUS_EPOCH_MS + s as i64 * SESSION_STRIDE_MS;
        let length = rng.gen_range(lo..=hi);

        let mut sequence = Vec::with_capacity(length);
        match spec.order {
            1 => {
                sequence.push(initial.sample(&mut rng));
                while sequence.len() < length {
                    let context = *sequence.last().unwrap();
                    sequence.push(rows[context].sample(&mut rng));
                }
            }
            _ => {
                let pair = initial.sample(&mut rng);
                sequence.push(pair / a);
                sequence.push(pair % a);
                while sequence.len() < length {
                    let context = sequence[sequence.len() - 2] * a + sequence[sequence.len() - 1];
                    sequence.push(rows[context].sample(&mut rng));
                }
            }
        }

        for (t, &sym) in sequence.iter().enumerate() {
            let symbol = &spec.symbols[sym];
            let base_ts = start + t as i64 * STEP_MS;
            let emit = |ts: i64| RawEvent {
                session_id: session_id.clone(),
                triggered_at: ts,
                event_type: EventType::from_name(&symbol.event_type),
                descriptor: symbol.descriptor.clone(),
            };
            events.push(emit(base_ts));
            truth.base_events += 1;
            if spec.repeat_rate > 0.0 && rng.gen::<f64>() < spec.repeat_rate {
                let copies = rng.gen_range(1..=3);
                for offset in 1..=copies {
                    events.push(emit(base_ts + offset));
                }
                truth.injected_repeat_events += copies as u64;
            }
            if spec.duplicate_rate > 0.0 && rng.gen::<f64>() < spec.duplicate_rate {
                events.push(emit(base_ts));
                truth.injected_duplicates += 1;
            }
        }
    }
    Ok((events, truth))
}

fn weighted(probs: &[f64], what: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::config(format!("{what} is not samplable: {e}")))
}

/// Stationary distribution over the chain's contexts, one entry per context.
///
/// Contexts unreachable from the initial distribution's support get
/// probability zero. The reachable set must be a single strongly connected
/// class — start states must be revisitable, not merely transient — or the
/// long-run distribution would depend on where the walk began.
pub fn stationary_distribution(spec: &MarkovSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let a = spec.symbols.len();
    let contexts = spec.context_count();

    let mut reachable = vec![false; contexts];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (k, &p) in spec.initial.iter().enumerate() {
        if p > 0.0 {
            reachable[k] = true;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        for c in 0..a {
            if spec.transition[k][c] > 0.0 {
                let next = spec.next_context(k, c);
                if !reachable[next] {
                    reachable[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }

    // Strong connectivity on the reachable set: r0 must reach every state
    // (guaranteed only for states downstream of r0) and be reachable from
    // every state. Together these give u -> r0 -> v for any pair.
    let r0 = reachable.iter().position(|&r| r).expect("initial sums to 1");
    let forward = span(spec, &reachable, r0, false);
    let backward = span(spec, &reachable, r0, true);
    if forward != reachable || backward != reachable {
        return Err(Error::config(
            "the chain is not irreducible over the states reachable from its initial distribution",
        ));
    }

    // Power iteration with the lazy kernel (P + I)/2; the self-loops break
    // any periodicity, so convergence to the unique fixed point is assured.
    let live = reachable.iter().filter(|&&r| r).count();
    let mut pi = vec![0.0; contexts];
    for (k, &r) in reachable.iter().enumerate() {
        if r {
            pi[k] = 1.0 / live as f64;
        }
    }
    let mut next = vec![0.0; contexts];
    for _ in 0..STATIONARY_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..contexts {
            if pi[k] == 0.0 {
                continue;
            }
            next[k] += 0.5 * pi[k];
            for c in 0..a {
                let p = spec.transition[k][c];
                if p > 0.0 {
                    next[spec.next_context(k, c)] += 0.5 * pi[k] * p;
                }
            }
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(old, new)| (old - new).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta < STATIONARY_TOL {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|x| *x /= total);
            return Ok(pi);
        }
    }
    Err(Error::config(
        "stationary distribution did not converge; the chain may be ill-conditioned",
    ))
}

/// States connected to `from` within `allowed`, following edges forward or
/// (with `reversed`) backward.
fn span(spec: &MarkovSpec, allowed: &[bool], from: usize, reversed: bool) -> Vec<bool> {
    let a = spec.symbols.len();
    let mut seen = vec![false; allowed.len()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        for k in 0..allowed.len() {
            if !allowed[k] {
                continue;
            }
            for c in 0..a {
                if spec.transition[k][c] <= 0.0 {
                    continue;
                }
                let next = spec.next_context(k, c);
                if !allowed[next] {
                    continue;
                }
                let (src, dst) = if reversed { (next, k) } else { (k, next) };
                if src == node && !seen[dst] {
                    seen[dst] = true;
                    queue.push_back(dst);
                }
            }
        }
    }
    seen
}

/// Accuracy of the best possible predictor of the next command, given the
/// full context, conditioned on the next event being one of the target
/// commands.
///
/// `targets` are `CommandEvent` descriptors. With stationary context weights
/// `pi` and transition rows `T`, the optimum answers `argmax` over target
/// columns, so its accuracy is
/// `sum_k pi[k] * max_t T[k][t]  /  sum_k pi[k] * sum_t T[k][t]`.
/// Models see only a windowed prefix, so their pooled accuracy on a corpus
/// drawn from `spec` approaches but cannot exceed this value.
pub fn bayes_optimal_accuracy(spec: &MarkovSpec, targets: &[String]) -> Result<f64> {
    spec.validate()?;
    let target_columns: Vec<usize> = spec
        .symbols
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.event_type == "CommandEvent"
                && s.descriptor.as_deref().is_some_and(|d| targets.contains(&d.to_string()))
        })
        .map(|(c, _)| c)
        .collect();
    if target_columns.is_empty() {
        return Err(Error::empty(
            "no chain symbol is a CommandEvent with one of the target descriptors",
        ));
    }
    let pi = stationary_distribution(spec)?;
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (k, row) in spec.transition.iter().enumerate() {
        if pi[k] == 0.0 {
            continue;
        }
        let best = target_columns
            .iter()
            .map(|&c| row[c])
            .fold(0.0f64, f64::max);
        let mass: f64 = target_columns.iter().map(|&c| row[c]).sum();
        numerator += pi[k] * best;
        denominator += pi[k] * mass;
    }
    if denominator <= 0.0 {
        return Err(Error::config(
            "the target commands are never emitted by the stationary chain",
        ));
    }
    Ok(numerator / denominator)
}
