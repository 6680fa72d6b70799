use std::time::{Duration, Instant};

/// Warm-up runs discarded before measuring.
pub const WARMUP: usize = 2;
/// Smallest number of measured repeats.
pub const MIN_REPEATS: usize = 5;

/// Median of `repeats` timed samples after [`WARMUP`] untimed runs.
///
/// A sample shorter than `min_sample` is too coarse for the clock, so each
/// sample runs `f` enough times to reach it and reports the mean per call.
pub fn median_time(repeats: usize, min_sample: Duration, mut f: impl FnMut()) -> Duration {
    let repeats = repeats.max(MIN_REPEATS);
    let t = Instant::now();
    for _ in 0..WARMUP {
        f();
    }
    let per_call = t.elapsed() / WARMUP as u32;
    let inner = calls_per_sample(per_call, min_sample);
    let mut samples: Vec<Duration> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..inner {
                f();
            }
            t.elapsed() / inner
        })
        .collect();
    samples.sort();
    samples[samples.len() / 2]
}

/// Medians of workloads `0..count`, run as `f(i)`, measured round-robin:
/// each round takes one sample of every workload, so slow spells on a
/// shared machine hit all of them alike instead of skewing whichever ran at
/// the time.
pub fn interleaved_medians(
    repeats: usize,
    min_sample: Duration,
    count: usize,
    mut f: impl FnMut(usize),
) -> Vec<Duration> {
    let repeats = repeats.max(MIN_REPEATS);
    let inner: Vec<u32> = (0..count)
        .map(|i| {
            let t = Instant::now();
            for _ in 0..WARMUP {
                f(i);
            }
            calls_per_sample(t.elapsed() / WARMUP as u32, min_sample)
        })
        .collect();
    let mut samples = vec![Vec::with_capacity(repeats); count];
    for _ in 0..repeats {
        for (i, out) in samples.iter_mut().enumerate() {
            let t = Instant::now();
            for _ in 0..inner[i] {
                f(i);
            }
            out.push(t.elapsed() / inner[i]);
        }
    }
    samples
        .into_iter()
        .map(|mut s| {
            s.sort();
            s[s.len() / 2]
        })
        .collect()
}

fn calls_per_sample(per_call: Duration, min_sample: Duration) -> u32 {
    if per_call.is_zero() {
        1000
    } else {
        (min_sample.as_secs_f64() / per_call.as_secs_f64()).ceil().clamp(1.0, 1e6) as u32
    }
}

pub fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
