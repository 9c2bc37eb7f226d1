//! Wall-clock measurement: one discarded warm-up call, then the median of
//! at least five timed repetitions on the monotonic clock.

use std::hint::black_box;
use web_time::Instant;

pub const MIN_REPETITIONS: usize = 5;

/// Median wall-clock seconds of `f` over `max(repetitions, 5)` runs.
pub fn time_median<R>(repetitions: usize, mut f: impl FnMut() -> R) -> f64 {
    black_box(f());
    let reps = repetitions.max(MIN_REPETITIONS);
    let mut samples: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            black_box(f());
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(&mut samples)
}

pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}

/// Smallest positive difference between consecutive clock readings.
pub fn clock_resolution() -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min((b - a).as_secs_f64());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn noop_is_near_resolution() {
        let res = clock_resolution();
        assert!(res > 0.0 && res < 1e-3);
        let t = time_median(5, || ());
        assert!(t <= res.max(1e-6) * 10.0, "noop took {t}s, resolution {res}s");
    }

    #[test]
    fn busy_wait_calibration() {
        let target = 0.004;
        let t = time_median(5, || {
            let start = Instant::now();
            while start.elapsed().as_secs_f64() < target {
                std::hint::spin_loop();
            }
        });
        assert!((t - target).abs() < 0.2 * target, "measured {t}s for {target}s");
    }

    #[test]
    fn runs_at_least_five_times() {
        let mut calls = 0;
        time_median(2, || calls += 1);
        assert_eq!(calls, 6);
    }
}
