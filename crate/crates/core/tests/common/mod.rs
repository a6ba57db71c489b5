#![allow(dead_code)]

use hawkes_islands::{EventSequence, Partition};
use rand::Rng;

/// Lattice step shared by event times, breaks and the quadrature grid.
pub const STEP: f64 = 1e-3;

/// A small instance with integer cell widths in `1..=5` and events snapped to
/// multiples of `STEP`, so every jump of every `Ψ` falls on the grid.
pub struct Instance {
    pub events: EventSequence,
    pub partition: Partition,
    pub window: (f64, f64),
    pub t_norm: f64,
}

pub fn lattice_instance(rng: &mut impl Rng, max_events: usize, max_cells: usize) -> Instance {
    let n = rng.gen_range(1..=max_cells);
    let mut breaks = vec![0.0];
    for _ in 0..n {
        let w = rng.gen_range(1..=5) as f64;
        breaks.push(breaks.last().unwrap() + w);
    }
    let a = *breaks.last().unwrap();
    let upper = (a * rng.gen_range(2.0..3.0)).round();
    let count = rng.gen_range(0..=max_events);
    let ticks = (upper / STEP) as i64;
    let mut times: Vec<f64> = (0..count)
        .map(|_| rng.gen_range(0..=ticks) as f64 * STEP)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    // clusters of nearby points so that many cells are hit
    if let Some(&t0) = times.first() {
        for k in 1..4 {
            let t = t0 + breaks[k.min(n)] - 0.5 * STEP * k as f64;
            let t = (t / STEP).round() * STEP;
            if t <= upper && !times.contains(&t) {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
    }
    let events = EventSequence::new(times, 0.0, upper).unwrap();
    let start = a + rng.gen_range(0..=((upper - a) / 4.0) as i64) as f64;
    let window = (start, upper);
    Instance {
        events,
        partition: Partition::new(breaks).unwrap(),
        window,
        t_norm: upper - a,
    }
}

/// `#{u ∈ events : t − u ∈ (lo, hi]}`.
pub fn indicator_count(times: &[f64], t: f64, lo: f64, hi: f64) -> f64 {
    times.iter().filter(|&&u| t - u > lo && t - u <= hi).count() as f64
}

/// Dense midpoint quadrature for `X` and a direct event sum for `b`, both in
/// the unnormalized indicator basis. Returns `(x, b)` with `x` row-major.
pub fn oracle_gram(inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let n = inst.partition.len();
    let d = n + 1;
    let times = inst.events.times();
    let (start, end) = inst.window;
    let cells: Vec<(f64, f64)> = (0..n).map(|i| inst.partition.cell(i)).collect();

    let mut b = vec![0.0; d];
    for &t in times.iter().filter(|&&t| t >= start && t <= end) {
        b[0] += 1.0;
        for (i, &(lo, hi)) in cells.iter().enumerate() {
            b[i + 1] += indicator_count(times, t, lo, hi);
        }
    }

    let a = inst.partition.support();
    let steps = ((end - start) / STEP).round() as usize;
    let mut x = vec![0.0; d * d];
    let mut psi = vec![0.0; d];
    psi[0] = 1.0;
    for k in 0..steps {
        let t = start + (k as f64 + 0.5) * STEP;
        psi[1..].iter_mut().for_each(|v| *v = 0.0);
        let from = times.partition_point(|&u| u < t - a);
        let to = times.partition_point(|&u| u < t);
        for &u in &times[from..to] {
            if let Some(i) = cells.iter().position(|&(lo, hi)| t - u > lo && t - u <= hi) {
                psi[i + 1] += 1.0;
            }
        }
        for i in 0..d {
            if psi[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                x[i * d + j] += psi[i] * psi[j];
            }
        }
    }
    for v in &mut x {
        *v *= STEP / inst.t_norm;
    }
    x[0] = (end - start) / inst.t_norm;
    for v in &mut b {
        *v /= inst.t_norm;
    }
    (x, b)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
