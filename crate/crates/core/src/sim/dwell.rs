//! Passenger generation, stop queues and the boarding/alighting process.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{LineStop, PassengerProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingPassenger {
    pub arrival_s: f64,
    pub destination: usize,
    pub profile: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Onboard {
    pub destination: usize,
    pub profile: usize,
    pub origin_arrival_s: f64,
    pub boarded_at_s: f64,
}

#[derive(Debug, Clone)]
pub struct StopQueue {
    pub stop: usize,
    /// FIFO, ordered by arrival time.
    pub waiting: VecDeque<WaitingPassenger>,
    pub last_departure_s: f64,
    pub last_arrival_s: f64,
}

impl StopQueue {
    pub fn new(stop: usize) -> Self {
        Self {
            stop,
            waiting: VecDeque::new(),
            last_departure_s: 0.0,
            last_arrival_s: 0.0,
        }
    }
}

/// Supplies passengers arriving at one stop in time order.
pub trait ArrivalFeed {
    /// Moves every passenger arriving at or before `t` into `queue`.
    fn pull_until(&mut self, t: f64, queue: &mut StopQueue);
}

/// A feed that never produces anyone.
pub struct NoArrivals;

impl ArrivalFeed for NoArrivals {
    fn pull_until(&mut self, _t: f64, _queue: &mut StopQueue) {}
}

/// Homogeneous Poisson arrivals with destinations drawn from the stop's
/// destination series and profiles drawn by share. Every passenger consumes
/// exactly three uniforms from the stream.
pub struct PoissonSource {
    rng: ChaCha8Rng,
    rate_per_s: f64,
    stop: usize,
    n_stops: usize,
    dest_cdf: Vec<f64>,
    profile_cdf: Vec<f64>,
    next: Option<WaitingPassenger>,
    generated: usize,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // normalize away rounding in published series
    if acc > 0.0 {
        out.iter_mut().for_each(|c| *c /= acc);
    }
    out
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl PoissonSource {
    pub fn new(stop: usize, spec: &LineStop, n_stops: usize, profiles: &[PassengerProfile], rng: ChaCha8Rng) -> Self {
        let mut source = Self {
            rng,
            rate_per_s: spec.rate_per_s,
            stop,
            n_stops,
            dest_cdf: cdf(spec.destination_series.iter().copied()),
            profile_cdf: cdf(profiles.iter().map(|p| p.share)),
            next: None,
            generated: 0,
        };
        source.next = source.draw(0.0);
        source
    }

    fn draw(&mut self, after: f64) -> Option<WaitingPassenger> {
        if self.rate_per_s <= 0.0 {
            return None;
        }
        let u_gap: f64 = self.rng.random();
        let u_dest: f64 = self.rng.random();
        let u_profile: f64 = self.rng.random();
        let gap = -(1.0 - u_gap).ln() / self.rate_per_s;
        let hop = pick(&self.dest_cdf, u_dest) + 1;
        Some(WaitingPassenger {
            arrival_s: after + gap,
            destination: (self.stop + hop) % self.n_stops,
            profile: pick(&self.profile_cdf, u_profile),
        })
    }

    pub fn generated(&self) -> usize {
        self.generated
    }
}

impl ArrivalFeed for PoissonSource {
    fn pull_until(&mut self, t: f64, queue: &mut StopQueue) {
        while let Some(p) = self.next {
            if p.arrival_s > t {
                break;
            }
            queue.waiting.push_back(p);
            self.generated += 1;
            self.next = self.draw(p.arrival_s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellOutcome {
    pub departure_s: f64,
    pub boarded: usize,
    pub alighted: Vec<Onboard>,
    /// Passengers left behind because the bus was full.
    pub denied: usize,
}

/// Serves one bus at a stop. Passengers destined here alight while waiting
/// passengers board one at a time in FIFO order until the bus is full; anyone
/// arriving before the doors would close joins the queue and may board too.
/// The dwell is the larger of total boarding and total alighting time.
pub fn execute_dwell(
    onboard: &mut Vec<Onboard>,
    capacity: usize,
    queue: &mut StopQueue,
    feed: &mut dyn ArrivalFeed,
    profiles: &[PassengerProfile],
    arrival_s: f64,
) -> DwellOutcome {
    let stop = queue.stop;
    let mut alighted = Vec::new();
    onboard.retain(|p| {
        if p.destination == stop {
            alighted.push(*p);
            false
        } else {
            true
        }
    });
    let alight_total: f64 = alighted.iter().map(|p| profiles[p.profile].alight_s).sum();

    let mut board_total = 0.0;
    let mut boarded = 0;
    let mut close = arrival_s + alight_total;
    loop {
        feed.pull_until(close, queue);
        if onboard.len() >= capacity {
            break;
        }
        // the queue may already hold later arrivals pulled for a bus still
        // dwelling here with a longer service
        let Some(p) = queue.waiting.front().copied().filter(|p| p.arrival_s <= close) else {
            break;
        };
        queue.waiting.pop_front();
        board_total += profiles[p.profile].board_s;
        boarded += 1;
        onboard.push(Onboard {
            destination: p.destination,
            profile: p.profile,
            origin_arrival_s: p.arrival_s,
            boarded_at_s: p.arrival_s.max(arrival_s),
        });
        close = arrival_s + board_total.max(alight_total);
    }
    let denied = if onboard.len() >= capacity {
        queue.waiting.iter().take_while(|p| p.arrival_s <= close).count()
    } else {
        0
    };

    DwellOutcome {
        departure_s: close,
        boarded,
        alighted,
        denied,
    }
}
