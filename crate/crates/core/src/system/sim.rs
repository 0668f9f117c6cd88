use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SystemConfig, SystemError};
use crate::rng::{substream, Domain};
use crate::stats::{Proportion, Z_95};

/// Independent replications a simulation is split into.
pub const REPLICATIONS: u64 = 8;
/// Slots discarded at the start of each replication.
pub const WARMUP_SLOTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Failed packets over packets arriving in the measured slots.
    pub p_pf: Proportion,
    pub slots: usize,
    /// Average number of transmissions eligible for service per slot.
    pub mean_demand: f64,
    /// Fraction of slots in which demand exceeded the resources.
    pub overload_fraction: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    arrival: usize,
    eligible: usize,
    attempts: usize,
    /// Already delivered; a false NACK keeps it transmitting.
    delivered: bool,
    measured: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    packets: u64,
    failures: u64,
    demand: u64,
    overloaded: u64,
    slots: u64,
}

fn replicate(cfg: &SystemConfig, slots: usize, rng: &mut ChaCha8Rng) -> Tally {
    let mut tally = Tally::default();
    let mut pool: Vec<Pending> = Vec::new();
    let mut eligible: Vec<usize> = Vec::new();
    let measure = WARMUP_SLOTS..WARMUP_SLOTS + slots;
    // extra slots let measured packets reach their deadline
    let horizon = measure.end + cfg.t_c;
    let fail = |p: &Pending, tally: &mut Tally| {
        if p.measured && !p.delivered {
            tally.failures += 1;
        }
    };

    for t in 0..horizon {
        if t < measure.end {
            for _ in 0..cfg.n_ue {
                if rng.random::<f64>() < cfg.p_arrival {
                    let measured = measure.contains(&t);
                    tally.packets += measured as u64;
                    pool.push(Pending {
                        arrival: t,
                        eligible: t,
                        attempts: 0,
                        delivered: false,
                        measured,
                    });
                }
            }
        }
        pool.retain(|p| {
            let expired = t - p.arrival >= cfg.t_c;
            if expired {
                fail(p, &mut tally);
            }
            !expired
        });

        eligible.clear();
        eligible.extend((0..pool.len()).filter(|&i| pool[i].eligible <= t));
        if measure.contains(&t) {
            tally.slots += 1;
            tally.demand += eligible.len() as u64;
            tally.overloaded += (eligible.len() > cfg.n_res) as u64;
        }
        let served = eligible.len().min(cfg.n_res);
        for i in 0..served {
            let j = rng.random_range(i..eligible.len());
            eligible.swap(i, j);
        }

        let mut done = vec![false; pool.len()];
        for &i in &eligible[..served] {
            let p = &mut pool[i];
            p.attempts += 1;
            let error = rng.random::<f64>() < cfg.p_e;
            let nack = if error {
                rng.random::<f64>() >= cfg.fnr
            } else {
                rng.random::<f64>() < cfg.fpr
            };
            if !error {
                p.delivered = true;
            }
            let next = t + cfg.t_rtt;
            let can_retry = p.attempts <= cfg.n_retx && next - p.arrival < cfg.t_c;
            if nack && can_retry {
                p.eligible = next;
            } else {
                done[i] = true;
                fail(p, &mut tally);
            }
        }
        let mut k = 0;
        pool.retain(|_| {
            k += 1;
            !done[k - 1]
        });
    }
    tally
}

/// Slot-level simulation of the scheduled system: Bernoulli arrivals per
/// UE, uniformly random service of up to `N_res` eligible transmissions,
/// errors with probability `P_e`, NACKs according to the operating point,
/// retransmissions `T_RTT` slots after service while the attempt budget and
/// the deadline allow. A false ACK on an erroneous packet fails it at once;
/// a false NACK on a delivered packet only adds load.
///
/// `slots` measured slots are split over [`REPLICATIONS`] independent
/// replications that run in parallel.
pub fn simulate_system(
    cfg: &SystemConfig,
    slots: usize,
    seed: u64,
) -> Result<SimulationResult, SystemError> {
    cfg.validate()?;
    let per_rep = slots.div_ceil(REPLICATIONS as usize);
    let total = (0..REPLICATIONS)
        .into_par_iter()
        .map(|r| replicate(cfg, per_rep, &mut substream(seed, Domain::Simulator, r)))
        .reduce(Tally::default, |a, b| Tally {
            packets: a.packets + b.packets,
            failures: a.failures + b.failures,
            demand: a.demand + b.demand,
            overloaded: a.overloaded + b.overloaded,
            slots: a.slots + b.slots,
        });
    Ok(SimulationResult {
        p_pf: Proportion::wilson(total.failures, total.packets, Z_95),
        slots: total.slots as usize,
        mean_demand: total.demand as f64 / total.slots.max(1) as f64,
        overload_fraction: total.overloaded as f64 / total.slots.max(1) as f64,
    })
}
