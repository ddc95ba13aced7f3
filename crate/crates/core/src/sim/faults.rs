//! Seeded fault draws: grip and release failures, link drop-outs, and
//! scripted pauses taken from the scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::ScriptedPause;
use crate::scheduler::FaultEvent;
use crate::world::{AgentId, SlotId, SpotId};

use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultRates {
    /// Per grip attempt.
    pub p_pick_fail: f64,
    /// Per release attempt.
    pub p_place_fail: f64,
    /// Link losses per agent per minute.
    pub conn_loss_per_min: f64,
}

impl std::str::FromStr for FaultRates {
    type Err = ConfigError;

    /// `pick=0.3,place=0.1,conn=0.5`; omitted keys stay at zero.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ConfigError::FaultSpec(s.to_string());
        let mut rates = FaultRates::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(err)?;
            let value: f64 = value.trim().parse().map_err(|_| err())?;
            match key.trim() {
                "pick" => rates.p_pick_fail = value,
                "place" => rates.p_place_fail = value,
                "conn" => rates.conn_loss_per_min = value,
                _ => return Err(err()),
            }
        }
        Ok(rates)
    }
}

/// What happened this tick that a fault could strike.
#[derive(Debug, Clone, Default)]
pub struct FaultContext {
    pub tick: u64,
    pub grips: Vec<(AgentId, SpotId)>,
    pub releases: Vec<(AgentId, SlotId)>,
    /// Agents whose link is currently up.
    pub connected: Vec<AgentId>,
}

#[derive(Debug, Clone)]
pub struct FaultInjector {
    rng: ChaCha8Rng,
    rates: FaultRates,
    p_conn_tick: f64,
    scripted: Vec<(u64, f64)>,
}

impl FaultInjector {
    pub fn new(seed: u64, rates: FaultRates, dt: f64, pauses: &[ScriptedPause]) -> Self {
        let lambda = rates.conn_loss_per_min / 60.0;
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            rates,
            p_conn_tick: 1.0 - (-lambda * dt).exp(),
            scripted: pauses.iter().map(|p| ((p.time_s / dt).round() as u64, p.duration_s)).collect(),
        }
    }

    /// Draws happen in a fixed order (scripted pauses, grips, releases, then
    /// link losses) with attempts in the order given, so a seed fixes the outcome.
    pub fn inject_faults(&mut self, ctx: &FaultContext) -> Vec<FaultEvent> {
        let mut out: Vec<FaultEvent> = self
            .scripted
            .iter()
            .filter(|(t, _)| *t == ctx.tick)
            .map(|(_, d)| FaultEvent::ResetPause { duration_s: *d })
            .collect();
        for &(agent, spot) in &ctx.grips {
            if self.rng.random_bool(self.rates.p_pick_fail) {
                out.push(FaultEvent::PickFail { agent, spot });
            }
        }
        for &(agent, slot) in &ctx.releases {
            if self.rng.random_bool(self.rates.p_place_fail) {
                out.push(FaultEvent::PlaceFail { agent, slot });
            }
        }
        if self.p_conn_tick > 0.0 {
            for &agent in &ctx.connected {
                if self.rng.random::<f64>() < self.p_conn_tick {
                    out.push(FaultEvent::ConnectivityLoss(agent));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn busy(tick: u64) -> FaultContext {
        FaultContext {
            tick,
            grips: vec![(AgentId(0), SpotId(1)), (AgentId(2), SpotId(3))],
            releases: vec![(AgentId(1), SlotId(0))],
            connected: vec![AgentId(0), AgentId(1), AgentId(2)],
        }
    }

    #[test]
    fn zero_rates_never_fire() {
        let mut f = FaultInjector::new(7, FaultRates::default(), 0.05, &[]);
        assert!((0..10_000).all(|t| f.inject_faults(&busy(t)).is_empty()));
    }

    #[test]
    fn certain_pick_failure() {
        let rates = FaultRates {
            p_pick_fail: 1.0,
            ..FaultRates::default()
        };
        let mut f = FaultInjector::new(7, rates, 0.05, &[]);
        let ev = f.inject_faults(&busy(0));
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| matches!(e, FaultEvent::PickFail { .. })));
    }

    #[test]
    fn scripted_pause_fires_once_at_its_tick() {
        let pause = ScriptedPause {
            time_s: 30.0,
            duration_s: 5.0,
        };
        let mut f = FaultInjector::new(0, FaultRates::default(), 0.05, &[pause]);
        let hits: Vec<u64> = (0..2000).filter(|t| !f.inject_faults(&busy(*t)).is_empty()).collect();
        assert_eq!(hits, vec![600]);
    }

    #[test]
    fn pick_failure_frequency() {
        let rates = FaultRates {
            p_pick_fail: 0.3,
            ..FaultRates::default()
        };
        let mut f = FaultInjector::new(11, rates, 0.05, &[]);
        let n = 20_000;
        let fails: usize = (0..n).map(|t| f.inject_faults(&busy(t)).len()).sum();
        let rate = fails as f64 / (2 * n) as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
    }

    #[test]
    fn link_losses_follow_the_rate() {
        let rates = FaultRates {
            conn_loss_per_min: 6.0,
            ..FaultRates::default()
        };
        let mut f = FaultInjector::new(3, rates, 0.05, &[]);
        let ctx = FaultContext {
            connected: vec![AgentId(0)],
            ..FaultContext::default()
        };
        // 6 per minute over an hour of ticks
        let n: usize = (0..72_000).map(|_| f.inject_faults(&ctx).len()).sum();
        assert!((300..=420).contains(&n), "{n}");
    }

    #[test]
    fn spec_parsing() {
        let r: FaultRates = "pick=0.3, conn=2".parse().unwrap();
        assert_eq!((r.p_pick_fail, r.p_place_fail, r.conn_loss_per_min), (0.3, 0.0, 2.0));
        assert!("pick:0.3".parse::<FaultRates>().is_err());
        assert!("drop=0.1".parse::<FaultRates>().is_err());
    }

    #[test]
    fn same_seed_same_draws() {
        let rates = FaultRates {
            p_pick_fail: 0.5,
            p_place_fail: 0.5,
            conn_loss_per_min: 30.0,
        };
        let mut a = FaultInjector::new(9, rates, 0.05, &[]);
        let mut b = FaultInjector::new(9, rates, 0.05, &[]);
        for t in 0..500 {
            assert_eq!(a.inject_faults(&busy(t)), b.inject_faults(&busy(t)));
        }
    }
}
