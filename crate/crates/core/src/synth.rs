//! Seeded synthetic PM telemetry: healthy ports with noisy gauges and
//! zero-suppressed counters, ports that degrade gradually before an outage,
//! outages with no precursor at all, and whole port-days lost in collection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, WindowSample, WindowSpec};
use crate::ingest::{Day, PmRecord, HCCS, UAS};

/// Traffic indicator every synthetic port reports daily.
pub const PROTOCOL_INDICATOR: &str = "PROT_OTN";

/// Average kept positive windows one outage produces; used to turn the
/// positive-rate target into an outage rate. Measured on the generator.
const POSITIVES_PER_OUTAGE: f64 = 6.4;
/// Final days of a ramp that may carry HCCS spikes.
const SPIKE_DAYS: usize = 3;
const MAX_DROP_PROBABILITY: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("missing rate {target} is below the {structural:.3} already implied by the vocabulary and zero-suppression")]
    MissingRateTooLow { target: f64, structural: f64 },
    #[error("missing rate {target} would need dropping {drop:.3} of all port-days")]
    MissingRateTooHigh { target: f64, drop: f64 },
    #[error("{days} days cannot hold a {ramp}-day degradation and its labels")]
    RampTooLong { days: usize, ramp: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// One entry per network.
    pub ports_per_network: Vec<usize>,
    pub days: usize,
    pub start_day: Day,
    /// Share of ports that also host an Ethernet facility.
    pub eth_fraction: f64,
    /// Share of ports that also host a supervisory-channel facility.
    pub osc_fraction: f64,
    /// Extra sparse counters in each network's vocabulary.
    pub extra_pms: usize,
    /// Share of the extra counters common to all networks.
    pub vocabulary_overlap: f64,
    pub target_missing_rate: f64,
    /// Share of kept windows that should be positive.
    pub target_positive_rate: f64,
    /// Share of ports whose outages come with a degradation ramp.
    pub degrading_fraction: f64,
    /// Inclusive range of ramp lengths in days.
    pub degradation_days: (usize, usize),
    /// Share of outages with no precursor.
    pub unpredictable_fraction: f64,
    pub zero_suppression: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            ports_per_network: alloc::vec![50, 100, 150],
            days: 120,
            start_day: Day(19723),
            eth_fraction: 0.5,
            osc_fraction: 0.3,
            extra_pms: 6,
            vocabulary_overlap: 0.5,
            target_missing_rate: 0.75,
            target_positive_rate: 0.10,
            degrading_fraction: 0.35,
            degradation_days: (5, 12),
            unpredictable_fraction: 0.2,
            zero_suppression: true,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.ports_per_network.is_empty() || self.ports_per_network.contains(&0) {
            return Err(SynthError::InvalidConfig("every network needs at least one port"));
        }
        if self.days < 14 {
            return Err(SynthError::InvalidConfig("days must be >= 14"));
        }
        if ![self.eth_fraction, self.osc_fraction, self.vocabulary_overlap, self.degrading_fraction, self.unpredictable_fraction]
            .into_iter()
            .all(unit)
        {
            return Err(SynthError::InvalidConfig("fractions must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.target_missing_rate) || !(0.0..1.0).contains(&self.target_positive_rate) {
            return Err(SynthError::InvalidConfig("target rates must lie in [0, 1)"));
        }
        let (lo, hi) = self.degradation_days;
        if lo <= SPIKE_DAYS || lo > hi {
            return Err(SynthError::InvalidConfig("degradation_days must satisfy 4 <= min <= max"));
        }
        if hi + 10 > self.days {
            return Err(SynthError::RampTooLong { days: self.days, ramp: hi });
        }
        Ok(())
    }

    pub fn network_id(index: usize) -> String {
        format!("N{}", index + 1)
    }
}

/// One outage in the ground-truth log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageEvent {
    pub network_id: String,
    pub port_id: String,
    pub outage_date: Day,
    pub has_precursor: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkTelemetry {
    pub network_id: String,
    pub records: Vec<PmRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub networks: Vec<NetworkTelemetry>,
    pub events: Vec<OutageEvent>,
    /// Per-network probability of losing a whole port-day.
    pub drop_probability: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Facility {
    Otm,
    Eth,
    Osc,
}

impl Facility {
    fn name(self) -> &'static str {
        match self {
            Facility::Otm => "OTM",
            Facility::Eth => "ETH",
            Facility::Osc => "OSC",
        }
    }
}

struct Outage {
    day: usize,
    ramp: usize,
}

struct PortPlan {
    facilities: Vec<Facility>,
    outages: Vec<Outage>,
}

/// Deterministic stream per (network, port, purpose) so ports can be
/// generated in any order.
fn port_rng(seed: u64, network: usize, port: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((network as u64) << 40) | ((port as u64) << 8) | purpose);
    rng
}

fn vocabulary(cfg: &GenConfig, network: usize) -> Vec<String> {
    let shared = (cfg.extra_pms as f64 * cfg.vocabulary_overlap).round() as usize;
    (0..cfg.extra_pms)
        .map(|i| if i < shared { format!("XC{i}") } else { format!("N{}_XC{i}", network + 1) })
        .collect()
}

fn plan_port(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> PortPlan {
    let mut facilities = alloc::vec![Facility::Otm];
    if rng.random_bool(cfg.eth_fraction) {
        facilities.push(Facility::Eth);
    }
    if rng.random_bool(cfg.osc_fraction) {
        facilities.push(Facility::Osc);
    }

    let windows = (cfg.days - 13) as f64;
    let rate = cfg.target_positive_rate * windows / POSITIVES_PER_OUTAGE;
    let degrading = rng.random_bool(cfg.degrading_fraction);
    let mut n_pred = 0;
    if degrading {
        let mean = rate * (1.0 - cfg.unpredictable_fraction) / cfg.degrading_fraction;
        n_pred = 1 + poisson(rng, (mean - 1.0).max(0.0));
    }
    let n_unpred = poisson(rng, rate * cfg.unpredictable_fraction);

    let past = WindowSpec::default().past_days;
    let (lo, hi) = cfg.degradation_days;
    let mut wanted: Vec<usize> = (0..n_pred).map(|_| rng.random_range(lo..=hi)).collect();
    wanted.extend(core::iter::repeat_n(0, n_unpred));
    let mut outages: Vec<Outage> = Vec::new();
    for ramp in wanted {
        for _ in 0..200 {
            // a ramped outage leaves room for a whole window on its spike-free part
            let (first, last) = if ramp > 0 { ((ramp + 1).max(past + SPIKE_DAYS), cfg.days - SPIKE_DAYS) } else { (1, cfg.days - 1) };
            let day = rng.random_range(first..last);
            let clear = outages.iter().all(|o| {
                let (a0, a1) = (day - ramp, day + 1);
                let (b0, b1) = (o.day - o.ramp, o.day + 1);
                a1 + 8 <= b0 || b1 + 8 <= a0
            });
            if clear {
                outages.push(Outage { day, ramp });
                break;
            }
        }
    }
    outages.sort_by_key(|o| o.day);
    PortPlan { facilities, outages }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Day-by-day records of one port before collection gaps.
fn emit_port(cfg: &GenConfig, network: usize, port: usize, extras: &[String], plan: &PortPlan) -> Vec<Vec<PmRecord>> {
    let mut rng = port_rng(cfg.seed, network, port, 1);
    let net = GenConfig::network_id(network);
    let port_id = format!("P{port:04}");
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let base_q = 12.0 + noise.sample(&mut rng);
    let base_opr = -3.0 + noise.sample(&mut rng);
    let base_rx = 1.0e6 * (1.0 + 0.5 * rng.random::<f64>());
    let base_osc = -10.0 + noise.sample(&mut rng);
    let drift = rng.random_range(1.5..3.5);
    let growth = rng.random_range(0.4..1.2);
    let opr_drop = rng.random_range(0.0..2.0);

    let mut days = Vec::with_capacity(cfg.days);
    for d in 0..cfg.days {
        let mut recs: Vec<PmRecord> = Vec::new();
        let mut put = |fac: Facility, name: &str, value: f64, counter: bool| {
            if counter && value == 0.0 && cfg.zero_suppression {
                return;
            }
            recs.push(PmRecord {
                network_id: net.clone(),
                port_id: port_id.clone(),
                facility_type: fac.name().to_string(),
                day: cfg.start_day.offset(d as i32),
                pm_name: name.to_string(),
                pm_value: value,
            });
        };

        let outage = plan.outages.iter().find(|o| o.day == d);
        // ramp progress in (0, 1] while degrading toward an outage
        let progress = plan
            .outages
            .iter()
            .find(|o| o.ramp > 0 && d + o.ramp >= o.day && d < o.day)
            .map(|o| (o, (d + o.ramp + 1 - o.day) as f64 / o.ramp as f64));
        let r = progress.map_or(0.0, |(_, r)| r);
        let outage_precursor = outage.is_some_and(|o| o.ramp > 0);
        let r_gauge = if outage_precursor { 1.0 } else { r };

        let uas = if outage.is_some() { rng.random_range(60.0..86400.0f64).round() } else { 0.0 };
        let hccs = match progress {
            Some((o, _)) if o.day - d <= SPIKE_DAYS => {
                let p = 0.25 + 0.2 * (SPIKE_DAYS - (o.day - d)) as f64;
                if rng.random_bool(p) {
                    rng.random_range(1.0..30.0f64).round()
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };

        for &fac in &plan.facilities {
            match fac {
                Facility::Otm => {
                    put(fac, "QAVG", base_q - drift * r_gauge + 0.15 * noise.sample(&mut rng), false);
                    put(fac, "QSTDEV", (0.12 + growth * r_gauge + 0.03 * noise.sample(&mut rng)).abs(), false);
                    put(fac, "OPR", base_opr - opr_drop * r_gauge + 0.1 * noise.sample(&mut rng), false);
                    put(fac, PROTOCOL_INDICATOR, 1.0, false);
                    let cv = if rng.random_bool((0.03 + 0.7 * r).min(1.0)) { (rng.random_range(1.0..20.0) * (1.0 + 10.0 * r)).round() } else { 0.0 };
                    put(fac, "CV", cv, true);
                    put(fac, HCCS, hccs, true);
                    put(fac, UAS, uas, true);
                    for name in extras {
                        let v = if rng.random_bool(0.1) { rng.random_range(1.0..50.0f64).round() } else { 0.0 };
                        put(fac, name, v, true);
                    }
                }
                Facility::Eth => {
                    put(fac, "RX_FRAMES", (base_rx * (1.0 + 0.05 * noise.sample(&mut rng))).round(), false);
                    let err = if rng.random_bool((0.02 + 0.6 * r).min(1.0)) { (rng.random_range(1.0..10.0) * (1.0 + 20.0 * r)).round() } else { 0.0 };
                    put(fac, "FCS_ERR", err, true);
                    put(fac, UAS, uas, true);
                }
                Facility::Osc => {
                    put(fac, "OSC_OPR", base_osc + 0.1 * noise.sample(&mut rng), false);
                    let ber = if rng.random_bool(0.05) { rng.random_range(1.0..5.0f64).round() } else { 0.0 };
                    put(fac, "OSC_BER", ber, true);
                }
            }
        }
        days.push(recs);
    }
    days
}

fn present_cells(day: &[PmRecord]) -> usize {
    day.iter().map(|r| r.pm_name.as_str()).collect::<BTreeSet<_>>().len()
}

/// Generates every network. Missing-rate targeting first measures the
/// absence implied by vocabulary and zero-suppression, then drops whole
/// port-days at the rate that closes the gap on kept windows (whose present
/// day is always collected).
pub fn generate(cfg: &GenConfig) -> Result<Generated, SynthError> {
    cfg.validate()?;
    let past = WindowSpec::default().past_days as f64;
    let mut networks = Vec::new();
    let mut events = Vec::new();
    let mut drops = Vec::new();
    for (n, &ports) in cfg.ports_per_network.iter().enumerate() {
        let extras = vocabulary(cfg, n);
        let plans: Vec<PortPlan> = (0..ports).map(|p| plan_port(cfg, &mut port_rng(cfg.seed, n, p, 0))).collect();
        let raw: Vec<Vec<Vec<PmRecord>>> = plans.iter().enumerate().map(|(p, plan)| emit_port(cfg, n, p, &extras, plan)).collect();

        let mut names: BTreeSet<&str> = [UAS, HCCS, PROTOCOL_INDICATOR].into_iter().collect();
        let (mut present, mut port_days) = (0usize, 0usize);
        for days in &raw {
            for day in days {
                names.extend(day.iter().map(|r| r.pm_name.as_str()));
                present += present_cells(day);
                port_days += 1;
            }
        }
        let structural = 1.0 - present as f64 / (port_days * names.len()) as f64;
        let target = cfg.target_missing_rate;
        if target + 1e-12 < structural {
            return Err(SynthError::MissingRateTooLow { target, structural });
        }
        let drop = ((target - structural) / ((1.0 - structural) * (past - 1.0) / past)).max(0.0);
        if drop > MAX_DROP_PROBABILITY {
            return Err(SynthError::MissingRateTooHigh { target, drop });
        }
        drops.push(drop);

        let network_id = GenConfig::network_id(n);
        let mut records = Vec::new();
        for (p, (plan, days)) in plans.iter().zip(raw).enumerate() {
            let mut rng = port_rng(cfg.seed, n, p, 2);
            for (d, day) in days.into_iter().enumerate() {
                // the last spike-free ramp day stays, so every ramp yields a kept positive window
                let keep_always = d == 0
                    || d + 1 == cfg.days
                    || plan.outages.iter().any(|o| o.day == d || (o.ramp > 0 && o.day == d + SPIKE_DAYS + 1));
                let lost = rng.random_bool(drop);
                if keep_always || !lost {
                    records.extend(day);
                }
            }
            events.extend(plan.outages.iter().map(|o| OutageEvent {
                network_id: network_id.clone(),
                port_id: format!("P{p:04}"),
                outage_date: cfg.start_day.offset(o.day as i32),
                has_precursor: o.ramp > 0,
            }));
        }
        networks.push(NetworkTelemetry { network_id, records });
    }
    Ok(Generated { networks, events, drop_probability: drops })
}

/// Ground-truth outages grouped by port, for attributing positive windows.
#[derive(Clone, Debug, Default)]
pub struct OutageIndex {
    by_port: BTreeMap<(String, String), Vec<(Day, bool)>>,
}

impl OutageIndex {
    pub fn new(events: &[OutageEvent]) -> Self {
        let mut by_port: BTreeMap<(String, String), Vec<(Day, bool)>> = BTreeMap::new();
        for e in events {
            by_port.entry((e.network_id.clone(), e.port_id.clone())).or_default().push((e.outage_date, e.has_precursor));
        }
        Self { by_port }
    }

    /// Outages inside the label horizon of a window.
    pub fn upcoming(&self, sample: &WindowSample, spec: WindowSpec) -> impl Iterator<Item = (Day, bool)> + '_ {
        let (lo, hi) = (sample.present_day, sample.present_day.offset(spec.horizon_days as i32));
        self.by_port
            .get(&(sample.network_id.clone(), sample.port_id.clone()))
            .into_iter()
            .flatten()
            .copied()
            .filter(move |&(d, _)| d > lo && d <= hi)
    }

    /// Negatives plus positives not caused by an outage without precursor.
    pub fn in_precursor_subset(&self, sample: &WindowSample, spec: WindowSpec) -> bool {
        !sample.label || self.upcoming(sample, spec).all(|(_, precursor)| precursor)
    }
}

/// Summary row describing one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub days: usize,
    pub ports: usize,
    pub samples: usize,
    pub features: usize,
    pub missing_rate: f64,
    pub positive_rate: f64,
}

pub fn dataset_stats(name: &str, d: &Dataset) -> DatasetStats {
    let ports: BTreeSet<(&str, &str)> = d.samples.iter().map(|s| (s.network_id.as_str(), s.port_id.as_str())).collect();
    let days = match (d.samples.iter().map(|s| s.present_day).min(), d.samples.iter().map(|s| s.present_day).max()) {
        (Some(a), Some(b)) => b.days_since(a) as usize + d.spec.span(),
        _ => 0,
    };
    DatasetStats {
        name: name.into(),
        days,
        ports: ports.len(),
        samples: d.samples.len(),
        features: d.schema.n_numeric(),
        missing_rate: d.missing_rate(),
        positive_rate: d.positive_rate(),
    }
}
