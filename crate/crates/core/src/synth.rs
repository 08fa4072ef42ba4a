//! Synthetic passenger inflow: two Gaussian peaks per day on a base level,
//! scaled by a weekday factor and a random daily level, with optional linear
//! trend and autocorrelated noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_data::FlowSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub amplitude: f64,
    /// Slot index of the peak maximum.
    pub center: f64,
    /// Standard deviation of the bump, in slots.
    pub width: f64,
}

impl Peak {
    fn at(&self, slot: f64) -> f64 {
        let z = (slot - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationProfile {
    pub base: f64,
    pub morning: Peak,
    pub evening: Peak,
    /// Relative swing of the weekday factor across a five-day week.
    pub weekly_amplitude: f64,
    /// Added per day.
    pub trend: f64,
    /// Standard deviation of the per-day multiplicative level on the peaks.
    pub daily_level_std: f64,
    pub noise_std: f64,
    /// Lag-one autocorrelation of the noise within a day.
    pub noise_ar: f64,
}

impl StationProfile {
    /// Expected count before noise and rectification.
    pub fn mean(&self, day: usize, slot: usize) -> f64 {
        self.mean_with_level(day, slot, 1.0)
    }

    fn mean_with_level(&self, day: usize, slot: usize, level: f64) -> f64 {
        let s = slot as f64;
        let phase = 2.0 * std::f64::consts::PI * (day % 5) as f64 / 5.0;
        let weekday = 1.0 + self.weekly_amplitude * phase.cos();
        self.base + (self.morning.at(s) + self.evening.at(s)) * weekday * level + self.trend * day as f64
    }

    /// Euclidean distance over all numeric fields.
    pub fn distance(&self, other: &StationProfile) -> f64 {
        let a = self.as_array();
        let b = other.as_array();
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn as_array(&self) -> [f64; 12] {
        [
            self.base,
            self.morning.amplitude,
            self.morning.center,
            self.morning.width,
            self.evening.amplitude,
            self.evening.center,
            self.evening.width,
            self.weekly_amplitude,
            self.trend,
            self.daily_level_std,
            self.noise_std,
            self.noise_ar,
        ]
    }
}

/// A profile placed on the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub station_id: String,
    pub line_id: String,
    pub line_order: u32,
    pub profile: StationProfile,
}

/// Draws `count(day, slot) = max(0, round(mean + noise))` for every station,
/// where the peaks of each day are scaled by `max(0, 1 + daily_level_std * z)`
/// and the noise is a stationary AR(1) process restarted every day.
pub fn generate<R: Rng + ?Sized>(
    stations: &[StationSpec],
    days: usize,
    slots_per_day: usize,
    interval_minutes: u32,
    rng: &mut R,
) -> Result<Vec<FlowSeries>> {
    if days == 0 || slots_per_day == 0 {
        return Err(Error::InvalidArgument("days and slots per day must be positive".into()));
    }
    stations
        .iter()
        .map(|st| {
            let p = &st.profile;
            if !(0.0..1.0).contains(&p.noise_ar) {
                return Err(Error::InvalidArgument(format!(
                    "noise autocorrelation of {} must lie in [0, 1)",
                    st.station_id
                )));
            }
            let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
            let innovation = p.noise_std.max(0.0) * (1.0 - p.noise_ar * p.noise_ar).sqrt();
            let counts = (0..days)
                .map(|d| {
                    let level = if p.daily_level_std > 0.0 {
                        (1.0 + p.daily_level_std * std_normal.sample(rng)).max(0.0)
                    } else {
                        1.0
                    };
                    let mut eps = 0.0;
                    (0..slots_per_day)
                        .map(|s| {
                            if p.noise_std > 0.0 {
                                let z: f64 = std_normal.sample(rng);
                                eps = if s == 0 { p.noise_std * z } else { p.noise_ar * eps + innovation * z };
                            }
                            (p.mean_with_level(d, s, level) + eps).round().max(0.0)
                        })
                        .collect()
                })
                .collect();
            FlowSeries::new(&st.station_id, &st.line_id, st.line_order, interval_minutes, counts)
        })
        .collect()
}

/// Parameter ranges of the station family. Every profile field is drawn
/// uniformly from its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileFamily {
    pub base: [f64; 2],
    /// Combined peak mass; split between morning and evening by a per-station
    /// share.
    pub peak_total: [f64; 2],
    pub morning_share: [f64; 2],
    /// Peak centers as fractions of the service day.
    pub morning_center: [f64; 2],
    pub evening_center: [f64; 2],
    pub morning_width: [f64; 2],
    pub evening_width: [f64; 2],
    pub weekly_amplitude: [f64; 2],
    pub trend: [f64; 2],
    pub daily_level_std: [f64; 2],
    /// Noise standard deviation relative to the station's peak total.
    pub relative_noise: [f64; 2],
    pub noise_ar: [f64; 2],
}

impl Default for ProfileFamily {
    fn default() -> Self {
        Self {
            base: [5.0, 30.0],
            peak_total: [80.0, 400.0],
            morning_share: [0.1, 0.9],
            morning_center: [0.08, 0.18],
            evening_center: [0.65, 0.78],
            morning_width: [1.5, 4.0],
            evening_width: [2.5, 6.0],
            weekly_amplitude: [0.0, 0.15],
            trend: [0.0, 0.0],
            daily_level_std: [0.05, 0.2],
            relative_noise: [0.01, 0.03],
            noise_ar: [0.5, 0.9],
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

impl ProfileFamily {
    pub fn sample<R: Rng + ?Sized>(&self, slots_per_day: usize, rng: &mut R) -> StationProfile {
        let slots = slots_per_day as f64;
        let total = uniform(rng, self.peak_total);
        let share = uniform(rng, self.morning_share);
        StationProfile {
            base: uniform(rng, self.base),
            morning: Peak {
                amplitude: total * share,
                center: uniform(rng, self.morning_center) * slots,
                width: uniform(rng, self.morning_width),
            },
            evening: Peak {
                amplitude: total * (1.0 - share),
                center: uniform(rng, self.evening_center) * slots,
                width: uniform(rng, self.evening_width),
            },
            weekly_amplitude: uniform(rng, self.weekly_amplitude),
            trend: uniform(rng, self.trend),
            daily_level_std: uniform(rng, self.daily_level_std),
            noise_std: uniform(rng, self.relative_noise) * total,
            noise_ar: uniform(rng, self.noise_ar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_source_stations: usize,
    pub n_target_stations: usize,
    pub stations_per_source_line: usize,
    pub source_days: usize,
    pub target_days: usize,
    pub slots_per_day: usize,
    pub interval_minutes: u32,
    pub family: ProfileFamily,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_source_stations: 270,
            n_target_stations: 10,
            stations_per_source_line: 18,
            source_days: 20,
            target_days: 10,
            // 06:00 to 23:00 in 15-minute intervals
            slots_per_day: 68,
            interval_minutes: 15,
            family: ProfileFamily::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_source_stations == 0 || self.n_target_stations == 0 {
            return Err(Error::Config("scenario needs at least one source and one target station".into()));
        }
        if self.source_days == 0 || self.target_days == 0 || self.slots_per_day == 0 {
            return Err(Error::Config("scenario days and slots must be positive".into()));
        }
        if self.stations_per_source_line == 0 || self.interval_minutes == 0 {
            return Err(Error::Config("stations per line and interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub source_specs: Vec<StationSpec>,
    pub target_specs: Vec<StationSpec>,
    pub source: Vec<FlowSeries>,
    pub target: Vec<FlowSeries>,
}

/// Source stations on several lines and target stations on one new line,
/// all drawn from the same profile family with independent streams.
pub fn make_transfer_scenario(config: &ScenarioConfig, family_seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(family_seed);
    let mut source_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let mut target_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let slots = config.slots_per_day;

    let source_specs: Vec<StationSpec> = (0..config.n_source_stations)
        .map(|k| {
            let line = k / config.stations_per_source_line;
            let order = k % config.stations_per_source_line + 1;
            StationSpec {
                station_id: format!("S{:02}-{order:02}", line + 1),
                line_id: format!("S{:02}", line + 1),
                line_order: order as u32,
                profile: config.family.sample(slots, &mut source_rng),
            }
        })
        .collect();
    let target_specs: Vec<StationSpec> = (0..config.n_target_stations)
        .map(|k| StationSpec {
            station_id: format!("T01-{:02}", k + 1),
            line_id: "T01".into(),
            line_order: k as u32 + 1,
            profile: config.family.sample(slots, &mut target_rng),
        })
        .collect();

    let source = generate(&source_specs, config.source_days, slots, config.interval_minutes, &mut source_rng)?;
    let target = generate(&target_specs, config.target_days, slots, config.interval_minutes, &mut target_rng)?;
    Ok(Scenario {
        source_specs,
        target_specs,
        source,
        target,
    })
}
