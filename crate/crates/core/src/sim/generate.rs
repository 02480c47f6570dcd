//! Data generators for the three simulation settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, SubjectRecord, TrialDataset};
use crate::error::{Error, Result};

pub const DEFAULT_CENSORING_RATE: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SettingId {
    One,
    Two,
    Three,
}

impl SettingId {
    pub const ALL: [SettingId; 3] = [SettingId::One, SettingId::Two, SettingId::Three];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(SettingId::One),
            2 => Ok(SettingId::Two),
            3 => Ok(SettingId::Three),
            _ => Err(Error::Argument(format!(
                "unknown setting {n}; expected 1, 2 or 3"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            SettingId::One => 1,
            SettingId::Two => 2,
            SettingId::Three => 3,
        }
    }
}

/// How the two survival-time formulas map onto the arms.
///
/// Each setting gives two formulas, one built from `S1` and one from `S0`,
/// but prints the one built from `S1` as the control-arm time. `Paired` gives
/// each arm the time built from its own surrogate; `Verbatim` follows the
/// printed labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorReading {
    #[default]
    Paired,
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub id: SettingId,
    pub censoring_rate: f64,
    pub t: f64,
    pub reading: GeneratorReading,
}

impl SimSetting {
    pub fn new(id: SettingId) -> Self {
        SimSetting {
            id,
            censoring_rate: DEFAULT_CENSORING_RATE,
            t: 5.0,
            reading: GeneratorReading::Paired,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        Ok(SimSetting::new(SettingId::from_number(n)?))
    }

    pub fn with_reading(self, reading: GeneratorReading) -> Self {
        SimSetting { reading, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.censoring_rate > 0.0 && self.censoring_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "censoring rate must be positive, got {}",
                self.censoring_rate
            )));
        }
        if !(self.t > 0.0) {
            return Err(Error::Argument(format!(
                "t must be positive, got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Potential outcomes for every subject under both arms, indexed by
/// [`Arm::index`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialOutcomeSample {
    pub s: [Vec<f64>; 2],
    pub t: [Vec<f64>; 2],
    pub c: [Vec<f64>; 2],
    pub arm: Vec<Arm>,
}

impl PotentialOutcomeSample {
    pub fn len(&self) -> usize {
        self.arm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arm.is_empty()
    }

    /// Copies the control-arm outcomes into the treated arm.
    pub fn with_identical_arms(&self) -> Self {
        let mut out = self.clone();
        out.s[1] = out.s[0].clone();
        out.t[1] = out.t[0].clone();
        out.c[1] = out.c[0].clone();
        out
    }
}

fn std_exp(rng: &mut impl Rng) -> f64 {
    rand_distr::Exp1.sample(rng)
}

fn exp_rate(rate: f64, rng: &mut impl Rng) -> f64 {
    Exp::new(rate).unwrap().sample(rng)
}

/// The surrogate and the survival time built from it for one arm's formula.
/// `from_treated` selects the formula that uses `S1`.
fn draw_pair(id: SettingId, from_treated: bool, rng: &mut impl Rng) -> (f64, f64) {
    let noise: Normal<f64> = Normal::new(0.0, 0.1).unwrap();
    match (id, from_treated) {
        (SettingId::One, true) => {
            let s = 6.0 * std_exp(rng);
            (s, std_exp(rng) * 5.0 * s)
        }
        (SettingId::One, false) => {
            let s = 4.0 * std_exp(rng);
            (s, std_exp(rng) * 3.0 * s)
        }
        (SettingId::Two, true) => {
            let s = exp_rate(0.6, rng);
            (s, s + exp_rate(1.0 / 8.0, rng) + noise.sample(rng).exp())
        }
        (SettingId::Two, false) => {
            let s = exp_rate(2.0, rng);
            (s, s + exp_rate(1.0 / 4.0, rng) + noise.sample(rng).exp())
        }
        (SettingId::Three, true) => {
            let s = exp_rate(0.6, rng);
            let t = s - s.ln() + exp_rate(1.0 / 4.0, rng) + noise.sample(rng).exp();
            (s, t)
        }
        (SettingId::Three, false) => {
            let s = exp_rate(2.0, rng);
            let t = s - s.ln() + exp_rate(1.0 / 2.0, rng) + noise.sample(rng).exp();
            (s, t)
        }
    }
}

/// Draws `n` subjects' potential outcomes. Subjects alternate between the
/// treated and control arm, so each arm gets `n / 2`.
pub fn draw_potential(
    setting: &SimSetting,
    n: usize,
    rng: &mut impl Rng,
) -> PotentialOutcomeSample {
    let cens = Exp::new(setting.censoring_rate).unwrap();
    let mut out = PotentialOutcomeSample::default();
    for v in out
        .s
        .iter_mut()
        .chain(out.t.iter_mut())
        .chain(out.c.iter_mut())
    {
        v.reserve(n);
    }
    out.arm.reserve(n);
    for i in 0..n {
        let (s1, from_s1) = draw_pair(setting.id, true, rng);
        let (s0, from_s0) = draw_pair(setting.id, false, rng);
        let (t1, t0) = match setting.reading {
            GeneratorReading::Paired => (from_s1, from_s0),
            GeneratorReading::Verbatim => (from_s0, from_s1),
        };
        out.s[1].push(s1);
        out.s[0].push(s0);
        out.t[1].push(t1);
        out.t[0].push(t0);
        out.c[1].push(cens.sample(rng));
        out.c[0].push(cens.sample(rng));
        out.arm.push(if i % 2 == 0 {
            Arm::Treated
        } else {
            Arm::Control
        });
    }
    out
}

/// Observed data: `X = min(T, C)`, `delta = I(T <= C)`, and the surrogate
/// time recorded only when `S <= X`.
pub fn observe(sample: &PotentialOutcomeSample) -> Result<TrialDataset> {
    let recs = (0..sample.len())
        .map(|i| {
            let arm = sample.arm[i];
            let a = arm.index();
            let (s, t, c) = (sample.s[a][i], sample.t[a][i], sample.c[a][i]);
            let x = t.min(c);
            SubjectRecord::new(format!("{}", i + 1), arm, x, t <= c, (s <= x).then_some(s))
        })
        .collect();
    TrialDataset::new(recs)
}

pub fn generate_setting(
    setting: &SimSetting,
    n: usize,
    seed: u64,
) -> Result<(PotentialOutcomeSample, TrialDataset)> {
    setting.validate()?;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "sample size must be even and at least 2, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = draw_potential(setting, n, &mut rng);
    let data = observe(&sample)?;
    Ok((sample, data))
}

/// Censored fraction overall and per arm, indexed by [`Arm::index`].
pub fn censoring_fractions(data: &TrialDataset) -> (f64, [f64; 2]) {
    let mut cens = [0usize; 2];
    for r in data.records() {
        if !r.delta {
            cens[r.arm.index()] += 1;
        }
    }
    let per = [
        cens[0] as f64 / data.count(Arm::Control) as f64,
        cens[1] as f64 / data.count(Arm::Treated) as f64,
    ];
    ((cens[0] + cens[1]) as f64 / data.len() as f64, per)
}
