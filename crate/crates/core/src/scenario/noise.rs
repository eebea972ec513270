use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, NOISE_STREAM};
use crate::error::{Error, Result};
use crate::measurement::{Channel, ChannelClass, MeasurementLayout};
use crate::power::PmuChannel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Bias, if any, comes from [`NoiseSpec::bias`].
    #[serde(alias = "gaussian-biased")]
    Gaussian,
    Laplace,
    Cauchy,
}

impl Distribution {
    /// One zero-centred draw with the given scale parameter.
    pub fn sample(self, rng: &mut impl Rng, scale: f64) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        match self {
            Distribution::Gaussian => scale * rng.sample::<f64, _>(rand_distr::StandardNormal),
            Distribution::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Distribution::Cauchy => {
                // open interval keeps tan finite
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                scale * (std::f64::consts::PI * (u - 0.5)).tan()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassNoise {
    pub distribution: Distribution,
    /// Relative to the channel's nominal magnitude.
    pub scale: f64,
}

impl ClassNoise {
    pub fn gaussian(scale: f64) -> Self {
        ClassNoise {
            distribution: Distribution::Gaussian,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub voltage: ClassNoise,
    pub current: ClassNoise,
    pub pressure: ClassNoise,
    pub flow: ClassNoise,
    /// Constant offset per channel name, in channel units.
    pub bias: BTreeMap<String, f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            voltage: ClassNoise::gaussian(0.02),
            current: ClassNoise::gaussian(0.02),
            pressure: ClassNoise::gaussian(0.01),
            flow: ClassNoise::gaussian(0.02),
            bias: BTreeMap::new(),
        }
    }
}

impl NoiseSpec {
    pub fn class(&self, class: ChannelClass) -> ClassNoise {
        match class {
            ChannelClass::Voltage => self.voltage,
            ChannelClass::Current => self.current,
            ChannelClass::Pressure => self.pressure,
            ChannelClass::Flow => self.flow,
        }
    }

    /// Every channel noiseless and unbiased.
    pub fn zero() -> Self {
        NoiseSpec {
            voltage: ClassNoise::gaussian(0.0),
            current: ClassNoise::gaussian(0.0),
            pressure: ClassNoise::gaussian(0.0),
            flow: ClassNoise::gaussian(0.0),
            bias: BTreeMap::new(),
        }
    }
}


const CURRENT_FLOOR: f64 = 0.1;
const FLOW_FLOOR: f64 = 1.0;

/// Fixed magnitude each relative noise scale refers to: 1 p.u. for
/// voltages, the initial phasor magnitude for currents, the initial value
/// for pressures and loads (with floors for near-zero quantities).
pub fn nominal_magnitudes(layout: &MeasurementLayout, z0: &DVector<f64>) -> DVector<f64> {
    let value: BTreeMap<String, f64> = layout.names().into_iter().zip(z0.iter().copied()).collect();
    let phasor = |re: String, im: String| {
        let (a, b) = (value.get(&re).copied().unwrap_or(0.0), value.get(&im).copied().unwrap_or(0.0));
        a.hypot(b).max(CURRENT_FLOOR)
    };
    DVector::from_iterator(
        layout.len(),
        layout.channels.iter().zip(z0.iter()).map(|(c, &z)| match c {
            Channel::Pmu(p) => match *p {
                PmuChannel::VoltageReal(_) | PmuChannel::VoltageImag(_) => 1.0,
                PmuChannel::BranchReal { from, to } | PmuChannel::BranchImag { from, to } => {
                    phasor(format!("ibr_{from}_{to}"), format!("ibi_{from}_{to}"))
                }
                PmuChannel::InjectionReal(b) | PmuChannel::InjectionImag(b) => {
                    phasor(format!("inr_{b}"), format!("ini_{b}"))
                }
            },
            Channel::Pressure(_) => z.abs(),
            Channel::Load(_) => z.abs().max(FLOW_FLOOR),
        }),
    )
}

/// Scale parameter per channel: class scale times nominal magnitude.
pub fn channel_sigmas(layout: &MeasurementLayout, noise: &NoiseSpec, z0: &DVector<f64>) -> DVector<f64> {
    let nominal = nominal_magnitudes(layout, z0);
    DVector::from_iterator(
        layout.len(),
        layout
            .channels
            .iter()
            .zip(nominal.iter())
            .map(|(c, n)| noise.class(c.class()).scale * n),
    )
}

/// `z_t = H x_t + error`, errors drawn step by step, channel by channel.
pub fn synthesize_measurements(
    layout: &MeasurementLayout,
    truth: &[DVector<f64>],
    noise: &NoiseSpec,
    sigma: &DVector<f64>,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let mut bias = DVector::zeros(layout.len());
    for (name, b) in &noise.bias {
        let i = layout
            .index_of(name)
            .ok_or_else(|| Error::InvalidArgument(format!("bias on unknown channel '{name}'")))?;
        bias[i] = *b;
    }
    let dists: Vec<Distribution> = layout
        .channels
        .iter()
        .map(|c| noise.class(c.class()).distribution)
        .collect();
    let mut rng = rng_for(seed, NOISE_STREAM);
    Ok(truth
        .iter()
        .map(|x| {
            let mut z = &layout.h * x + &bias;
            for (i, d) in dists.iter().enumerate() {
                z[i] += d.sample(&mut rng, sigma[i]);
            }
            z
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadDatum {
    pub channel: String,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Treat `magnitude` as channel units instead of multiples of σ.
    #[serde(default)]
    pub absolute: bool,
}

fn default_magnitude() -> f64 {
    20.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BadDataSpec {
    pub entries: Vec<BadDatum>,
}

/// Adds spikes to the listed cells; all other cells are copied unchanged.
pub fn inject_bad_data(
    z: &[DVector<f64>],
    layout: &MeasurementLayout,
    sigma: &DVector<f64>,
    spec: &BadDataSpec,
) -> Result<Vec<DVector<f64>>> {
    let mut out = z.to_vec();
    for d in &spec.entries {
        let i = layout
            .index_of(&d.channel)
            .ok_or_else(|| Error::InvalidArgument(format!("bad data on unknown channel '{}'", d.channel)))?;
        if d.start > d.end || d.end >= z.len() {
            return Err(Error::InvalidArgument(format!(
                "bad data on '{}' spans steps {}..={} outside 0..{}",
                d.channel,
                d.start,
                d.end,
                z.len()
            )));
        }
        let spike = if d.absolute { d.magnitude } else { d.magnitude * sigma[i] };
        for zt in &mut out[d.start..=d.end] {
            zt[i] += spike;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn layout() -> MeasurementLayout {
        MeasurementLayout {
            channels: vec![
                Channel::Pmu(PmuChannel::VoltageReal(1)),
                Channel::Pressure(2),
                Channel::Load(2),
            ],
            h: DMatrix::identity(3, 3),
            n_power_states: 1,
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let l = layout();
        let truth = vec![DVector::from_vec(vec![1.0, 40.0, 5.0]); 4];
        let noise = NoiseSpec::zero();
        let sigma = channel_sigmas(&l, &noise, &truth[0]);
        let z = synthesize_measurements(&l, &truth, &noise, &sigma, 3).unwrap();
        assert_eq!(z, truth);
    }

    #[test]
    fn sigmas_follow_nominal() {
        let l = layout();
        let z0 = DVector::from_vec(vec![1.01, 40.0, 0.2]);
        let s = channel_sigmas(&l, &NoiseSpec::default(), &z0);
        assert_eq!(s.as_slice(), &[0.02, 0.4, 0.02]);
    }

    #[test]
    fn bias_shifts_mean() {
        let l = layout();
        let truth = vec![DVector::from_vec(vec![1.0, 40.0, 5.0]); 144];
        let mut noise = NoiseSpec::default();
        noise.bias.insert("p_2".into(), 0.5);
        let sigma = channel_sigmas(&l, &noise, &truth[0]);
        let z = synthesize_measurements(&l, &truth, &noise, &sigma, 11).unwrap();
        let mean = z.iter().map(|v| v[1]).sum::<f64>() / 144.0;
        assert!((mean - 40.5).abs() < 3.0 * sigma[1] / 12.0, "{mean}");
        assert!(synthesize_measurements(&l, &truth, &NoiseSpec { bias: [("nope".to_string(), 1.0)].into(), ..NoiseSpec::default() }, &sigma, 1).is_err());
    }

    #[test]
    fn laplace_median_and_spread() {
        let mut rng = rng_for(5, 0);
        let mut v: Vec<f64> = (0..20_000).map(|_| Distribution::Laplace.sample(&mut rng, 0.5)).collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        let mut dev: Vec<f64> = v.iter().map(|x| (x - median).abs()).collect();
        dev.sort_by(f64::total_cmp);
        // MAD of a Laplace(0, b) is b ln 2
        assert!(median.abs() < 0.02);
        assert!((dev[dev.len() / 2] - 0.5 * 2f64.ln()).abs() < 0.02);
    }

    #[test]
    fn cauchy_quartiles() {
        let mut rng = rng_for(6, 0);
        let mut v: Vec<f64> = (0..20_000).map(|_| Distribution::Cauchy.sample(&mut rng, 2.0)).collect();
        v.sort_by(f64::total_cmp);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!((v[15_000] - 2.0).abs() < 0.15 && (v[5_000] + 2.0).abs() < 0.15);
    }

    #[test]
    fn bad_data_is_local() {
        let l = layout();
        let z = vec![DVector::from_vec(vec![1.0, 40.0, 5.0]); 100];
        let sigma = DVector::from_vec(vec![0.02, 0.4, 0.1]);
        assert_eq!(inject_bad_data(&z, &l, &sigma, &BadDataSpec::default()).unwrap(), z);
        let spec = BadDataSpec {
            entries: vec![BadDatum {
                channel: "p_2".into(),
                start: 70,
                end: 70,
                magnitude: 20.0,
                absolute: false,
            }],
        };
        let out = inject_bad_data(&z, &l, &sigma, &spec).unwrap();
        let mut diffs = 0;
        for (a, b) in out.iter().zip(&z) {
            for i in 0..3 {
                if a[i] != b[i] {
                    diffs += 1;
                    assert!((a[i] - b[i] - 8.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(diffs, 1);
        let late = BadDataSpec {
            entries: vec![BadDatum { start: 99, end: 100, ..spec.entries[0].clone() }],
        };
        assert!(inject_bad_data(&z, &l, &sigma, &late).is_err());
    }
}
