//! Surrogate clean sEMG, the five contaminant families, and SNR-controlled
//! mixing.

mod contaminants;
pub mod dataset;

pub use contaminants::{
    gen_clean, gen_contaminant, gen_ecg, moa_from_recording, pli_frequency_grid, Activation,
    EcgTrain, Split,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{energy, SampleBuffer};

/// One of the five contaminant families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminantLabel {
    /// Baseline wander.
    Bw,
    /// Power-line interference.
    Pli,
    /// Electrocardiogram artifact.
    Ecg,
    /// Motion artifact.
    Moa,
    /// White Gaussian noise.
    Wgn,
}

impl ContaminantLabel {
    /// Canonical processing order.
    pub const ALL: [ContaminantLabel; 5] = [Self::Bw, Self::Pli, Self::Ecg, Self::Moa, Self::Wgn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bw => "bw",
            Self::Pli => "pli",
            Self::Ecg => "ecg",
            Self::Moa => "moa",
            Self::Wgn => "wgn",
        }
    }
}

impl fmt::Display for ContaminantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContaminantLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bw" => Ok(Self::Bw),
            "pli" => Ok(Self::Pli),
            "ecg" => Ok(Self::Ecg),
            "moa" => Ok(Self::Moa),
            "wgn" => Ok(Self::Wgn),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Sorts and validates a contaminant set: 1, 3 or 5 distinct labels.
pub fn canonical_set(labels: &[ContaminantLabel]) -> Result<Vec<ContaminantLabel>> {
    let mut v = labels.to_vec();
    v.sort();
    v.dedup();
    if v.len() != labels.len() {
        return Err(Error::BadLabelSet(format!("duplicate labels in {labels:?}")));
    }
    if ![1, 3, 5].contains(&v.len()) {
        return Err(Error::BadLabelSet(format!(
            "expected 1, 3 or 5 contaminant types, got {}",
            v.len()
        )));
    }
    Ok(v)
}

/// Parses `"bw+pli+ecg"` (also accepts `,` as separator).
pub fn parse_set(s: &str) -> Result<Vec<ContaminantLabel>> {
    let labels = s
        .split(['+', ','])
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    canonical_set(&labels)
}

pub fn set_name(labels: &[ContaminantLabel]) -> String {
    labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("+")
}

/// Target SNR, contaminant set and seed of one mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    pub components: Vec<ContaminantLabel>,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(snr_db: f64, components: &[ContaminantLabel], seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::BadLabelSet(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Self {
            snr_db,
            components: canonical_set(components)?,
            seed,
        })
    }
}

/// A clean segment with its contaminant and the noisy sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedSegment {
    pub clean: SampleBuffer,
    /// Sum of the scaled components.
    pub noise: SampleBuffer,
    /// `clean + noise`, sample by sample.
    pub noisy: SampleBuffer,
    pub spec: MixSpec,
    /// Scaled components in canonical label order, each of equal energy.
    pub components: Vec<(ContaminantLabel, SampleBuffer)>,
}

impl ContaminatedSegment {
    pub fn labels(&self) -> &[ContaminantLabel] {
        &self.spec.components
    }

    /// `10 log10(sum clean^2 / sum noise^2)`.
    pub fn measured_snr(&self) -> f64 {
        10.0 * (energy(self.clean.samples()) / energy(self.noise.samples())).log10()
    }
}

/// Generates the contaminants for `labels` and mixes them into `clean`.
pub fn mix(
    clean: &SampleBuffer,
    labels: &[ContaminantLabel],
    snr_db: f64,
    seed: u64,
    split: Split,
) -> Result<ContaminatedSegment> {
    let spec = MixSpec::new(snr_db, labels, seed)?;
    let components = spec
        .components
        .iter()
        .map(|&label| {
            let s = crate::seed::derive(seed, label.as_str(), 0);
            gen_contaminant(label, s, clean.fs(), clean.duration(), split)
                .map(|c| (label, fit_length(c, clean.len())))
        })
        .collect::<Result<Vec<_>>>()?;
    mix_components(clean, components, spec)
}

fn fit_length(buf: SampleBuffer, len: usize) -> SampleBuffer {
    if buf.len() == len {
        return buf;
    }
    let mut v = buf.samples().to_vec();
    v.resize(len, 0.0);
    buf.derived(v)
}

/// Mixes caller-supplied contaminant recordings into `clean`.
///
/// Each component is first scaled to the same energy; the sum is then scaled
/// once more so that the SNR of `clean` against the total noise equals
/// `spec.snr_db`. The second scaling keeps the components equal in energy.
pub fn mix_components(
    clean: &SampleBuffer,
    components: Vec<(ContaminantLabel, SampleBuffer)>,
    spec: MixSpec,
) -> Result<ContaminatedSegment> {
    let p_signal = energy(clean.samples());
    if p_signal == 0.0 {
        return Err(Error::AllZero);
    }
    let mut labels: Vec<_> = components.iter().map(|(l, _)| *l).collect();
    labels.sort();
    if labels != spec.components {
        return Err(Error::BadLabelSet(format!(
            "components {labels:?} do not match spec {:?}",
            spec.components
        )));
    }
    let p_noise = p_signal * 10f64.powf(-spec.snr_db / 10.0);
    let per_component = p_noise / components.len() as f64;

    let mut scaled = Vec::with_capacity(components.len());
    for (label, c) in components {
        if c.len() != clean.len() {
            return Err(Error::LengthMismatch {
                left: clean.len(),
                right: c.len(),
            });
        }
        let e = energy(c.samples());
        if e == 0.0 {
            return Err(Error::ZeroNoise(label.to_string()));
        }
        let g = (per_component / e).sqrt();
        scaled.push((label, c.samples().iter().map(|v| v * g).collect::<Vec<f64>>()));
    }
    scaled.sort_by_key(|(l, _)| *l);

    let mut noise = vec![0.0; clean.len()];
    for (_, c) in &scaled {
        noise.iter_mut().zip(c).for_each(|(n, v)| *n += v);
    }
    let e_total = energy(&noise);
    if e_total == 0.0 {
        return Err(Error::ZeroNoise(set_name(&spec.components)));
    }
    let g = (p_noise / e_total).sqrt();
    noise.iter_mut().for_each(|v| *v *= g);
    let components = scaled
        .into_iter()
        .map(|(l, c)| (l, clean.derived(c.into_iter().map(|v| v * g).collect())))
        .collect();
    let noisy = clean
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    Ok(ContaminatedSegment {
        noisy: clean.derived(noisy),
        noise: clean.derived(noise),
        clean: clean.clone(),
        spec,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::DEFAULT_FS;
    use proptest::prelude::*;

    fn unit_energy_clean() -> SampleBuffer {
        let v: Vec<f64> = (0..2000).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let e = energy(&v).sqrt();
        SampleBuffer::new(v.into_iter().map(|x| x / e).collect(), DEFAULT_FS).unwrap()
    }

    #[test]
    fn labels_parse_and_print() {
        for l in ContaminantLabel::ALL {
            assert_eq!(l.as_str().parse::<ContaminantLabel>().unwrap(), l);
        }
        assert!(matches!("emi".parse::<ContaminantLabel>(), Err(Error::UnknownLabel(_))));
        assert_eq!(
            parse_set("wgn+bw,pli").unwrap(),
            vec![ContaminantLabel::Bw, ContaminantLabel::Pli, ContaminantLabel::Wgn]
        );
        assert!(parse_set("bw+pli").is_err());
        assert!(parse_set("bw+bw+pli").is_err());
    }

    #[test]
    fn single_component_energy_follows_snr() {
        let clean = unit_energy_clean();
        for (snr, expect) in [(0.0, 1.0), (-20.0, 100.0)] {
            let seg = mix(&clean, &[ContaminantLabel::Wgn], snr, 5, Split::Test).unwrap();
            assert!((energy(seg.noise.samples()) - expect).abs() < 1e-9 * expect);
            assert!((seg.measured_snr() - snr).abs() < 0.01);
        }
    }

    #[test]
    fn three_components_share_energy() {
        let clean = unit_energy_clean();
        let set = [ContaminantLabel::Bw, ContaminantLabel::Ecg, ContaminantLabel::Moa];
        let seg = mix(&clean, &set, -6.0, 8, Split::Test).unwrap();
        let total = 10f64.powf(0.6);
        assert!((energy(seg.noise.samples()) - total).abs() < 1e-9 * total);
        let energies: Vec<f64> = seg.components.iter().map(|(_, c)| energy(c.samples())).collect();
        for e in &energies {
            assert!((e - energies[0]).abs() <= 1e-9 * energies[0]);
            // Correlated components move each energy away from total/3.
            assert!((e / (total / 3.0) - 1.0).abs() < 0.5, "{e}");
        }
    }

    #[test]
    fn zero_component_is_rejected() {
        let clean = unit_energy_clean();
        let spec = MixSpec::new(0.0, &[ContaminantLabel::Pli], 0).unwrap();
        let zero = SampleBuffer::zeros(2000, DEFAULT_FS).unwrap();
        assert!(matches!(
            mix_components(&clean, vec![(ContaminantLabel::Pli, zero)], spec),
            Err(Error::ZeroNoise(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mixing_contract(seed in 0u64..1000, snr in -20.0f64..10.0, kind in 0usize..3) {
            let clean = gen_clean(seed, DEFAULT_FS, 2.0, &Activation::default()).unwrap();
            let set = dataset::combinations([1, 3, 5][kind]);
            let labels = &set[seed as usize % set.len()];
            let a = mix(&clean, labels, snr, seed, Split::Train).unwrap();
            let b = mix(&clean, labels, snr, seed, Split::Train).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!((a.measured_snr() - snr).abs() < 0.01);
            for i in 0..clean.len() {
                prop_assert_eq!(a.noisy.samples()[i], a.clean.samples()[i] + a.noise.samples()[i]);
            }
            let e0 = energy(a.components[0].1.samples());
            for (_, c) in &a.components {
                prop_assert!((energy(c.samples()) - e0).abs() <= 1e-9 * e0);
            }
        }
    }
}
