//! Synthesis of the received OFDM grid `Y` (antennas × subcarriers).

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scenario::{channel_gain, phase, ModelKind, Scatterer, Scenario};

/// Received samples and the pilots that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationGrid {
    /// `(N+1) × (K+1)`, row `n + N/2`, column `k + K/2`.
    pub samples: Array2<Complex64>,
    /// Diagonal of the pilot matrix S.
    pub pilots: Vec<Complex64>,
    pub seed: u64,
}

impl ObservationGrid {
    pub fn num_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.samples.ncols()
    }

    /// Little-endian interleaved f64 (re, im), row-major antennas × subcarriers.
    pub fn write_samples<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.samples.len() * 16);
        for v in self.samples.iter() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Inverse of [`write_samples`](Self::write_samples).
    pub fn read_samples<R: Read>(
        mut input: R,
        rows: usize,
        cols: usize,
    ) -> Result<Array2<Complex64>> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 16 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes", rows * cols * 16),
                got: format!("{} bytes", bytes.len()),
            });
        }
        let vals: Vec<Complex64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Array2::from_shape_vec((rows, cols), vals).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Constant-modulus QPSK pilots with |s[k]|² = P_t/W.
pub fn qpsk_pilots<R: Rng>(s: &Scenario, rng: &mut R) -> Vec<Complex64> {
    let amp = (s.pilot_energy() / 2.0).sqrt();
    (0..s.num_subcarriers)
        .map(|_| {
            let re = if rng.random::<bool>() { amp } else { -amp };
            let im = if rng.random::<bool>() { amp } else { -amp };
            Complex64::new(re, im)
        })
        .collect()
}

/// Bistatic radar-equation gain of the path UE → scatterer → antenna `n`.
/// The returned phase is the full carrier phase of the two-hop path.
pub fn nlos_gain(sc: &Scatterer, n: i64, s: &Scenario) -> Result<Complex64> {
    s.check_antenna(n)?;
    let (hop1, hop2) = nlos_hops(sc, n, s)?;
    let lambda = s.wavelength();
    let mag = lambda * sc.rcs.max(0.0).sqrt() / ((4.0 * PI).powf(1.5) * hop1 * hop2);
    Ok(Complex64::from_polar(
        mag,
        -2.0 * PI * (hop1 + hop2) / lambda,
    ))
}

fn nlos_hops(sc: &Scatterer, n: i64, s: &Scenario) -> Result<(f64, f64)> {
    let hop1 = (sc.position - s.ue_position).norm();
    let hop2 = (sc.position - s.antenna_position(n)).norm();
    if !(hop1 > 1e-9) || !(hop2 > 1e-9) {
        return Err(Error::SingularGeometry(format!(
            "scatterer at {:?} coincides with the UE or antenna {n}",
            sc.position.as_slice()
        )));
    }
    Ok((hop1, hop2))
}

/// Noiseless received grid for the given pilots.
pub fn noiseless_grid(
    s: &Scenario,
    model: ModelKind,
    pilots: &[Complex64],
) -> Result<Array2<Complex64>> {
    s.validate()?;
    if pilots.len() != s.num_subcarriers {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pilots", s.num_subcarriers),
            got: pilots.len().to_string(),
        });
    }
    let (hn, hk) = (s.half_antennas(), s.half_subcarriers());
    let lambda = s.wavelength();
    let rf = s.freq_ratio();
    let alpha0 = channel_gain(0, s)?;
    let mut y = Array2::<Complex64>::zeros((s.num_antennas, s.num_subcarriers));

    for n in s.antenna_indices() {
        let alpha = if model == ModelKind::General {
            channel_gain(n, s)?
        } else {
            alpha0
        };
        let paths: Vec<(Complex64, f64)> = s
            .scatterers
            .iter()
            .map(|sc| {
                let (h1, h2) = nlos_hops(sc, n, s)?;
                Ok((nlos_gain(sc, n, s)?, h1 + h2))
            })
            .collect::<Result<_>>()?;
        let row = (n + hn) as usize;
        for k in s.subcarrier_indices() {
            let col = (k + hk) as usize;
            let xi = phase(model, n, k, s)?;
            let mut v = alpha * Complex64::from_polar(1.0, -2.0 * PI * xi / lambda);
            for &(g, len) in &paths {
                // carrier phase already sits in the gain, only the delay term remains
                let xi_l = k as f64 * (len - s.clock_bias) * rf;
                v += g * Complex64::from_polar(1.0, -2.0 * PI * xi_l / lambda);
            }
            y[(row, col)] = v * pilots[col];
        }
    }
    Ok(y)
}

/// y_n[k] = LOS + NLOS + complex Gaussian noise with variance N₀/2 per real
/// dimension. Pilots are drawn first from the seeded generator, then noise.
pub fn synthesize(s: &Scenario, model: ModelKind, seed: u64) -> Result<ObservationGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pilots = qpsk_pilots(s, &mut rng);
    let mut samples = noiseless_grid(s, model, &pilots)?;
    add_noise(&mut samples, s.noise_psd, &mut rng)?;
    Ok(ObservationGrid {
        samples,
        pilots,
        seed,
    })
}

pub fn add_noise<R: Rng>(y: &mut Array2<Complex64>, noise_psd: f64, rng: &mut R) -> Result<()> {
    if noise_psd == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, (noise_psd / 2.0).sqrt())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for v in y.iter_mut() {
        *v += Complex64::new(normal.sample(rng), normal.sample(rng));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet(mut s: Scenario) -> Scenario {
        s.noise_psd = 0.0;
        s
    }

    #[test]
    fn deterministic_per_seed() {
        let mut s = Scenario::nominal(0.5, 2.0);
        s.scatterers.push(Scatterer::new(-3.0, 4.0, 10.0));
        let a = synthesize(&s, ModelKind::General, 7).unwrap();
        let b = synthesize(&s, ModelKind::General, 7).unwrap();
        let c = synthesize(&s, ModelKind::General, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn qpsk_constellation() {
        let s = Scenario::nominal(0.0, 2.0);
        let g = synthesize(&s, ModelKind::General, 1).unwrap();
        let amp = (s.pilot_energy() / 2.0).sqrt();
        assert_relative_eq!(s.pilot_energy(), 10.0, max_relative = 1e-12);
        for p in &g.pilots {
            assert_eq!(p.re.abs(), amp);
            assert_eq!(p.im.abs(), amp);
        }
    }

    #[test]
    fn standard_model_is_rank_one_steering_product() {
        let s = quiet(Scenario::nominal_polar(30.0, 1.0));
        let g = synthesize(&s, ModelKind::StandardFarField, 3).unwrap();
        let alpha0 = channel_gain(0, &s).unwrap();
        let (cos, delta0) = (s.bearing().cos(), s.distance() - s.clock_bias);
        let beta_n = cos * s.spacing / s.wavelength() * s.num_antennas as f64;
        let beta_k = delta0 * s.freq_ratio() / s.wavelength() * s.num_subcarriers as f64;
        for n in s.antenna_indices() {
            for k in s.subcarrier_indices() {
                let an = Complex64::from_polar(
                    1.0,
                    2.0 * PI * beta_n * n as f64 / s.num_antennas as f64,
                );
                let ak = Complex64::from_polar(
                    1.0,
                    2.0 * PI * beta_k * k as f64 / s.num_subcarriers as f64,
                );
                let col = (k + 128) as usize;
                let expect = alpha0 * an * ak.conj() * g.pilots[col];
                let got = g.samples[((n + 64) as usize, col)];
                assert!((got - expect).norm() < 1e-9 * expect.norm());
            }
        }
    }

    #[test]
    fn reference_sample_and_energy() {
        let s = quiet(Scenario::nominal(0.4, 1.7));
        let g = synthesize(&s, ModelKind::General, 11).unwrap();
        let alpha0 = channel_gain(0, &s).unwrap();
        assert_eq!(g.samples[(64, 128)], alpha0 * g.pilots[128]);
        for n in s.antenna_indices() {
            let mag = channel_gain(n, &s).unwrap().norm();
            for (col, p) in g.pilots.iter().enumerate() {
                let got = g.samples[((n + 64) as usize, col)].norm();
                assert_relative_eq!(got, mag * p.norm(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn snr_at_two_meters() {
        let s = Scenario::nominal(0.0, 2.0);
        let snr = channel_gain(0, &s).unwrap().norm_sqr() * s.pilot_energy() / s.noise_psd;
        assert!((snr - 1.8e3).abs() < 0.05e3, "{snr}");
        assert!((10.0 * snr.log10() - 32.6).abs() < 0.1);
    }

    #[test]
    fn noise_variance_per_dimension() {
        let mut y = Array2::<Complex64>::zeros((100, 1000));
        let n0 = 4.0049e-9;
        add_noise(&mut y, n0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let m = y.len() as f64;
        let var_re = y.iter().map(|v| v.re * v.re).sum::<f64>() / m;
        let var_im = y.iter().map(|v| v.im * v.im).sum::<f64>() / m;
        assert!((var_re / (n0 / 2.0) - 1.0).abs() < 0.02);
        assert!((var_im / (n0 / 2.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn nlos_gain_examples() {
        let s = Scenario::nominal(0.0, 2.0);
        let zero = Scatterer::new(3.0, 1.0, 0.0);
        assert_eq!(nlos_gain(&zero, 0, &s).unwrap().norm(), 0.0);

        // 2 m from UE at [0, 2] and 2 m from the array center
        let h = 2.0f64;
        let py = 1.0;
        let px = (h * h - py * py).sqrt();
        let sc = Scatterer::new(px, py, 10.0);
        let g = nlos_gain(&sc, 0, &s).unwrap().norm();
        assert_relative_eq!(g, 1.90e-4, max_relative = 3e-3);
        assert!(g < channel_gain(0, &s).unwrap().norm());

        let mut far = s.clone();
        far.ue_position *= 2.0;
        let sc2 = Scatterer::new(2.0 * px, 2.0 * py, 10.0);
        let g2 = nlos_gain(&sc2, 0, &far).unwrap().norm();
        assert_relative_eq!(g2, g / 4.0, max_relative = 1e-12);

        let bad = Scatterer::new(0.0, 2.0, 10.0);
        assert!(nlos_gain(&bad, 0, &s).is_err());
    }

    #[test]
    fn pilot_length_mismatch() {
        let s = Scenario::nominal(0.0, 2.0);
        assert!(matches!(
            noiseless_grid(&s, ModelKind::General, &[Complex64::new(1.0, 0.0); 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn binary_dump_round_trip() {
        let mut s = Scenario::nominal(0.0, 2.0);
        s.num_antennas = 5;
        s.num_subcarriers = 7;
        let g = synthesize(&s, ModelKind::General, 2).unwrap();
        let mut buf = Vec::new();
        g.write_samples(&mut buf).unwrap();
        assert_eq!(buf.len(), 5 * 7 * 16);
        assert_eq!(&buf[..8], &g.samples[(0, 0)].re.to_le_bytes());
        assert_eq!(&buf[16..24], &g.samples[(0, 1)].re.to_le_bytes());
        let back = ObservationGrid::read_samples(&buf[..], 5, 7).unwrap();
        assert_eq!(back, g.samples);
        assert!(ObservationGrid::read_samples(&buf[..], 5, 6).is_err());
    }
}
