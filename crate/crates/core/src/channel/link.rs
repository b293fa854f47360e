use num_complex::Complex64;

use super::fading::ChannelRealization;
use crate::env::schedule::{Link, SchedulingMatrix};
use crate::error::{Error, Result};

/// Noise power in watts over `bandwidth_hz` for a density in dBm/Hz.
pub fn noise_power(density_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(density_dbm_hz) * bandwidth_hz
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Linear SINR of an active link. Interference comes from every other active
/// transmitter `i` on the same band through its gain `h[i][rx][band]`.
pub fn sinr(
    realization: &ChannelRealization,
    schedule: &SchedulingMatrix,
    link: Link,
    p_t: f64,
    sigma2: f64,
) -> Result<f64> {
    if !schedule.is_active(link) {
        return Err(Error::Usage(format!("SINR requested for inactive link {link}")));
    }
    let signal = p_t * realization.gain(link.tx, link.rx, link.band).norm_sqr();
    let interference: f64 = schedule
        .links()
        .into_iter()
        .filter(|l| l.band == link.band && *l != link)
        .map(|l| p_t * realization.gain(l.tx, link.rx, link.band).norm_sqr())
        .sum();
    Ok(signal / (sigma2 + interference))
}

/// Superposed received samples `y[k][c] = Σ_r b h s + n`.
///
/// `symbols` follows the canonical order of `schedule.links()`; `noise` is
/// laid out `[user][band]`.
pub fn received_signal(
    realization: &ChannelRealization,
    schedule: &SchedulingMatrix,
    symbols: &[Complex64],
    noise: &[Complex64],
) -> Result<Vec<Complex64>> {
    let links = schedule.links();
    if symbols.len() != links.len() {
        return Err(Error::Usage(format!(
            "{} symbols for {} active links",
            symbols.len(),
            links.len()
        )));
    }
    let bands = schedule.bands();
    if noise.len() != schedule.users() * bands {
        return Err(Error::Usage("noise must have one sample per user and band".into()));
    }
    let mut y = noise.to_vec();
    for (l, s) in links.iter().zip(symbols) {
        y[l.rx * bands + l.band] += realization.gain(l.tx, l.rx, l.band) * s;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn l(tx: usize, rx: usize) -> Link {
        Link { tx, rx, band: 0 }
    }

    fn gains(users: usize, f: impl Fn(usize, usize) -> Complex64) -> ChannelRealization {
        let mut h = vec![c(0.0, 0.0); users * users];
        for r in 0..users {
            for k in 0..users {
                h[r * users + k] = f(r, k);
            }
        }
        ChannelRealization::from_gains(users, 1, h).unwrap()
    }

    #[test]
    fn interference_free_snr() {
        let real = gains(2, |_, _| c(0.6, 0.8));
        let b = SchedulingMatrix::from_links(2, 1, &[l(0, 1)]).unwrap();
        assert!((sinr(&real, &b, l(0, 1), 1.0, 0.1).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn equal_interferer_halves() {
        let real = gains(4, |_, _| c(1.0, 0.0));
        let b = SchedulingMatrix::from_links(4, 1, &[l(0, 1), l(2, 3)]).unwrap();
        assert!((sinr(&real, &b, l(0, 1), 1.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inactive_link_is_usage_error() {
        let real = gains(2, |_, _| c(1.0, 0.0));
        let b = SchedulingMatrix::empty(2, 1);
        assert!(matches!(sinr(&real, &b, l(0, 1), 1.0, 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn hand_summed_denominator() {
        // K=4 with two links on the band; interferer 2 reaches receiver 1 via h[2][1].
        let real = gains(4, |r, k| c(0.1 * (r + 1) as f64, 0.05 * (k * k) as f64));
        let b = SchedulingMatrix::from_links(4, 1, &[l(0, 1), l(2, 3)]).unwrap();
        let (p, s2) = (2.0, 0.3);
        let sig = p * (0.1f64.powi(2) + 0.05f64.powi(2));
        let int = p * (0.3f64.powi(2) + 0.05f64.powi(2));
        let got = sinr(&real, &b, l(0, 1), p, s2).unwrap();
        assert!((got - sig / (s2 + int)).abs() < 1e-12);
        let sig3 = p * (0.3f64.powi(2) + 0.45f64.powi(2));
        let int3 = p * (0.1f64.powi(2) + 0.45f64.powi(2));
        let got3 = sinr(&real, &b, l(2, 3), p, s2).unwrap();
        assert!((got3 - sig3 / (s2 + int3)).abs() < 1e-12);
    }

    #[test]
    fn received_superposition() {
        let real = gains(4, |r, k| c(r as f64 + 1.0, -(k as f64)));
        let one = SchedulingMatrix::from_links(4, 1, &[l(0, 1)]).unwrap();
        let zero = vec![c(0.0, 0.0); 4];
        let s = c(0.5, 0.5);
        let y = received_signal(&real, &one, &[s], &zero).unwrap();
        assert_eq!(y[1], real.gain(0, 1, 0) * s);

        let idle = SchedulingMatrix::empty(4, 1);
        let noise: Vec<Complex64> = (0..4).map(|i| c(i as f64, 1.0)).collect();
        assert_eq!(received_signal(&real, &idle, &[], &noise).unwrap(), noise);

        let two = SchedulingMatrix::from_links(4, 1, &[l(0, 1), l(3, 2)]).unwrap();
        let syms = [c(1.0, 0.0), c(0.0, -1.0)];
        let y = received_signal(&real, &two, &syms, &noise).unwrap();
        assert_eq!(y[1], noise[1] + c(1.0, -1.0) * syms[0]);
        assert_eq!(y[2], noise[2] + c(4.0, -2.0) * syms[1]);
        assert_eq!(y[0], noise[0]);
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(40.0) - 10.0).abs() < 1e-12);
        assert!((noise_power(-174.0, 1.0) - 10f64.powf(-20.4)).abs() < 1e-30);
    }
}
