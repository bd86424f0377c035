use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::likelihood::{drift_track, SeriesData, SKEWT_DOF};
use super::{Params, Path};
use crate::data::RaceSeries;
use crate::distributions::{skewt_draw, HansenSkewTParams};
use crate::error::Result;

/// Forward-simulates latent pace and lap times on the lap structure of
/// `template` (compounds, stops and fuel). Zero noise scales are allowed.
pub fn simulate<R: Rng + ?Sized>(
    params: &Params<f64>,
    template: &RaceSeries,
    rng: &mut R,
) -> Result<(Path<f64>, Vec<f64>)> {
    params.validate_with(true)?;
    let data = SeriesData::<f64>::new(template);
    let drift = drift_track(params, &data);
    let n = data.len();
    let mut alpha = Vec::with_capacity(n);
    for t in 0..n {
        let mean = if data.fresh[t] {
            params.reset_level(data.compound[t])
        } else {
            alpha[t - 1] + drift[t - 1]
        };
        let z: f64 = StandardNormal.sample(rng);
        alpha.push(mean + params.sigma_eta * z);
    }
    let student = StudentT::new(SKEWT_DOF).expect("positive dof");
    let y = (0..n)
        .map(|t| {
            let loc = alpha[t] + params.gamma * data.fuel[t];
            match params.lambda {
                None => {
                    let z: f64 = StandardNormal.sample(rng);
                    loc + params.sigma_eps * z
                }
                Some(skewness) if params.sigma_eps > 0.0 => skewt_draw(
                    HansenSkewTParams {
                        location: loc,
                        scale: params.sigma_eps,
                        skewness,
                        dof: SKEWT_DOF,
                    },
                    &student,
                    rng,
                ),
                Some(_) => loc,
            }
        })
        .collect();
    let nu = matches!(params.kind(), super::ModelKind::TimeVarying).then_some(drift);
    Ok((Path { alpha, nu }, y))
}
