//! The four running averages tracked during a run, against direct weighted sums, and the
//! closed form of the quadratic weight sum.

use localsgd::averaging::{sum_of_weights, AveragingScheme, RunningAverage};

fn main() -> localsgd::Result<()> {
    let stream: Vec<f64> = (0..10).map(|t| ((t * 7) % 5) as f64).collect();
    for scheme in AveragingScheme::TRACKED {
        let mut avg = RunningAverage::new(scheme, 1);
        for (t, x) in stream.iter().enumerate() {
            avg.update(&[*x], t)?;
        }
        let direct = match scheme.weight(0) {
            None => *stream.last().unwrap(),
            Some(_) => {
                let w: Vec<f64> = (0..stream.len()).map(|t| scheme.weight(t).unwrap()).collect();
                w.iter().zip(&stream).map(|(w, x)| w * x).sum::<f64>() / w.iter().sum::<f64>()
            }
        };
        println!(
            "{:<9} recursion {:.12}  direct {:.12}",
            scheme.name(),
            avg.value()[0],
            direct
        );
    }
    for (a, t) in [(1.0, 10), (65.0, 1000), (100.5, 10_000)] {
        let direct: f64 = (0..t).map(|s| (a + s as f64).powi(2)).sum();
        println!(
            "S_T(a={a}, T={t}) = {:.6e} (direct {:.6e})",
            sum_of_weights(a, t)?,
            direct
        );
    }
    Ok(())
}
