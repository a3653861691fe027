use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Vector;
use crate::error::{Error, Result};
use crate::intervals::IntervalVector;

/// Default spacing between disturbance knots, in seconds.
pub const DEFAULT_SEGMENT: f64 = 0.25;

/// Piecewise-linear interpolation between i.i.d. uniform samples of `W`.
///
/// Values stay in `W` (convex combinations of in-box knots) and the signal is
/// Lipschitz with constant at most `width(W) / segment` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal {
    segment: f64,
    knots: Vec<Vector>,
}

impl DisturbanceSignal {
    pub fn new(seed: u64, w: &IntervalVector, horizon: f64, segment: f64) -> Result<Self> {
        Self::from_stream(seed, 0, w, horizon, segment)
    }

    /// Signal drawn from stream `stream` of the generator seeded with `seed`,
    /// so that sample `i` of a batch is reproducible on its own.
    pub fn from_stream(
        seed: u64,
        stream: u64,
        w: &IntervalVector,
        horizon: f64,
        segment: f64,
    ) -> Result<Self> {
        if !(segment > 0.0) || !segment.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "segment must be > 0, got {segment}"
            )));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be >= 0, got {horizon}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let count = (horizon / segment).ceil() as usize + 2;
        let knots = (0..count)
            .map(|_| w.sample(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { segment, knots })
    }

    /// A constant signal, `w(t) = value`.
    pub fn constant(value: Vector) -> Self {
        Self {
            segment: 1.0,
            knots: vec![value.clone(), value],
        }
    }

    pub fn segment(&self) -> f64 {
        self.segment
    }

    pub fn eval(&self, t: f64) -> Vector {
        let last = self.knots.len() - 1;
        let s = (t / self.segment).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last - 1);
        let frac = s - k as f64;
        let (a, b) = (&self.knots[k], &self.knots[k + 1]);
        // difference form is exact for equal knots; the clamp keeps rounding inside the segment
        Vector::from_fn(a.len(), |i, _| {
            (a[i] + (b[i] - a[i]) * frac).clamp(a[i].min(b[i]), a[i].max(b[i]))
        })
    }
}
