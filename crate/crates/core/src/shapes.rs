//! Built-in initial-data shapes and their sampling onto the lattice.

use crate::error::{Error, Result};
use crate::lattice::{l1_norm, L1Ball, LatticeField};

/// Initial-data shape for one of the two data levels.
///
/// Shapes are sampled at the physical points `x_i = h*i` and then scaled by
/// the run's amplitude multiplier.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialShape {
    Zero,
    /// `amplitude` on every site of the L1 ball of the given radius.
    ConstBall { amplitude: f64, radius: u64 },
    /// `amplitude` at the origin only.
    Spike { amplitude: f64 },
    /// Gaussian bump `amplitude * exp(-|x_i|^2 / (2 sigma^2))` truncated to
    /// the L1 ball of the given radius, with `sigma = h * max(radius,1) / 3`
    /// so the cut edge sits near three standard deviations.
    Gaussian { amplitude: f64, radius: u64 },
    /// A pre-sampled field (typically loaded from a snapshot file).
    Field(LatticeField),
}

impl InitialShape {
    /// Max L1 radius the shape can touch.
    pub fn nominal_radius(&self) -> u64 {
        match self {
            InitialShape::Zero => 0,
            InitialShape::ConstBall { radius, .. } => *radius,
            InitialShape::Spike { .. } => 0,
            InitialShape::Gaussian { radius, .. } => *radius,
            InitialShape::Field(f) => crate::lattice::support_radius(f).unwrap_or(0),
        }
    }

    /// Samples the shape at `x_i = h*i`, scaled by `scale`.
    pub fn sample(&self, dim: usize, h: f64, scale: f64) -> Result<LatticeField> {
        let rad = self.nominal_radius();
        let mut out = LatticeField::centered(dim, rad + 1)?;
        match self {
            InitialShape::Zero => {}
            InitialShape::ConstBall { amplitude, radius } => {
                let v = scale * amplitude;
                L1Ball::new(dim, *radius)?.for_each_site(|s| out.set(s, v));
            }
            InitialShape::Spike { amplitude } => {
                out.set(&vec![0i64; dim], scale * amplitude);
            }
            InitialShape::Gaussian { amplitude, radius } => {
                let sigma = h * (*radius).max(1) as f64 / 3.0;
                let two_s2 = 2.0 * sigma * sigma;
                L1Ball::new(dim, *radius)?.for_each_site(|s| {
                    let r2: f64 = s.iter().map(|&c| (h * c as f64) * (h * c as f64)).sum();
                    out.set(s, scale * amplitude * (-r2 / two_s2).exp());
                });
            }
            InitialShape::Field(f) => {
                if f.dim() != dim {
                    return Err(Error::InvalidParam {
                        name: "shape.file",
                        reason: format!("snapshot is {}-dimensional, run is {}-dimensional", f.dim(), dim),
                    });
                }
                for (site, v) in f.iter_nonzero() {
                    out.set(&site, scale * v);
                }
            }
        }
        Ok(out)
    }

    /// First (lexicographic) nonzero site outside the radius-`r` ball, if any.
    pub fn support_violation(field: &LatticeField, r: u64) -> Option<Vec<i64>> {
        field
            .iter_nonzero()
            .find(|(site, _)| l1_norm(site) > r)
            .map(|(site, _)| site)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::support_radius;

    #[test]
    fn const_ball_counts_sites() {
        let f = InitialShape::ConstBall { amplitude: 1.0, radius: 1 }
            .sample(2, 0.5, 1.0)
            .unwrap();
        assert_eq!(f.iter_nonzero().count(), 5);
        assert_eq!(support_radius(&f), Some(1));
    }

    #[test]
    fn spike_is_single_site() {
        let f = InitialShape::Spike { amplitude: -2.5 }.sample(3, 0.1, 2.0).unwrap();
        assert_eq!(f.iter_nonzero().count(), 1);
        assert_eq!(f.get(&[0, 0, 0]), -5.0);
    }

    #[test]
    fn gaussian_truncated_and_peaked_at_origin() {
        let f = InitialShape::Gaussian { amplitude: 1.0, radius: 3 }
            .sample(1, 0.5, 1.0)
            .unwrap();
        assert_eq!(support_radius(&f), Some(3));
        assert_eq!(f.get(&[0]), 1.0);
        assert!(f.get(&[1]) < 1.0 && f.get(&[1]) > 0.0);
        assert!(f.get(&[3]) < f.get(&[2]));
        assert_eq!(f.get(&[4]), 0.0);
    }

    #[test]
    fn violation_detects_first_lex_site() {
        let mut raw = LatticeField::centered(1, 4).unwrap();
        raw.set(&[-3], 1.0);
        raw.set(&[3], 1.0);
        let f = InitialShape::Field(raw).sample(1, 1.0, 1.0).unwrap();
        assert_eq!(InitialShape::support_violation(&f, 2), Some(vec![-3]));
        assert_eq!(InitialShape::support_violation(&f, 3), None);
    }
}
