//! Network geometry on a wrap-around square.

use rand::Rng;

use crate::{Error, Result};

/// A point on the simulation square, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// AP and user positions. APs sit `ap_height` meters above the user plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub side: f64,
    pub ap_positions: Vec<Point2D>,
    pub ue_positions: Vec<Point2D>,
    pub ap_height: f64,
}

impl Topology {
    /// Builds a topology from explicit positions, validating the invariants.
    pub fn new(
        side: f64,
        ap_positions: Vec<Point2D>,
        ue_positions: Vec<Point2D>,
        ap_height: f64,
    ) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::config(format!("side must be positive, got {side}")));
        }
        if !(ap_height >= 0.0) {
            return Err(Error::config(format!(
                "AP height must be non-negative, got {ap_height}"
            )));
        }
        if ap_positions.is_empty() || ue_positions.is_empty() {
            return Err(Error::config("need at least one AP and one user"));
        }
        let inside = |p: &Point2D| (0.0..side).contains(&p.x) && (0.0..side).contains(&p.y);
        if !ap_positions.iter().chain(&ue_positions).all(inside) {
            return Err(Error::config("positions must lie inside [0, side)^2"));
        }
        Ok(Self {
            side,
            ap_positions,
            ue_positions,
            ap_height,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    /// 3-D distance between AP `l` and user `u`.
    pub fn ap_ue_distance(&self, l: usize, u: usize) -> f64 {
        distance_3d(self.ap_positions[l], self.ue_positions[u], self)
    }

    /// Horizontal wrap-around distance between AP `l` and user `u`.
    pub fn ap_ue_horizontal(&self, l: usize, u: usize) -> f64 {
        wrap_distance(self.ap_positions[l], self.ue_positions[u], self.side)
    }
}

/// Places `num_aps` APs and `num_ues` users i.i.d. uniformly on the square.
pub fn place_network<R: Rng + ?Sized>(
    num_aps: usize,
    num_ues: usize,
    side: f64,
    ap_height: f64,
    rng: &mut R,
) -> Result<Topology> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::config(format!("side must be positive, got {side}")));
    }
    if num_aps == 0 || num_ues == 0 {
        return Err(Error::config("need at least one AP and one user"));
    }
    let mut draw = |n: usize| -> Vec<Point2D> {
        (0..n)
            .map(|_| {
                let x = rng.random::<f64>() * side;
                let y = rng.random::<f64>() * side;
                // random::<f64>() < 1 but the product can round up to `side`
                Point2D::new(x.min(side.next_down()), y.min(side.next_down()))
            })
            .collect()
    };
    let ap_positions = draw(num_aps);
    let ue_positions = draw(num_ues);
    Topology::new(side, ap_positions, ue_positions, ap_height)
}

fn wrapped_delta(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs() % side;
    d.min(side - d)
}

/// Toroidal distance on a square of the given side.
pub fn wrap_distance(a: Point2D, b: Point2D, side: f64) -> f64 {
    wrapped_delta(a.x, b.x, side).hypot(wrapped_delta(a.y, b.y, side))
}

/// Distance from an elevated AP to a user on the ground plane.
pub fn distance_3d(ap: Point2D, ue: Point2D, topo: &Topology) -> f64 {
    wrap_distance(ap, ue, topo.side).hypot(topo.ap_height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_examples() {
        let o = Point2D::new(0.0, 0.0);
        assert!((wrap_distance(o, Point2D::new(990.0, 0.0), 1000.0) - 10.0).abs() < 1e-12);
        assert!((wrap_distance(o, Point2D::new(500.0, 500.0), 1000.0) - 707.1068).abs() < 1e-4);
        let a = Point2D::new(123.4, 876.5);
        assert_eq!(wrap_distance(a, a, 1000.0), 0.0);
    }

    #[test]
    fn distance_3d_examples() {
        let topo = Topology::new(
            1000.0,
            vec![Point2D::new(0.0, 0.0)],
            vec![Point2D::new(0.0, 0.0)],
            10.0,
        )
        .unwrap();
        assert_eq!(
            distance_3d(Point2D::new(5.0, 5.0), Point2D::new(5.0, 5.0), &topo),
            10.0
        );
        let topo40 = Topology {
            ap_height: 40.0,
            ..topo.clone()
        };
        assert!(
            (distance_3d(Point2D::new(0.0, 0.0), Point2D::new(30.0, 0.0), &topo40) - 50.0).abs()
                < 1e-12
        );
        let d = distance_3d(Point2D::new(0.0, 0.0), Point2D::new(990.0, 0.0), &topo);
        assert!((d - 14.142135623730951).abs() < 1e-9);
    }

    #[test]
    fn placement_is_seeded_and_inside() {
        let a = place_network(1, 1, 1000.0, 10.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for p in a.ap_positions.iter().chain(&a.ue_positions) {
            assert!((0.0..1000.0).contains(&p.x) && (0.0..1000.0).contains(&p.y));
        }
        let b = place_network(7, 3, 1000.0, 10.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let c = place_network(7, 3, 1000.0, 10.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn placement_rejects_bad_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            place_network(1, 1, 0.0, 10.0, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            place_network(1, 1, -5.0, 10.0, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
        assert!(place_network(0, 1, 10.0, 10.0, &mut rng).is_err());
    }

    #[test]
    fn placement_mean_is_centered() {
        // 10^4 reseeds of L = 100 APs; the mean x is within 3 standard errors of 500.
        let side = 1000.0;
        let reps = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut sum = 0.0;
        for _ in 0..reps {
            let t = place_network(100, 40, side, 10.0, &mut rng).unwrap();
            sum += t.ap_positions.iter().map(|p| p.x).sum::<f64>() / 100.0;
        }
        let mean = sum / reps as f64;
        let se = side / 12f64.sqrt() / (100.0 * reps as f64).sqrt();
        assert!((mean - 500.0).abs() < 3.0 * (side / 12f64.sqrt()) / 100.0);
        assert!((mean - 500.0).abs() < 4.0 * se, "mean {mean}");
    }

    fn point() -> impl Strategy<Value = Point2D> {
        (0.0..1000.0f64, 0.0..1000.0f64).prop_map(|(x, y)| Point2D::new(x, y))
    }

    proptest! {
        #[test]
        fn wrap_is_a_metric(a in point(), b in point(), c in point()) {
            let side = 1000.0;
            let ab = wrap_distance(a, b, side);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wrap_distance(b, a, side)).abs() < 1e-12);
            prop_assert!(ab <= side / 2f64.sqrt() + 1e-9);
            prop_assert!(ab <= wrap_distance(a, c, side) + wrap_distance(c, b, side) + 1e-9);
        }

        #[test]
        fn wrap_is_translation_invariant(a in point(), b in point(), shift in point()) {
            let side = 1000.0;
            let mv = |p: Point2D| Point2D::new((p.x + shift.x) % side, (p.y + shift.y) % side);
            prop_assert!((wrap_distance(mv(a), mv(b), side) - wrap_distance(a, b, side)).abs() < 1e-9);
        }

        #[test]
        fn distance_3d_at_least_height(a in point(), b in point(), h in 0.0..50.0f64) {
            let topo = Topology::new(1000.0, vec![a], vec![b], h).unwrap();
            prop_assert!(distance_3d(a, b, &topo) >= h);
        }
    }
}
