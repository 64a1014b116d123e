//! Second-stage estimator: landmark association, two-landmark resection,
//! uncertainty propagation and information-form fusion.

use crate::chart::{Chart, Landmark};
use crate::error::{Error, Result};
use crate::geodesy::{wrap_pi, GeodeticPoint, NedPoint, Pose, TangentPlane};
use crate::lfm::{PoseEstimate, Stage};
use crate::radarsim::StaticTarget;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

/// Fusion regularization, m².
pub const FUSION_EPS: f64 = 1e-6;

/// Default association gate, meters.
pub const DEFAULT_GATE: f64 = 100.0;

/// Target index, landmark id, gate distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub pairs: Vec<(usize, String, f64)>,
}

impl Association {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Greedy global-nearest-neighbour association.
///
/// Each target is placed in the world through `prior`; candidate
/// target/landmark pairs closer than `gate` are accepted in ascending
/// distance order while both sides are still free.
pub fn associate(targets: &[StaticTarget], landmarks: &[Landmark], prior: &Pose, gate: f64) -> Association {
    let plane = TangentPlane::new(prior.position);
    let lm: Vec<NedPoint> = landmarks.iter().map(|l| plane.to_ned(l.position)).collect();
    let mut cands = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let p = NedPoint::polar(t.range, t.bearing + prior.heading);
        for (k, l) in lm.iter().enumerate() {
            let xi = p.distance(l);
            if xi < gate {
                cands.push((xi, i, k));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; targets.len()];
    let mut l_used = vec![false; landmarks.len()];
    let mut pairs = Vec::new();
    for (xi, i, k) in cands {
        if !t_used[i] && !l_used[k] {
            t_used[i] = true;
            l_used[k] = true;
            pairs.push((i, landmarks[k].id.clone(), xi));
        }
    }
    pairs.sort_by_key(|p| p.0);
    Association { pairs }
}

/// Relative geometry of two target/landmark associations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    /// `ρ_j / ρ_i`
    pub r_ji: f64,
    /// `β_j − β_i`, wrapped to (−π, π]
    pub beta_ji: f64,
    /// distance between the landmarks, meters
    pub d_ij: f64,
    /// azimuth of `l_i − l_j` from true north
    pub a_ij: f64,
}

pub fn pair_geometry(
    zi: &StaticTarget,
    zj: &StaticTarget,
    li: &Landmark,
    lj: &Landmark,
    origin: GeodeticPoint,
) -> Result<PairGeometry> {
    pair_geometry_in(zi, zj, li, lj, &TangentPlane::new(origin))
}

pub fn pair_geometry_in(
    zi: &StaticTarget,
    zj: &StaticTarget,
    li: &Landmark,
    lj: &Landmark,
    plane: &TangentPlane,
) -> Result<PairGeometry> {
    let diff = plane.to_ned(li.position) - plane.to_ned(lj.position);
    let d_ij = diff.norm();
    if !(d_ij > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "landmarks {} and {} coincide",
            li.id, lj.id
        )));
    }
    if !(zi.range > 0.0) {
        return Err(Error::DegenerateGeometry("target range must be positive".into()));
    }
    Ok(PairGeometry {
        r_ji: zj.range / zi.range,
        beta_ji: wrap_pi(zj.bearing - zi.bearing),
        d_ij,
        a_ij: diff.azimuth(),
    })
}

/// `δψ = atan2(r sin β, 1 − r cos β)` for bearing difference `beta` and range ratio `r`.
pub fn delta_psi(beta: f64, r: f64) -> f64 {
    (r * beta.sin()).atan2(1.0 - r * beta.cos())
}

/// Gradient of [`delta_psi`] with respect to (β, r).
pub fn delta_psi_gradient(beta: f64, r: f64) -> Vector2<f64> {
    let (s, c) = beta.sin_cos();
    let d = 1.0 - 2.0 * r * c + r * r;
    Vector2::new((r * c - r * r) / d, s / d)
}

/// Hessian of [`delta_psi`] with respect to (β, r).
pub fn delta_psi_hessian(beta: f64, r: f64) -> Matrix2<f64> {
    let (s, c) = beta.sin_cos();
    let d = 1.0 - 2.0 * r * c + r * r;
    let d2 = d * d;
    let num_b = r * c - r * r;
    // ∂D/∂β = 2 r sin β, ∂D/∂r = 2r − 2 cos β
    let f_bb = (-r * s * d - num_b * 2.0 * r * s) / d2;
    let f_br = ((c - 2.0 * r) * d - num_b * (2.0 * r - 2.0 * c)) / d2;
    let f_rr = -s * (2.0 * r - 2.0 * c) / d2;
    Matrix2::new(f_bb, f_br, f_br, f_rr)
}

/// Heading from one landmark pair: `ψ̂ = δψ + a_ij − β_i`, wrapped to (−π, π].
pub fn heading_from_pair(g: &PairGeometry, beta_i: f64) -> Result<f64> {
    let d = 1.0 - 2.0 * g.r_ji * g.beta_ji.cos() + g.r_ji * g.r_ji;
    if !(d > 1e-12) {
        return Err(Error::DegenerateGeometry(
            "apparent targets coincide (r_ji ≈ 1, β_ji ≈ 0)".into(),
        ));
    }
    Ok(wrap_pi(delta_psi(g.beta_ji, g.r_ji) + g.a_ij - beta_i))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingEstimate {
    pub mean: f64,
    pub var: f64,
    /// Second-order mean of δψ.
    pub delta_mean: f64,
    /// Second-order variance of δψ.
    pub delta_var: f64,
}

/// Second-order Gaussian approximation of the triangulated heading.
///
/// The range ratio is approximated as Gaussian with mean `μρj/μρi` and
/// variance `μr²(σ²ρi/μρi² + σ²ρj/μρj²)`; bearing noise is independent.
pub fn heading_variance(
    g: &PairGeometry,
    range_vars: (f64, f64),
    bearing_vars: (f64, f64),
    means: (f64, f64, f64, f64),
) -> Result<HeadingEstimate> {
    let (mu_ri, mu_rj, mu_bi, mu_bj) = means;
    let (var_ri, var_rj) = range_vars;
    let (var_bi, var_bj) = bearing_vars;
    if [var_ri, var_rj, var_bi, var_bj].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Precondition("variances must be non-negative".into()));
    }
    if !(mu_ri > 0.0 && var_ri.sqrt() < mu_ri) {
        return Err(Error::Precondition(format!(
            "σρi/μρi < 1 fails: σ = {}, μ = {mu_ri}",
            var_ri.sqrt()
        )));
    }
    if !(mu_rj > 0.0 && var_rj.sqrt() < mu_rj) {
        return Err(Error::Precondition(format!(
            "σρj/μρj < 1 fails: σ = {}, μ = {mu_rj}",
            var_rj.sqrt()
        )));
    }
    let mu_r = mu_rj / mu_ri;
    let var_r = mu_r * mu_r * (var_ri / (mu_ri * mu_ri) + var_rj / (mu_rj * mu_rj));
    let mu_b = wrap_pi(mu_bj - mu_bi);
    let var_b = var_bi + var_bj;

    let d = 1.0 - 2.0 * mu_r * mu_b.cos() + mu_r * mu_r;
    if !(d > 1e-12) {
        return Err(Error::DegenerateGeometry(
            "apparent targets coincide (r_ji ≈ 1, β_ji ≈ 0)".into(),
        ));
    }
    let sigma = Matrix2::new(var_b, 0.0, 0.0, var_r);
    let grad = delta_psi_gradient(mu_b, mu_r);
    let hess = delta_psi_hessian(mu_b, mu_r);
    let hs = hess * sigma;
    let delta_mean = delta_psi(mu_b, mu_r) + 0.5 * hs.trace();
    let delta_var = (grad.transpose() * sigma * grad)[0] + 0.5 * (hs * hs).trace();
    Ok(HeadingEstimate {
        mean: wrap_pi(delta_mean + g.a_ij - mu_bi),
        var: delta_var + var_bi,
        delta_mean,
        delta_var,
    })
}

/// `−ρ∠(β + ψ̂)`: ship position relative to the landmark, NED meters.
pub fn target_offset(z: &StaticTarget, psi_hat: f64) -> NedPoint {
    -NedPoint::polar(z.range, z.bearing + psi_hat)
}

/// Ship position implied by one target and its landmark, in the landmark's tangent plane.
pub fn position_from_target(z: &StaticTarget, l: &Landmark, psi_hat: f64) -> GeodeticPoint {
    TangentPlane::new(l.position).to_geo(target_offset(z, psi_hat))
}

/// As [`position_from_target`], with the offset applied in `plane`.
pub fn position_from_target_in(z: &StaticTarget, l: &Landmark, psi_hat: f64, plane: &TangentPlane) -> GeodeticPoint {
    plane.to_geo(plane.to_ned(l.position) + target_offset(z, psi_hat))
}

/// Jacobian of [`target_offset`] with respect to (ρ, β, ψ).
pub fn position_jacobian(range: f64, bearing: f64, psi: f64) -> Matrix2x3<f64> {
    let (s, c) = (bearing + psi).sin_cos();
    Matrix2x3::new(-c, range * s, range * s, -s, -range * c, -range * c)
}

/// First-order covariance of the position from one target, NED m².
pub fn position_covariance(z: &StaticTarget, psi: &HeadingEstimate) -> Matrix2<f64> {
    let j = position_jacobian(z.range, z.bearing, psi.mean);
    let sk = Matrix3::from_diagonal(&nalgebra::Vector3::new(z.range_var, z.bearing_var, psi.var));
    let q = j * sk * j.transpose();
    0.5 * (q + q.transpose())
}

/// Information-form fusion of NED estimates sharing one frame.
pub fn fuse_ned(estimates: &[(NedPoint, Matrix2<f64>)]) -> Result<(NedPoint, Matrix2<f64>)> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("fusion estimates"));
    }
    let mut info = Matrix2::zeros();
    let mut vec = Vector2::zeros();
    for (mu, cov) in estimates {
        let inv = invert_regularized(cov)?;
        info += inv;
        vec += inv * Vector2::new(mu.north, mu.east);
    }
    let cov = info.try_inverse().ok_or(Error::SingularCovariance)?;
    let cov = 0.5 * (cov + cov.transpose());
    let mu = cov * vec;
    Ok((NedPoint::new(mu[0], mu[1]), cov))
}

fn invert_regularized(cov: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if let Some(ch) = cov.cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Ok(inv);
        }
    }
    let reg = cov + Matrix2::identity() * FUSION_EPS;
    reg.cholesky()
        .map(|c| c.inverse())
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularCovariance)
}

/// Fuses geodetic estimates in the tangent plane of the first one.
pub fn fuse(estimates: &[(GeodeticPoint, Matrix2<f64>)]) -> Result<(GeodeticPoint, Matrix2<f64>)> {
    let first = estimates.first().ok_or(Error::EmptyInput("fusion estimates"))?;
    let plane = TangentPlane::new(first.0);
    let ned: Vec<_> = estimates.iter().map(|(p, c)| (plane.to_ned(*p), *c)).collect();
    let (mu, cov) = fuse_ned(&ned)?;
    Ok((plane.to_geo(mu), cov))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageOutput {
    pub estimate: PoseEstimate,
    pub association: Association,
    /// Target indices of the pair used for heading.
    pub pair: Option<(usize, usize)>,
    pub heading: Option<HeadingEstimate>,
}

/// Resection from associated static targets around a first-stage fix.
pub fn estimate_second_stage(
    targets: &[StaticTarget],
    chart: &Chart,
    first_stage: &PoseEstimate,
    gate: f64,
) -> PoseEstimate {
    estimate_second_stage_detailed(targets, chart, first_stage, gate).estimate
}

/// Like [`estimate_second_stage`], also reporting the association and heading pair.
///
/// All geometry is evaluated in the tangent plane of the current ship
/// estimate, which is re-centred on the new fix until it moves less than
/// 0.1 µm, matching the frame the radar measures in.
pub fn estimate_second_stage_detailed(
    targets: &[StaticTarget],
    chart: &Chart,
    first_stage: &PoseEstimate,
    gate: f64,
) -> SecondStageOutput {
    let unavailable = |association| SecondStageOutput {
        estimate: PoseEstimate::unavailable(first_stage.mean, Stage::Second),
        association,
        pair: None,
        heading: None,
    };
    if !first_stage.available {
        return unavailable(Association { pairs: vec![] });
    }
    let association = associate(targets, chart.landmarks(), &first_stage.mean, gate);
    if association.len() < 2 {
        return unavailable(association);
    }
    let matched: Vec<(&StaticTarget, &Landmark)> = association
        .pairs
        .iter()
        .map(|(i, id, _)| (&targets[*i], chart.landmark(id).expect("associated landmark exists")))
        .collect();

    // widest apparent angular separation gives the best-conditioned heading
    let mut best = (0, 1, f64::NEG_INFINITY);
    for a in 0..matched.len() {
        for b in a + 1..matched.len() {
            let s = wrap_pi(matched[b].0.bearing - matched[a].0.bearing).sin().abs();
            if s > best.2 {
                best = (a, b, s);
            }
        }
    }
    let (a, b, _) = best;

    let mut origin = first_stage.mean.position;
    let mut result = None;
    for _ in 0..10 {
        let plane = TangentPlane::new(origin);
        let Ok(step) = resect(&matched, a, b, &plane) else {
            return unavailable(association);
        };
        let shift = plane.to_ned(step.0).norm();
        origin = step.0;
        result = Some(step);
        if shift < 1e-7 {
            break;
        }
    }
    let (position, cov2, heading) = result.expect("at least one iteration");
    let mut cov = Matrix3::zeros();
    cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&cov2);
    cov[(2, 2)] = heading.var;
    SecondStageOutput {
        estimate: PoseEstimate {
            mean: Pose::new(position, heading.mean),
            cov,
            stage: Stage::Second,
            available: true,
        },
        pair: Some((association.pairs[a].0, association.pairs[b].0)),
        association,
        heading: Some(heading),
    }
}

fn resect(
    matched: &[(&StaticTarget, &Landmark)],
    a: usize,
    b: usize,
    plane: &TangentPlane,
) -> Result<(GeodeticPoint, Matrix2<f64>, HeadingEstimate)> {
    let (zi, li) = matched[a];
    let (zj, lj) = matched[b];
    let g = pair_geometry_in(zi, zj, li, lj, plane)?;
    let psi = heading_from_pair(&g, zi.bearing)?;
    let h = heading_variance(
        &g,
        (zi.range_var, zj.range_var),
        (zi.bearing_var, zj.bearing_var),
        (zi.range, zj.range, zi.bearing, zj.bearing),
    )?;
    let heading = HeadingEstimate { mean: psi, ..h };
    let ests: Vec<(NedPoint, Matrix2<f64>)> = matched
        .iter()
        .map(|(z, l)| {
            (
                plane.to_ned(l.position) + target_offset(z, psi),
                position_covariance(z, &heading),
            )
        })
        .collect();
    let (mu, cov) = fuse_ned(&ests)?;
    Ok((plane.to_geo(mu), cov, heading))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::{to_geo, to_ned};
    use crate::radarsim::{detect_static_targets, RadarNoiseParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn origin() -> GeodeticPoint {
        GeodeticPoint::from_degrees(54.3, 10.1).unwrap()
    }

    fn lm(id: &str, n: f64, e: f64) -> Landmark {
        Landmark {
            id: id.into(),
            position: to_geo(NedPoint::new(n, e), origin()),
        }
    }

    /// Exact measurements of `landmarks` from `pose`, in the ship's tangent plane.
    fn measure(pose: &Pose, landmarks: &[Landmark]) -> Vec<StaticTarget> {
        let params = RadarNoiseParams {
            rho_max: 1e6,
            ..RadarNoiseParams::default().noise_free()
        };
        detect_static_targets(pose, landmarks, &params, 0)
    }

    fn target(range: f64, bearing: f64) -> StaticTarget {
        StaticTarget::new(range, bearing, 0.0, 0.0)
    }

    #[test]
    fn pair_geometry_basics() {
        let li = lm("a", 0.0, 1000.0);
        let lj = lm("b", 0.0, 0.0);
        let g = pair_geometry(&target(500.0, 0.2), &target(500.0, 0.1), &li, &lj, origin()).unwrap();
        assert_eq!(g.r_ji, 1.0);
        assert!((g.d_ij - 1000.0).abs() < 1e-6);
        assert!((g.a_ij - PI / 2.0).abs() < 1e-9);
        assert!((g.beta_ji + 0.1).abs() < 1e-15);
        assert!(pair_geometry(&target(1.0, 0.0), &target(1.0, 0.0), &li, &li, origin()).is_err());
    }

    #[test]
    fn pair_geometry_matches_geodesy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let li = lm("a", rng.random_range(-4e3..4e3), rng.random_range(-4e3..4e3));
            let lj = lm("b", rng.random_range(-4e3..4e3), rng.random_range(-4e3..4e3));
            let g = pair_geometry(&target(10.0, 0.0), &target(20.0, 0.0), &li, &lj, origin()).unwrap();
            let d = to_ned(li.position, origin()) - to_ned(lj.position, origin());
            assert!((g.d_ij - d.north.hypot(d.east)).abs() < 1e-9);
            assert!((g.a_ij - d.east.atan2(d.north)).abs() < 1e-12);
            assert_eq!(g.r_ji, 2.0);
        }
    }

    #[test]
    fn heading_from_forward_model() {
        let landmarks = [lm("a", 1500.0, 300.0), lm("b", -400.0, 1200.0)];
        let ship = to_geo(NedPoint::new(50.0, -20.0), origin());
        for deg in [0.0f64, 30.0, -135.0, 179.0] {
            let pose = Pose::new(ship, deg.to_radians());
            let z = measure(&pose, &landmarks);
            let plane = TangentPlane::new(ship);
            let g = pair_geometry_in(&z[0], &z[1], &landmarks[0], &landmarks[1], &plane).unwrap();
            let psi = heading_from_pair(&g, z[0].bearing).unwrap();
            assert!(wrap_pi(psi - pose.heading).abs() < 1e-12, "{deg}: {psi}");
            // roles swapped
            let g2 = pair_geometry_in(&z[1], &z[0], &landmarks[1], &landmarks[0], &plane).unwrap();
            let psi2 = heading_from_pair(&g2, z[1].bearing).unwrap();
            assert!(wrap_pi(psi2 - psi).abs() < 1e-12);
            // uniform range scaling leaves r_ji, hence the argument, unchanged
            let r3 = (4.0 * z[1].range) / (4.0 * z[0].range);
            assert_eq!(delta_psi(g.beta_ji, r3), delta_psi(g.beta_ji, g.r_ji));
        }
    }

    #[test]
    fn heading_rejects_coincident_targets() {
        let g = PairGeometry { r_ji: 1.0, beta_ji: 0.0, d_ij: 10.0, a_ij: 0.0 };
        assert!(matches!(heading_from_pair(&g, 0.0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn position_from_targets_inverts_forward_model() {
        let landmarks = [lm("a", 1500.0, 300.0), lm("b", -400.0, 1200.0)];
        let ship = to_geo(NedPoint::new(50.0, -20.0), origin());
        let pose = Pose::new(ship, 0.7);
        let z = measure(&pose, &landmarks);
        let plane = TangentPlane::new(ship);
        for (t, l) in z.iter().zip(&landmarks) {
            let p = position_from_target_in(t, l, pose.heading, &plane);
            assert!(to_ned(p, ship).norm() < 1e-6);
            // the landmark-frame form differs only by the frame change
            let q = position_from_target(t, l, pose.heading);
            assert!(to_ned(q, ship).norm() < 0.5);
        }
        let p = position_from_target(&target(0.0, 1.0), &landmarks[0], 0.3);
        assert!(to_ned(p, landmarks[0].position).norm() < 1e-9);
    }

    fn fd_check(beta: f64, r: f64) {
        let h = 1e-5;
        let g = delta_psi_gradient(beta, r);
        let fb = (delta_psi(beta + h, r) - delta_psi(beta - h, r)) / (2.0 * h);
        let fr = (delta_psi(beta, r + h) - delta_psi(beta, r - h)) / (2.0 * h);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
        assert!(rel(g[0], fb) < 1e-6 && rel(g[1], fr) < 1e-6, "{g:?} {fb} {fr}");
        let hs = delta_psi_hessian(beta, r);
        let gb = (delta_psi_gradient(beta + h, r) - delta_psi_gradient(beta - h, r)) / (2.0 * h);
        let gr = (delta_psi_gradient(beta, r + h) - delta_psi_gradient(beta, r - h)) / (2.0 * h);
        for (a, b) in [(hs[(0, 0)], gb[0]), (hs[(1, 0)], gb[1]), (hs[(0, 1)], gr[0]), (hs[(1, 1)], gr[1])] {
            assert!(rel(a, b) < 1e-6, "{hs:?} {gb:?} {gr:?}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let beta = rng.random_range(0.3..2.8) * if rng.random() { 1.0 } else { -1.0 };
            let r = rng.random_range(0.3..3.0);
            fd_check(beta, r);
        }
    }

    #[test]
    fn zero_variance_heading_is_deterministic() {
        let g = PairGeometry { r_ji: 1.3, beta_ji: 0.8, d_ij: 900.0, a_ij: 1.1 };
        let h = heading_variance(&g, (0.0, 0.0), (0.0, 0.0), (1000.0, 1300.0, 0.2, 1.0)).unwrap();
        assert_eq!(h.var, 0.0);
        assert_eq!(h.mean, wrap_pi(delta_psi(0.8, 1.3) + 1.1 - 0.2));
    }

    #[test]
    fn heading_variance_checks_preconditions() {
        let g = PairGeometry { r_ji: 1.3, beta_ji: 0.8, d_ij: 900.0, a_ij: 1.1 };
        let e = heading_variance(&g, (1.0e6 * 1.1, 1.0), (0.0, 0.0), (1000.0, 1300.0, 0.2, 1.0)).unwrap_err();
        assert!(e.to_string().contains("σρi/μρi"), "{e}");
    }

    #[test]
    fn heading_matches_monte_carlo() {
        let (mu_ri, mu_rj, mu_bi, mu_bj) = (1500.0, 2100.0, 0.3, 1.4);
        let (sri, srj) = (0.01 * mu_ri, 0.01 * mu_rj);
        let sb = 0.3f64.to_radians();
        let g = PairGeometry { r_ji: mu_rj / mu_ri, beta_ji: mu_bj - mu_bi, d_ij: 1.0, a_ij: 0.0 };
        let h = heading_variance(&g, (sri * sri, srj * srj), (sb * sb, sb * sb), (mu_ri, mu_rj, mu_bi, mu_bj)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut n_ = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let ri = mu_ri + n_(sri);
                let rj = mu_rj + n_(srj);
                let b = (mu_bj + n_(sb)) - (mu_bi + n_(sb));
                delta_psi(b, rj / ri)
            })
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((h.delta_mean - m).abs() < 0.05 * h.delta_mean.abs().max(v.sqrt()), "{} {m}", h.delta_mean);
        assert!((h.delta_var / v - 1.0).abs() < 0.05, "{} {v}", h.delta_var);
    }

    #[test]
    fn variance_grows_as_landmarks_close_up() {
        let sr = 15.0f64;
        let sb = 0.5f64.to_radians();
        let mut prev = 0.0;
        for k in 0..20 {
            let t = k as f64 / 20.0;
            let beta = 1.5 * (1.0 - t) + 0.02 * t;
            let r = 1.8 * (1.0 - t) + 1.01 * t;
            let g = PairGeometry { r_ji: r, beta_ji: beta, d_ij: 1.0, a_ij: 0.0 };
            let h = heading_variance(&g, (sr * sr, sr * sr), (sb * sb, sb * sb), (2000.0, 2000.0 * r, 0.0, beta)).unwrap();
            assert!(h.var > prev, "step {k}: {} <= {prev}", h.var);
            prev = h.var;
        }
    }

    #[test]
    fn position_covariance_limits() {
        let h = HeadingEstimate { mean: 0.4, var: 0.0, delta_mean: 0.0, delta_var: 0.0 };
        let z = target(1200.0, 0.9);
        assert_eq!(position_covariance(&z, &h), Matrix2::zeros());
        let z = StaticTarget::new(1200.0, 0.9, 25.0, 0.0);
        let q = position_covariance(&z, &h);
        let e = q.symmetric_eigen();
        let (imax, imin) = if e.eigenvalues[0] > e.eigenvalues[1] { (0, 1) } else { (1, 0) };
        assert!(e.eigenvalues[imin].abs() < 1e-9);
        assert!((e.eigenvalues[imax] - 25.0).abs() < 1e-9);
        let dir = e.eigenvectors.column(imax);
        let los = NedPoint::polar(1.0, 0.9 + 0.4);
        assert!((dir[0] * los.north + dir[1] * los.east).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn position_covariance_matches_monte_carlo() {
        let z = StaticTarget::new(1800.0, 2.2, 15.0f64.powi(2), 0.5f64.to_radians().powi(2));
        let h = HeadingEstimate { mean: -0.6, var: 0.8f64.to_radians().powi(2), delta_mean: 0.0, delta_var: 0.0 };
        let q = position_covariance(&z, &h);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut acc = Matrix2::zeros();
        let mut mean = Vector2::zeros();
        let pts: Vec<Vector2<f64>> = (0..n)
            .map(|_| {
                let r = z.range + z.range_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let b = z.bearing + z.bearing_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let p = h.mean + h.var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let d = target_offset(&target(r, b), p);
                Vector2::new(d.north, d.east)
            })
            .collect();
        for p in &pts {
            mean += p;
        }
        mean /= n as f64;
        for p in &pts {
            acc += (p - mean) * (p - mean).transpose();
        }
        acc /= (n - 1) as f64;
        assert!((acc - q).norm() / q.norm() < 0.05, "{acc} {q}");
    }

    #[test]
    fn position_jacobian_matches_finite_differences() {
        let (r, b, p) = (1700.0, 0.4, 1.9);
        let j = position_jacobian(r, b, p);
        let f = |r: f64, b: f64, p: f64| {
            let d = target_offset(&target(r, b), p);
            Vector2::new(d.north, d.east)
        };
        let hs = [1e-3, 1e-6, 1e-6];
        let cols = [
            (f(r + hs[0], b, p) - f(r - hs[0], b, p)) / (2.0 * hs[0]),
            (f(r, b + hs[1], p) - f(r, b - hs[1], p)) / (2.0 * hs[1]),
            (f(r, b, p + hs[2]) - f(r, b, p - hs[2])) / (2.0 * hs[2]),
        ];
        for (k, c) in cols.iter().enumerate() {
            assert!((j.column(k) - c).norm() / c.norm() < 1e-6, "column {k}");
        }
    }

    #[test]
    fn fusion_limits() {
        let c = Matrix2::new(4.0, 1.0, 1.0, 3.0);
        let (m, f) = fuse_ned(&[(NedPoint::new(1.0, 2.0), c), (NedPoint::new(1.0, 2.0), c)]).unwrap();
        assert!((m - NedPoint::new(1.0, 2.0)).norm() < 1e-12);
        assert!((f - c / 2.0).norm() < 1e-12);
        let (m, _) = fuse_ned(&[(NedPoint::new(0.0, 0.0), c * 1e6), (NedPoint::new(100.0, -50.0), c)]).unwrap();
        assert!((m - NedPoint::new(100.0, -50.0)).norm() < 0.001 * 111.8);
        assert!(fuse_ned(&[]).is_err());
        // zero covariances fall back to ε regularization
        let (m, f) = fuse_ned(&[(NedPoint::new(0.0, 0.0), Matrix2::zeros()), (NedPoint::new(2.0, 0.0), Matrix2::zeros())]).unwrap();
        assert!((m.north - 1.0).abs() < 1e-12);
        assert!((f[(0, 0)] - FUSION_EPS / 2.0).abs() < 1e-18);
        let nan = Matrix2::new(f64::NAN, 0.0, 0.0, 1.0);
        assert!(matches!(fuse_ned(&[(NedPoint::ORIGIN, nan)]), Err(Error::SingularCovariance)));
    }

    #[test]
    fn association_cases() {
        let landmarks = [lm("a", 1500.0, 300.0), lm("b", -400.0, 1200.0), lm("c", 800.0, -900.0)];
        let pose = Pose::new(origin(), 0.3);
        let z = measure(&pose, &landmarks);
        let a = associate(&z, &landmarks, &pose, 100.0);
        let ids: Vec<&str> = a.pairs.iter().map(|p| p.1.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(a.pairs.iter().all(|p| p.2 < 1.0));

        let far = target(3000.0, 0.0);
        let a = associate(&[far], &landmarks, &Pose::new(to_geo(NedPoint::new(0.0, -3000.0), origin()), 0.0), 100.0);
        assert!(a.is_empty());
    }

    #[test]
    fn association_matches_brute_force() {
        let landmarks = [lm("a", 1000.0, 0.0), lm("b", 1040.0, 30.0), lm("c", 980.0, 60.0)];
        let pose = Pose::new(origin(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z: Vec<StaticTarget> = measure(&pose, &landmarks)
                .into_iter()
                .map(|t| StaticTarget::new(t.range + rng.random_range(-8.0..8.0), t.bearing + rng.random_range(-0.004..0.004), 0.0, 0.0))
                .collect();
            let a = associate(&z, &landmarks, &pose, 100.0);
            assert_eq!(a.len(), 3);
            let world: Vec<NedPoint> = z.iter().map(|t| NedPoint::polar(t.range, t.bearing)).collect();
            let lmn: Vec<NedPoint> = landmarks.iter().map(|l| to_ned(l.position, origin())).collect();
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let cost = |p: &[usize; 3]| (0..3).map(|i| world[i].distance(&lmn[p[i]])).sum::<f64>();
            let best = perms.iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
            let got: Vec<usize> = a.pairs.iter().map(|p| landmarks.iter().position(|l| l.id == p.1).unwrap()).collect();
            assert_eq!(got, best.to_vec());
        }
    }

    fn scene() -> (Chart, Pose) {
        let landmarks = vec![lm("a", 1500.0, 300.0), lm("b", -400.0, 1200.0), lm("c", 800.0, -900.0)];
        let coast = vec![to_geo(NedPoint::new(3000.0, -3000.0), origin()), to_geo(NedPoint::new(3000.0, 3000.0), origin())];
        let chart = Chart::new(vec![coast], landmarks).unwrap();
        (chart, Pose::new(to_geo(NedPoint::new(30.0, 40.0), origin()), 0.5))
    }

    fn first_stage(mean: Pose) -> PoseEstimate {
        PoseEstimate {
            mean,
            cov: Matrix3::from_diagonal_element(61.0 * 61.0),
            stage: Stage::First,
            available: true,
        }
    }

    #[test]
    fn second_stage_noise_free_is_exact() {
        let (chart, truth) = scene();
        let z = measure(&truth, chart.landmarks());
        let prior = Pose::new(to_geo(NedPoint::new(60.0, -10.0), truth.position), truth.heading + 0.01);
        let out = estimate_second_stage_detailed(&z, &chart, &first_stage(prior), 100.0);
        assert!(out.estimate.available);
        assert_eq!(out.estimate.stage, Stage::Second);
        assert!(to_ned(out.estimate.mean.position, truth.position).norm() < 1e-3);
        assert!(wrap_pi(out.estimate.mean.heading - truth.heading).abs() < 1e-9);
        assert_eq!(out.association.len(), 3);
    }

    #[test]
    fn second_stage_needs_two_landmarks() {
        let (chart, truth) = scene();
        let z = measure(&truth, &chart.landmarks()[..1]);
        let out = estimate_second_stage(&z, &chart, &first_stage(truth), 100.0);
        assert!(!out.available);
        let out = estimate_second_stage(&[], &chart, &first_stage(truth), 100.0);
        assert!(!out.available);
        let mut fs = first_stage(truth);
        fs.available = false;
        let z = measure(&truth, chart.landmarks());
        assert!(!estimate_second_stage(&z, &chart, &fs, 100.0).available);
    }

    #[test]
    fn fused_trace_not_above_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let mut rand_cov = || {
                let a = Matrix2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                a * a.transpose() + Matrix2::identity() * 0.1
            };
            let (c1, c2) = (rand_cov(), rand_cov());
            let (_, f) = fuse_ned(&[(NedPoint::ORIGIN, c1), (NedPoint::new(3.0, 4.0), c2)]).unwrap();
            assert!(f.trace() <= c1.trace().min(c2.trace()) * (1.0 + 1e-12));
        }
    }
}
