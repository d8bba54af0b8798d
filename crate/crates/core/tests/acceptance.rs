//! Acceptance run: one `[PASS]`/`[FAIL]` line per criterion.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use conelab::association::{
    max_pairwise_spread, AssociationReport, Experiment, ExperimentConfig, Generator, TransportSpec,
};
use conelab::fields::{
    conical_metric, embed_negligibility_order, pullback_commutation_check, TensorField,
};
use conelab::geometry::{curvature, geodesic_curvature_circle, MetricJet};
use conelab::kernels::{
    delta_product_demo, make_kernel_net, make_polynomial_profile, unit_bump_1d,
};
use conelab::linalg::{AffineMap, Mat2, MatJet, Vec2};
use conelab::quadrature::{DiscQuadrature, PolarDiscRule, QuadratureSpec};
use conelab::region::Region;
use conelab::transport::{identity_transport, perturbed_transport, MatrixField};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const LIMIT_TOL: f64 = 0.02;
const SPREAD_TOL: f64 = 0.02;
const WALL_CLOCK: Duration = Duration::from_secs(300);
const KAPPA_TOL: f64 = 1e-8;
const GB_SCHEDULE_TOL: f64 = 1e-3;
const GB_SPHERE_TOL: f64 = 1e-6;
const PULLBACK_TOL: f64 = 1e-8;
const CONE_SCALAR_TOL: f64 = 1e-10;
const SPHERE_SCALAR_TOL: f64 = 1e-8;
const RIEMANN_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self {
            pass: false,
            detail: format!("error: {e}"),
        }
    }
}

fn config(alpha: f64, q: usize, shift: [f64; 2], transport: TransportSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(alpha);
    cfg.kernel.moment_order = q;
    cfg.kernel.shift = shift;
    cfg.transport = transport;
    cfg
}

fn perturbed() -> TransportSpec {
    TransportSpec::Perturbed {
        order: 3,
        generator: Generator::Rotation,
    }
}

fn study(cfg: &ExperimentConfig) -> conelab::Result<(AssociationReport, Duration)> {
    let start = Instant::now();
    let report = Experiment::new(cfg)?.convergence_study()?;
    Ok((report, start.elapsed()))
}

fn conical_association(runs: &[(f64, AssociationReport, Duration)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (alpha, r, t) in runs {
        let ok = r.relative_error <= LIMIT_TOL && *t < WALL_CLOCK;
        pass &= ok;
        parts.push(format!(
            "alpha={alpha}: limit {:.6} vs {:.6} (rel {:.2e}) in {:.1}s",
            r.limit,
            r.target,
            r.relative_error,
            t.as_secs_f64()
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn regularization_independence(reports: &[AssociationReport]) -> Outcome {
    let limits: Vec<f64> = reports.iter().map(|r| r.limit).collect();
    let spread = max_pairwise_spread(&limits);
    let listed = reports
        .iter()
        .map(|r| format!("{}/{}={:.6}", r.kernel_id, r.transport_id, r.limit))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        spread < SPREAD_TOL,
        format!("max spread {spread:.2e} over {listed}"),
    )
}

fn field_metric(f: &TensorField) -> impl Fn(&Vec2) -> conelab::Result<MetricJet> + '_ {
    move |y| Ok(MetricJet::unclamped(&f.jet(y)))
}

fn geodesic_curvature() -> conelab::Result<Outcome> {
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 0.8] {
        let f = conical_metric(alpha)?;
        for lambda in [0.3, 0.5] {
            let total = geodesic_curvature_circle(field_metric(&f), lambda, 128)?;
            worst = worst.max((total - 2.0 * PI * alpha).abs());
        }
    }
    Ok(Outcome::new(
        worst < KAPPA_TOL,
        format!("max |∮κ ds − 2πα| = {worst:.2e}"),
    ))
}

fn gauss_bonnet(reports: &[AssociationReport]) -> conelab::Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for r in reports {
        for rec in r.records.iter().filter(|rec| !rec.clamp_active) {
            worst = worst.max(rec.gb_residual);
            count += 1;
        }
    }
    let f = TensorField::SphereChart;
    let lambda = 0.7;
    let rule = PolarDiscRule::new(&[0.0, 0.35, 0.7], 24, 64);
    let interior: f64 = rule
        .nodes
        .iter()
        .map(|(y, w)| {
            let m = MetricJet::unclamped(&f.jet(y));
            0.5 * curvature(&m).scalar * m.det.sqrt() * w
        })
        .sum();
    let boundary = geodesic_curvature_circle(field_metric(&f), lambda, 128)?;
    let sphere = (interior + boundary - 2.0 * PI).abs();
    Ok(Outcome::new(
        count > 0 && worst < GB_SCHEDULE_TOL && sphere < GB_SPHERE_TOL,
        format!("max residual {worst:.2e} over {count} clamp-free eps; sphere chart {sphere:.2e}"),
    ))
}

fn determinant_bounds() -> conelab::Result<Outcome> {
    let exp = Experiment::new(&ExperimentConfig::new(0.8))?;
    let r = exp.det_bounds_check(0.3, &Region::Disc { radius: 0.5 })?;
    let ok = r.pass && r.eps0.is_some_and(|e| e > 0.0);
    let (lo, hi) = r
        .rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), row| {
            (lo.min(row.det_min), hi.max(row.det_max))
        });
    Ok(Outcome::new(
        ok,
        format!(
            "det in [{lo:.6}, {hi:.6}] within [{}, {}], eps0 = {:?}",
            r.lower, r.upper, r.eps0
        ),
    ))
}

fn negligibility() -> conelab::Result<Outcome> {
    let cfg = ExperimentConfig::new(0.8);
    let schedule = cfg.schedule.values()?;
    let quad = DiscQuadrature::new(QuadratureSpec::default())?;
    let transport = conelab::transport::tensor_action(identity_transport(), (0, 2))?;
    let points = Region::annulus(0.2, 0.45).samples(2, 6);
    let mut pass = true;
    let mut parts = Vec::new();
    for (q, tol) in [(2, 0.3), (4, 0.4)] {
        let kernel = make_kernel_net(make_polynomial_profile(2, q)?, Vec2::zeros())?;
        let r = embed_negligibility_order(
            &TensorField::SmoothTest,
            &kernel,
            &transport,
            &quad,
            &points,
            &schedule,
            q as f64,
            tol,
        )?;
        pass &= r.pass;
        parts.push(format!("q={q}: slope {:.3} (want {q} ± {tol})", r.slope));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn moderateness_and_decay(report: &AssociationReport) -> conelab::Result<(Outcome, Outcome)> {
    let exp = Experiment::new(&ExperimentConfig::new(0.8))?;
    let decay = exp.annulus_decay_check(2)?;
    let near = &decay.origin_moderateness;
    let moderate = Outcome::new(
        near.slope >= -2.2,
        format!("slope {:.3} (want ≥ -2.2)", near.slope),
    );
    let tends_to_zero = |fit: &conelab::fit::OrderFitReport| {
        fit.samples.iter().all(|s| s.1 == 0.0)
            || (fit.slope > 0.0 && fit.residual <= conelab::fit::MAX_SLOPE_RESIDUAL)
    };
    let eps_slope = decay.eps_slope.slope;
    let inner = &report.i2_inner_fit;
    let outer = &report.i2_outer_fit;
    let annulus = Outcome::new(
        eps_slope >= 1.8 && tends_to_zero(inner) && tends_to_zero(outer),
        format!(
            "eps-slope at r0=0.3 {eps_slope:.3} (want ≥ 1.8); I2 inner slope {:.3}, outer slope {:.3}",
            inner.slope, outer.slope
        ),
    );
    Ok((moderate, annulus))
}

fn taylor() -> conelab::Result<Outcome> {
    let exp = Experiment::new(&ExperimentConfig::new(0.8))?;
    let mut pass = true;
    let mut parts = Vec::new();
    for idx in [[0, 0], [1, 0], [0, 1]] {
        let r = exp.taylor_estimate_check(idx, 2)?;
        pass &= r.stable;
        parts.push(format!(
            "d{}{}: max ratio {:.4}, growth {:.3}",
            idx[0], idx[1], r.max_ratio, r.spread
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn pullback() -> conelab::Result<Outcome> {
    let quad = DiscQuadrature::new(QuadratureSpec::default())?;
    let kernel = make_kernel_net(make_polynomial_profile(2, 2)?, Vec2::zeros())?;
    let field = conical_metric(0.8)?;
    let points = Region::Disc { radius: 0.3 }.samples(2, 5);
    let maps = [
        AffineMap::rotation(PI / 4.0),
        AffineMap::rotation(2.0),
        AffineMap::scaling(2.0)?,
        AffineMap::scaling(0.5)?,
    ];
    let transports = [
        identity_transport(),
        perturbed_transport(MatrixField::rotation_generator(), 3, 0.05)?,
    ];
    let mut worst: f64 = 0.0;
    for map in &maps {
        for t in &transports {
            worst = worst.max(pullback_commutation_check(
                map, &field, &kernel, t, &quad, &points, 0.02,
            )?);
        }
    }
    Ok(Outcome::new(
        worst < PULLBACK_TOL,
        format!("max discrepancy {worst:.2e}"),
    ))
}

fn curvature_oracles() -> conelab::Result<Outcome> {
    let flat = curvature(&MetricJet::unclamped(&MatJet::constant(Mat2::identity()))).scalar;
    let cone = conical_metric(0.5)?;
    let mut cone_worst: f64 = 0.0;
    for y in [
        Vec2::new(0.3, 0.1),
        Vec2::new(-0.2, 0.45),
        Vec2::new(0.05, -0.4),
    ] {
        cone_worst = cone_worst.max(curvature(&MetricJet::unclamped(&cone.jet(&y))).scalar.abs());
    }
    let mut sphere_worst: f64 = 0.0;
    for y in [Vec2::zeros(), Vec2::new(0.4, -0.3), Vec2::new(1.5, 2.0)] {
        let s = curvature(&MetricJet::unclamped(&TensorField::SphereChart.jet(&y))).scalar;
        sphere_worst = sphere_worst.max((s - 2.0).abs());
    }
    let sym =
        || (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b, c)| Mat2::new(a, b, b, c));
    let strategy = (
        (0.5f64..2.0, -0.3f64..0.3, 0.5f64..2.0),
        (sym(), sym()),
        (sym(), sym(), sym()),
    );
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let symmetric = runner
        .run(&strategy, |((a, b, c), (d0, d1), (e00, e01, e11))| {
            let jet = MatJet {
                value: Mat2::new(a, b, b, c),
                d: [d0, d1],
                dd: [[e00, e01], [e01, e11]],
            };
            let r = curvature(&MetricJet::unclamped(&jet)).riemann;
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        for n in 0..2 {
                            worst = worst
                                .max((r[i][k][l][n] + r[k][i][l][n]).abs())
                                .max((r[i][k][l][n] + r[i][k][n][l]).abs())
                                .max((r[i][k][l][n] - r[l][n][i][k]).abs());
                        }
                    }
                }
            }
            prop_assert!(worst < RIEMANN_TOL);
            Ok(())
        })
        .is_ok();
    Ok(Outcome::new(
        flat == 0.0
            && cone_worst < CONE_SCALAR_TOL
            && sphere_worst < SPHERE_SCALAR_TOL
            && symmetric,
        format!(
            "flat {flat:e}; cone max |R| {cone_worst:.2e}; sphere max |R-2| {sphere_worst:.2e}; \
             Riemann symmetries on 100 jets {}",
            if symmetric { "hold" } else { "violated" }
        ),
    ))
}

fn delta_product() -> conelab::Result<Outcome> {
    let schedule = conelab::fit::geometric_schedule(0.08, 0.7, 10);
    let r = delta_product_demo(&make_polynomial_profile(1, 2)?, &schedule, unit_bump_1d)?;
    Ok(Outcome::new(
        r.cross_identically_zero && r.self_slope.pass,
        format!(
            "cross zero for every eps: {}; self-product slope {:.4} (want -1 ± 0.05)",
            r.cross_identically_zero, r.self_slope.slope
        ),
    ))
}

fn report(n: usize, name: &str, outcome: conelab::Result<Outcome>, failures: &mut usize) {
    let o = outcome.unwrap_or_else(Outcome::error);
    if !o.pass {
        *failures += 1;
    }
    println!(
        "[{}] {n}. {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() -> ExitCode {
    let mut failures = 0;

    let baseline = [0.5, 0.8].map(|alpha| {
        study(&config(alpha, 2, [0.0, 0.0], TransportSpec::Identity)).map(|(r, t)| (alpha, r, t))
    });
    let c1 = baseline
        .iter()
        .map(|b| b.as_ref().map_err(|e| e.to_string()).cloned())
        .collect::<Result<Vec<_>, _>>();
    report(
        1,
        "conical association",
        Ok(c1
            .as_deref()
            .map(conical_association)
            .unwrap_or_else(Outcome::error)),
        &mut failures,
    );

    let mut matrix = Vec::new();
    let mut matrix_error = None;
    for (q, shift) in [(2, [0.0, 0.0]), (4, [0.0, 0.0]), (2, [0.4, 0.2])] {
        for transport in [TransportSpec::Identity, perturbed()] {
            let reuse = q == 2 && shift == [0.0, 0.0] && transport == TransportSpec::Identity;
            let run = match (&baseline[1], reuse) {
                (Ok((_, r, _)), true) => Ok(r.clone()),
                _ => study(&config(0.8, q, shift, transport)).map(|(r, _)| r),
            };
            match run {
                Ok(r) => matrix.push(r),
                Err(e) => matrix_error = Some(e),
            }
        }
    }
    let c2 = match matrix_error {
        Some(e) => Err(e),
        None => Ok(regularization_independence(&matrix)),
    };
    report(2, "regularization independence", c2, &mut failures);

    report(3, "geodesic curvature", geodesic_curvature(), &mut failures);

    let mut all_reports: Vec<AssociationReport> = matrix.clone();
    if let Ok((_, r, _)) = &baseline[0] {
        all_reports.push(r.clone());
    }
    report(
        4,
        "Gauss–Bonnet closure",
        gauss_bonnet(&all_reports),
        &mut failures,
    );
    report(5, "determinant bounds", determinant_bounds(), &mut failures);
    report(6, "negligibility order", negligibility(), &mut failures);

    let decay = match &baseline[1] {
        Ok((_, r, _)) => moderateness_and_decay(r),
        Err(e) => Err(conelab::Error::Config(e.to_string())),
    };
    let (c7, c8) = match decay {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(conelab::Error::Config(e.to_string())), Err(e)),
    };
    report(7, "moderateness near origin", c7, &mut failures);
    report(8, "annulus decay", c8, &mut failures);
    report(9, "Taylor estimate", taylor(), &mut failures);
    report(10, "pullback commutation", pullback(), &mut failures);
    report(
        11,
        "curvature engine oracles",
        curvature_oracles(),
        &mut failures,
    );
    report(12, "delta-product demo", delta_product(), &mut failures);

    println!("{} of 12 criteria passed", 12 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
