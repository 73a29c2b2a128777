use std::sync::OnceLock;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

use bidomain::bem2d::{curve_pair_operators, ClosedCurve};
use bidomain::cli::{add_noise, report_table, ReportRow, RunConfig};
use bidomain::field::{NodalField, Units};
use bidomain::kernels::{ConductivityModel, HeatKernel, HeatOperatorSpec};
use bidomain::mesh::primitives::icosphere;
use bidomain::mesh::DomainConfig;
use bidomain::oracle::rmse;
use bidomain::reconstruction::SteadyPipeline;
use bidomain::solvers::ZarembaSolver;

fn domain() -> &'static DomainConfig {
    static D: OnceLock<DomainConfig> = OnceLock::new();
    D.get_or_init(|| DomainConfig::new(icosphere(1.0, 1, "heart"), icosphere(2.0, 1, "torso"), 1e-6).unwrap())
}

fn model() -> ConductivityModel {
    ConductivityModel::isotropic(12.0, 45.0, 7.0).unwrap()
}

fn zaremba() -> &'static ZarembaSolver {
    static Z: OnceLock<ZarembaSolver> = OnceLock::new();
    Z.get_or_init(|| ZarembaSolver::new(&model().bath, domain()).unwrap())
}

fn pipeline() -> &'static SteadyPipeline {
    static P: OnceLock<SteadyPipeline> = OnceLock::new();
    P.get_or_init(|| SteadyPipeline::new(domain(), &model(), 1.0).unwrap())
}

fn heart_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, domain().heart().vertices().len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rmse_is_symmetric_and_vanishes_on_the_diagonal(a in prop::collection::vec(-1e3..1e3f64, 1..50), shift in -5.0..5.0f64) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert_eq!(rmse(a.as_slice(), a.as_slice()).unwrap(), 0.0);
        let ab = rmse(a.as_slice(), b.as_slice()).unwrap();
        prop_assert_eq!(ab, rmse(b.as_slice(), a.as_slice()).unwrap());
        prop_assert!((ab - shift.abs()).abs() < 1e-9 * (1.0 + shift.abs()));
    }

    #[test]
    fn report_has_one_line_per_row(values in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 0..10)) {
        let rows: Vec<ReportRow> = values.iter().enumerate().map(|(i, (p, q))| ReportRow::new(&format!("r{i}"), *p, *q)).collect();
        let table = report_table(&rows);
        prop_assert_eq!(table.lines().count(), rows.len() + 1);
        for line in table.lines().skip(1) {
            prop_assert_eq!(line.matches(" mV").count(), 2);
        }
    }

    #[test]
    fn noise_is_reproducible_and_scaled(values in prop::collection::vec(-10.0..10.0f64, 1..200), seed in any::<u64>()) {
        let a = add_noise(&values, 0.05, seed).unwrap();
        prop_assert_eq!(&a, &add_noise(&values, 0.05, seed).unwrap());
        prop_assert_eq!(add_noise(&values, 0.0, seed).unwrap(), values.clone());
        prop_assert_eq!(a.len(), values.len());
    }

    #[test]
    fn config_survives_json(sigma in 0.1..100.0f64, noise in 0.0..1.0f64, seed in any::<u64>(), count in 2usize..40) {
        let c = RunConfig { sigma_li: sigma, noise, seed, alpha_count: count, ..RunConfig::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn heat_kernel_is_causal_and_positive(x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64, s in 1e-3..5.0f64) {
        let k = HeatKernel::new(&HeatOperatorSpec::heat()).unwrap();
        let d = Vector3::new(x, y, z);
        prop_assert_eq!(k.eval(&d, -s), 0.0);
        prop_assert_eq!(k.eval(&d, 0.0), 0.0);
        prop_assert!(k.eval(&d, s) >= 0.0);
        prop_assert_eq!(k.eval(&d, s), k.eval(&-d, s));
    }

    #[test]
    fn double_layer_of_a_constant_inside_star_polygons(radii in prop::collection::vec(0.6..1.4f64, 12..40), px in -0.2..0.2f64, py in -0.2..0.2f64) {
        let n = radii.len();
        let vertices: Vec<Vector2<f64>> = radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                Vector2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let curve = ClosedCurve::new("c", vertices).unwrap();
        let (_, k) = curve_pair_operators(1.0, &curve, &[Vector2::new(px, py)]).unwrap();
        let total: f64 = (0..k.ncols()).map(|j| k[(0, j)]).sum();
        prop_assert!((total + 1.0).abs() < 1e-8, "{}", total);
    }

    #[test]
    fn zaremba_solve_is_linear(a in heart_values(), b in heart_values(), s in -3.0..3.0f64) {
        let z = zaremba();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let (za, zb, zc) = (z.solve(&a).unwrap(), z.solve(&b).unwrap(), z.solve(&combo).unwrap());
        let scale = 1.0 + combo.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..zc.heart_flux.len() {
            prop_assert!((zc.heart_flux[i] - za.heart_flux[i] - s * zb.heart_flux[i]).abs() < 1e-9 * scale);
        }
        for i in 0..zc.torso_trace.len() {
            prop_assert!((zc.torso_trace[i] - za.torso_trace[i] - s * zb.torso_trace[i]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn reconstruction_is_calibrated(u in heart_values()) {
        let out = pipeline().run(&NodalField::new("heart", u, Units::MilliVolt).unwrap()).unwrap();
        prop_assert!(out.diagnostics.calibration_residual < 1e-8, "{}", out.diagnostics.calibration_residual);
        for ((v, ui), ue) in out.v.values().iter().zip(out.u_i.values()).zip(out.u_e.values()) {
            prop_assert!((v - (ui - ue)).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }
}
