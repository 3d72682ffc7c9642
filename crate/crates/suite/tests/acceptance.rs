//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! naming any failed sub-checks, then asserts.

use std::io::Write;
use std::sync::OnceLock;

use ldg_cli::config::{parse_config, serialize_config};
use ldg_cli::export::{field_csv, field_vtk, parse_field_csv, validate_vtk, Stamp};
use ldg_core::asymptotics::{self, audit_geometry, stability_ratio, ConvergenceReport, SweepConfig, SweepOutput};
use ldg_core::bulk::{self, bound_beta, bound_sr, f_bulk, f_bulk_shifted, BoundCase};
use ldg_core::field::{self, Grid3, QField, Scenario};
use ldg_core::linalg::{self, Mat3, Vec3};
use ldg_core::qtensor::{
    biaxiality, biaxiality_poly, biaxiality_unclamped, decompose_sr, decompose_sr_cap, project_to_uniaxial,
};
use ldg_core::solve::{self, SolverOptions, StepRule};
use ldg_core::{MaterialParams, QTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Collected sub-check outcomes of one criterion.
struct Checks {
    id: u32,
    title: &'static str,
    failed: Vec<String>,
    count: usize,
}

impl Checks {
    fn new(id: u32, title: &'static str) -> Self {
        Checks {
            id,
            title,
            failed: Vec::new(),
            count: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failed.push(what());
        }
    }

    /// Writes to the stdout handle directly so the line survives libtest's
    /// capture of passing tests.
    fn finish(self) {
        let line = if self.failed.is_empty() {
            format!("criterion {} [{}]: PASS ({} checks)", self.id, self.title, self.count)
        } else {
            format!(
                "criterion {} [{}]: FAIL ({} of {} checks): {}",
                self.id,
                self.title,
                self.failed.len(),
                self.count,
                self.failed.join("; ")
            )
        };
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        assert!(self.failed.is_empty(), "criterion {} failed", self.id);
    }
}

fn unit_params(l: f64) -> MaterialParams {
    MaterialParams::new(1.0, 1.0, 1.0, l).unwrap()
}

fn random_q(rng: &mut ChaCha8Rng, amp: f64) -> QTensor {
    QTensor(std::array::from_fn(|_| rng.gen_range(-amp..amp)))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random orthonormal triple.
fn random_frame(rng: &mut ChaCha8Rng) -> (Vec3, Vec3, Vec3) {
    let n = random_unit(rng);
    let t = random_unit(rng);
    let m = linalg::normalize(&(t - n * t.dot(&n))).unwrap_or(Vec3::new(n[1] - n[2], n[2] - n[0], n[0] - n[1]));
    let m = linalg::normalize(&m).unwrap();
    (n, m, n.cross(&m))
}

fn uniaxial(s: f64, n: &Vec3) -> QTensor {
    QTensor::from_uniaxial(s, n).unwrap()
}

fn traces(m: &Mat3) -> (f64, f64, f64) {
    let m2 = m * m;
    let m3 = m2 * m;
    let m4 = m2 * m2;
    (m2.trace(), m3.trace(), m4.trace())
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_1_algebraic_identities() {
    let mut c = Checks::new(1, "algebraic identity suite");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut beta_range, mut poly, mut quartic, mut am7, mut rt_sr, mut rt_cap, mut conv) = (0, 0, 0, 0, 0, 0, 0);
    let mut worst_poly = 0.0f64;
    let mut worst_quartic = 0.0f64;
    for _ in 0..100_000 {
        let q = random_q(&mut rng, 2.0);
        let m = q.to_matrix();
        let (t2, t3, t4) = traces(&m);

        let b = biaxiality(&q);
        let bu = biaxiality_unclamped(&q);
        if !(0.0..=1.0).contains(&b) || bu < -1e-10 || bu > 1.0 + 1e-10 {
            beta_range += 1;
        }

        let sr = decompose_sr(&q);
        let (s, r) = (sr.s, sr.r);
        let lhs = t2.powi(3) - 6.0 * t3 * t3;
        let e = rel(lhs, 2.0 * s * s * r * r * (s - r).powi(2), t2.powi(3));
        worst_poly = worst_poly.max(e);
        if e > 1e-9 || rel(biaxiality_poly(&q), lhs, t2.powi(3)) > 1e-9 {
            poly += 1;
        }

        let e = rel(t4, t2 * t2 / 2.0, t2 * t2);
        worst_quartic = worst_quartic.max(e);
        if e > 1e-12 {
            quartic += 1;
        }

        // β as a function of γ = r/s alone.
        let g = r / s;
        let closed = 27.0 * g * g * (1.0 - g).powi(2) / (4.0 * (1.0 - g + g * g).powi(3));
        if (closed - b).abs() > 1e-9 {
            am7 += 1;
        }

        let back = decompose_sr(&sr.reconstruct());
        if (back.s - s).abs() > 1e-10 || (back.r - r).abs() > 1e-10 || (sr.reconstruct() - q).norm() > 1e-10 {
            rt_sr += 1;
        }
        let cap = decompose_sr_cap(&q);
        let back = decompose_sr_cap(&cap.reconstruct());
        if (back.s - cap.s).abs() > 1e-10 || (back.r - cap.r).abs() > 1e-10 || (cap.reconstruct() - q).norm() > 1e-10 {
            rt_cap += 1;
        }
        if (r - 2.0 * cap.r).abs() > 1e-10 || (s - (cap.s + cap.r)).abs() > 1e-10 {
            conv += 1;
        }
    }
    c.check(beta_range == 0, || format!("β outside [0,1] on {beta_range} samples"));
    c.check(poly == 0, || {
        format!("β̃ identity off on {poly} samples (worst {worst_poly:e})")
    });
    c.check(quartic == 0, || {
        format!("tr Q⁴ identity off on {quartic} samples (worst {worst_quartic:e})")
    });
    c.check(am7 == 0, || format!("β(γ) closed form off on {am7} samples"));
    c.check(rt_sr == 0, || format!("(s,r) round trip off on {rt_sr} samples"));
    c.check(rt_cap == 0, || format!("(S,R) round trip off on {rt_cap} samples"));
    c.check(conv == 0, || format!("r = 2R, s = S + R off on {conv} samples"));
    c.finish();
}

#[test]
fn criterion_2_bulk_suite() {
    let mut c = Checks::new(2, "bulk suite");
    let p = unit_params(1.0);
    c.check(p.s_plus == 1.5 && p.s_minus == -1.0, || {
        format!("s± = {}, {}", p.s_plus, p.s_minus)
    });
    let e3 = Vec3::z();
    let fp = f_bulk(&uniaxial(p.s_plus, &e3), &p);
    let fm = f_bulk(&uniaxial(p.s_minus, &e3), &p);
    c.check((fp + 0.4375).abs() < 1e-12, || format!("f_B(s₊) = {fp}"));
    c.check((fm + 4.0 / 27.0).abs() < 1e-12, || format!("f_B(s₋) = {fm}"));
    c.check(fp < fm && fm < 0.0, || "ordering f_B(s₊) < f_B(s₋) < 0".into());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut negative, mut beta_viol, mut beta_n, mut sr_viol) = (0, 0, 0, 0);
    let mut worst_beta = 0.0f64;
    let mut worst_sr = 0.0f64;
    for _ in 0..100_000 {
        let q = random_q(&mut rng, 2.0);
        let ft = f_bulk_shifted(&q, &p);
        if ft < -1e-12 {
            negative += 1;
        }
        if q.norm() > 0.05 {
            beta_n += 1;
            let excess = bound_beta(&q, &p) - ft;
            if excess > 1e-9 {
                beta_viol += 1;
                worst_beta = worst_beta.max(excess);
            }
        }
        let excess = bound_sr(&q, &p).1 - ft;
        if excess > 1e-9 {
            sr_viol += 1;
            worst_sr = worst_sr.max(excess);
        }
    }
    c.check(negative == 0, || format!("f̃_B < 0 on {negative} samples"));
    c.check(beta_viol == 0, || {
        format!("bound_beta exceeds f̃_B on {beta_viol} of {beta_n} samples (worst by {worst_beta:.3e})")
    });
    c.check(sr_viol == 0, || {
        format!("bound_sr exceeds f̃_B on {sr_viol} samples (worst by {worst_sr:.3e})")
    });

    let mut rsneg = 0;
    for _ in 0..1_000 {
        let s = -rng.gen_range(0.01..3.0);
        let r = s * rng.gen_range(0.0..=0.5);
        let (n, m, _) = random_frame(&mut rng);
        let q = QTensor::from_sr(s, r, &n, &m);
        let (case, bound) = bound_sr(&q, &p);
        if case != BoundCase::III || !(bound > 0.0) || bound > f_bulk_shifted(&q, &p) + 1e-9 {
            rsneg += 1;
        }
    }
    c.check(rsneg == 0, || {
        format!("negative-(s,r) positivity fails on {rsneg} of 1000")
    });

    let mut on_min = 0.0f64;
    for _ in 0..1_000 {
        let n = random_unit(&mut rng);
        on_min = on_min.max(bulk::bulk_gradient(&uniaxial(p.s_plus, &n), &p).norm());
    }
    c.check(on_min < 1e-11, || format!("bulk_gradient on Q_min reaches {on_min:e}"));

    let mut fd_worst = 0.0f64;
    let step = 1e-5;
    for _ in 0..1_000 {
        let q = random_q(&mut rng, 1.0);
        let g = bulk::bulk_gradient(&q, &p);
        for i in 0..5 {
            let mut a = q;
            let mut b = q;
            a.0[i] += step;
            b.0[i] -= step;
            let fd = (f_bulk_shifted(&a, &p) - f_bulk_shifted(&b, &p)) / (2.0 * step);
            fd_worst = fd_worst.max(rel(g.0[i], fd, g.norm().max(1.0)));
        }
    }
    c.check(fd_worst < 1e-6, || {
        format!("bulk_gradient vs finite differences {fd_worst:e}")
    });
    c.finish();
}

#[test]
fn criterion_3_discrete_gradient_oracle() {
    let mut c = Checks::new(3, "discrete-gradient oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Grid3::unit_cube(5).unwrap();
    let p = MaterialParams::new(1.0, 1.0, 1.0, 0.3).unwrap();
    let f = QField::new(g, (0..g.len()).map(|_| random_q(&mut rng, 1.0)).collect()).unwrap();
    let grad = field::energy_gradient(&f, &p);
    let scale = grad.iter().map(QTensor::norm).fold(0.0, f64::max);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for idx in g.interior_indices() {
        for comp in 0..5 {
            let mut a = f.clone();
            let mut b = f.clone();
            a.values[idx].0[comp] += step;
            b.values[idx].0[comp] -= step;
            let fd = (field::total_energy(&a, &p) - field::total_energy(&b, &p)) / (2.0 * step);
            worst = worst.max(rel(grad[idx].0[comp], fd, grad[idx].0[comp].abs().max(1e-3 * scale)));
        }
    }
    c.check(worst < 1e-6, || {
        format!("gradient vs finite differences: worst relative {worst:e}")
    });
    let boundary_zero = g.boundary_indices().all(|i| grad[i] == QTensor::ZERO);
    c.check(boundary_zero, || "gradient nonzero on boundary nodes".into());

    let pl = MaterialParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
    for n in [4, 7, 11] {
        let g = Grid3::unit_cube(n).unwrap();
        // |∇Q|² = 1 + 1 + 4, so (L/2)∫|∇Q|² = 6 for L = 2.
        let lin = QField::from_fn(g, |x| QTensor([x[0] + 0.3, x[1], 0.0, 0.0, -2.0 * x[2]]));
        let e = field::elastic_energy(&lin, &pl);
        c.check((e - 6.0).abs() < 1e-12, || {
            format!("linear-field elastic energy {e} on {n}³")
        });
    }
    c.finish();
}

#[test]
fn criterion_4_constant_boundary_end_to_end() {
    let mut c = Checks::new(4, "constant-boundary end-to-end");
    let g = Grid3::unit_cube(16).unwrap();
    let p = unit_params(0.01);
    let qb = uniaxial(p.s_plus, &Vec3::new(0.0, 0.0, 1.0));
    let f0 = QField::constant(g, qb).with_interior(QTensor::ZERO);
    // The fixed step is within the explicit stability limit, so each update is
    // monotone and cannot overshoot the boundary data.
    let opts = SolverOptions {
        tol_residual: 1e-9,
        step_rule: StepRule::Fixed,
        ..SolverOptions::for_params(&p)
    };
    let (f, rep) = solve::minimize_q(&f0, &p, &opts);
    let energy = field::total_energy(&f, &p);
    let residual = field::el_residual(&f, &p).0;
    c.check(rep.converged, || format!("not converged: {:?}", rep.failure));
    c.check(energy < 1e-8, || format!("total energy {energy:e}"));
    c.check(residual < 1e-8, || format!("residual {residual:e}"));
    let dev = f.values.iter().map(|q| (*q - qb).norm()).fold(0.0, f64::max);
    c.check(dev < 1e-6, || format!("max nodal distance to Q_min {dev:e}"));
    // √(2/3)s₊ as carried by the boundary tensors; the separately rounded
    // closed form can sit one ulp below it.
    let bound = g.boundary_indices().map(|i| f.values[i].norm()).fold(0.0, f64::max);
    let max_norm = f.max_norm();
    c.check(max_norm <= bound, || {
        format!(
            "max |Q| = {max_norm} exceeds the boundary value {bound} (√(2/3)s₊ = {})",
            p.q_min_norm()
        )
    });
    let frozen = g.boundary_indices().all(|i| f.values[i] == f0.values[i]);
    c.check(frozen, || "boundary values changed".into());
    c.finish();
}

fn hedgehog_sweep() -> &'static SweepOutput {
    static SWEEP: OnceLock<SweepOutput> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let cfg = SweepConfig::new(Scenario::Hedgehog, 24).unwrap();
        asymptotics::run_sweep_with_fields(&cfg).unwrap()
    })
}

fn column(r: &ConvergenceReport, f: impl Fn(&asymptotics::ConvergenceRecord) -> f64) -> Vec<f64> {
    r.records.iter().map(f).collect()
}

#[test]
fn criterion_5_maximum_principle_under_stress() {
    let mut c = Checks::new(5, "maximum principle under stress");
    let out = hedgehog_sweep();
    let p = unit_params(1.0);
    let last = out.report.records.last().unwrap();
    let limit = p.q_min_norm() + 0.02 * p.s_plus;
    c.check(out.report.failure.is_none(), || {
        format!("sweep failed: {:?}", out.report.failure)
    });
    c.check(last.max_q_norm <= limit, || {
        format!("max |Q| = {} at L = {:e} exceeds {limit}", last.max_q_norm, last.l)
    });
    c.finish();
}

/// `max(values) ≤ 3 · min_k median(values[..=k])`.
fn uniform_band(values: &[f64]) -> (f64, f64) {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min_median = (1..=values.len())
        .map(|k| {
            let mut v = values[..k].to_vec();
            v.sort_by(f64::total_cmp);
            if k % 2 == 1 {
                v[k / 2]
            } else {
                0.5 * (v[k / 2 - 1] + v[k / 2])
            }
        })
        .fold(f64::INFINITY, f64::min);
    (max, 3.0 * min_median)
}

#[test]
fn criterion_6_l_sweep_rates() {
    let mut c = Checks::new(6, "L-sweep rates");
    let out = hedgehog_sweep();
    let r = &out.report;
    c.check(r.records.len() == 8 && r.failure.is_none(), || {
        format!("{} records, failure {:?}", r.records.len(), r.failure)
    });
    let l = column(r, |x| x.l);

    let bulk = column(r, |x| x.sup_k_bulk);
    let bad = bulk.windows(2).filter(|w| !(w[1] < 1.1 * w[0])).count();
    c.check(bad == 0, || format!("(a) sup_K f̃_B not decreasing: {bulk:?}"));

    let slopes = r.slopes.clone().unwrap_or_default();
    let within = |s: Option<f64>, lo: f64, hi: f64| s.is_some_and(|v| (lo..=hi).contains(&v));
    c.check(within(slopes.max_beta_k, 0.5, 1.5), || {
        format!("(b) slope of max_K β = {:?}, band [0.5, 1.5]", slopes.max_beta_k)
    });
    c.check(within(slopes.norm_deviation, 0.25, 0.75), || {
        format!(
            "(c) slope of sup_K ||Q| − √(2/3)s₊| = {:?}, band [0.25, 0.75]",
            slopes.norm_deviation
        )
    });

    let eig = column(r, |x| x.max_eig_err_sq_k);
    let ratio = stability_ratio(&l, &eig, 4);
    c.check(ratio < 3.0, || {
        format!("(d) eigenvalue error²/L varies by {ratio:.2}× over the last 4")
    });

    let star = column(r, |x| x.omega_star_measure);
    let lam = column(r, |x| x.omega_lambda_measure);
    let (rs, rl) = (stability_ratio(&l, &star, 4), stability_ratio(&l, &lam, 4));
    c.check(rs < 3.0, || format!("(e) |Ω*|/L varies by {rs:.2}× over the last 4"));
    c.check(rl < 3.0, || format!("(e) |Ω^λ|/L varies by {rl:.2}× over the last 4"));

    let bnd = column(r, |x| x.boundary_normal_deriv_sq);
    let (max, band) = uniform_band(&bnd);
    c.check(max <= band, || {
        format!("(f) boundary normal energy max {max:.3} above band {band:.3}")
    });

    let chain = r
        .records
        .iter()
        .filter(|x| !(x.elastic_energy <= x.energy + 1e-10 && x.energy <= x.limit_energy + 1e-10))
        .count();
    c.check(chain == 0, || format!("(g) energy chain broken on {chain} records"));
    c.finish();
}

#[test]
fn criterion_7_monotonicity_audit() {
    let mut c = Checks::new(7, "monotonicity audit");
    let rotation = asymptotics::run_sweep(&SweepConfig::new(Scenario::Rotation, 24).unwrap()).unwrap();
    for (name, report) in [("hedgehog", &hedgehog_sweep().report), ("rotation", &rotation)] {
        for rec in report.records.iter().filter(|x| x.converged) {
            c.check(rec.monotonicity_violation >= -rec.monotonicity_budget, || {
                format!(
                    "{name} L = {:e}: violation {:.3e} below −{:.3e}",
                    rec.l, rec.monotonicity_violation, rec.monotonicity_budget
                )
            });
        }
        c.check(report.records.iter().any(|x| x.converged), || {
            format!("{name}: no converged field")
        });
    }

    let g = Grid3::unit_cube(24).unwrap();
    let p = unit_params(0.01);
    let (centers, radii) = audit_geometry(&g);
    let constant = QField::constant(g, uniaxial(0.5, &Vec3::new(0.0, 1.0, 0.0)));
    let v = asymptotics::monotonicity_audit(&constant, &p, &centers, &radii).unwrap();
    c.check(v >= 0.0, || format!("constant field violation {v:e}"));
    let q_min = QField::constant(g, uniaxial(p.s_plus, &Vec3::new(0.0, 1.0, 0.0)));
    let v = asymptotics::monotonicity_audit(&q_min, &p, &centers, &radii).unwrap();
    c.check((0.0..1e-12).contains(&v), || format!("Q_min field violation {v:e}"));
    c.finish();
}

#[test]
fn criterion_8_projection_suite() {
    let mut c = Checks::new(8, "projection suite");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = unit_params(1.0);
    let (mut beaten, mut errors) = (0, 0);
    for _ in 0..1_000 {
        let big_s = rng.gen_range(0.05..3.0);
        let big_r = rng.gen_range(-0.99..0.99) * big_s / 8.0;
        let (n, m, pp) = random_frame(&mut rng);
        let q = QTensor::from_sr_cap(big_s, big_r, &n, &m, &pp);
        let Ok(proj) = project_to_uniaxial(&q, &p) else {
            errors += 1;
            continue;
        };
        let best = (q - proj).norm();
        let lost = (0..10_000).any(|_| {
            let a = random_unit(&mut rng);
            (q - uniaxial(p.s_plus, &a)).norm() < best - 1e-12
        });
        if lost {
            beaten += 1;
        }
    }
    c.check(errors == 0, || {
        format!("projection refused {errors} tensors with S > 8|R|")
    });
    c.check(beaten == 0, || {
        format!("a random direction beat the projection on {beaten} tensors")
    });

    let mut idem = 0.0f64;
    for _ in 0..1_000 {
        let q = uniaxial(p.s_plus, &random_unit(&mut rng));
        idem = idem.max((project_to_uniaxial(&q, &p).unwrap() - q).norm());
    }
    c.check(idem <= 1e-12, || format!("projection moves Q_min by {idem:e}"));
    c.finish();
}

#[test]
fn criterion_9_io_suite() {
    let mut c = Checks::new(9, "IO suite");
    for (name, text) in [
        ("hedgehog.toml", include_str!("../../../configs/hedgehog.toml")),
        ("constant.toml", include_str!("../../../configs/constant.toml")),
    ] {
        match parse_config(text) {
            Ok(cfg) => {
                let once = serialize_config(&cfg);
                let ok = parse_config(&once).is_ok_and(|again| again == cfg && serialize_config(&again) == once);
                c.check(ok, || format!("{name} does not round-trip"));
            }
            Err(e) => c.check(false, || format!("{name}: {e}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Grid3::new(6, 5, 7, Vec3::new(-0.5, 0.25, 1.0), 0.125).unwrap();
    let f = QField::new(g, (0..g.len()).map(|_| random_q(&mut rng, 1.5)).collect()).unwrap();
    let p = MaterialParams::new(0.7, 1.3, 0.9, 0.004).unwrap();
    let stamp = Stamp::new("0".repeat(64));
    let first = field_csv(&f, &p, &stamp);
    match parse_field_csv(&first) {
        Ok(back) => {
            c.check(back.field.values == f.values, || "CSV import changed values".into());
            let second = field_csv(&back.field, &back.params, &back.stamp);
            c.check(second == first, || "CSV export→import→export not byte-identical".into());
        }
        Err(e) => c.check(false, || format!("CSV import: {e}")),
    }

    match validate_vtk(&field_vtk(&f, &p, &stamp)) {
        Ok(s) => c.check(
            s.dims == [6, 5, 7] && s.vectors == ["director"] && s.scalars.len() == 5,
            || format!("VTK summary {s:?}"),
        ),
        Err(e) => c.check(false, || format!("VTK: {e}")),
    }
    c.finish();
}
