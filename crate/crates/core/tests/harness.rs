use ppn_core::harness::{
    benchmark_instance, cell_config, export_report, fit_phantom_prior, run_benchmark, sweep_nfe, ExperimentPlan,
    PriorSettings, SweepMetric,
};
use ppn_core::kspace::max_kspace_residual;
use ppn_core::samplers::{reconstruct, SamplerKind};
use ppn_core::schedule::build_cosine_schedule;

fn small_plan() -> ExperimentPlan {
    ExperimentPlan {
        methods: vec![SamplerKind::Ppn, SamplerKind::Ddnm, SamplerKind::MedScore, SamplerKind::Dps],
        accelerations: vec![4, 8],
        nfes: vec![8],
        trials: 5,
        size: 32,
        workers: 3,
        prior: PriorSettings { train_size: 60, rank: 8, diffusion_steps: 200, ..Default::default() },
        ..ExperimentPlan::default()
    }
}

#[test]
fn benchmark_output_is_deterministic() {
    let plan = small_plan();
    let prior = fit_phantom_prior(plan.size, &plan.prior).unwrap();
    let s = build_cosine_schedule(plan.prior.diffusion_steps, 0.008).unwrap();
    let csv = |workers| {
        let plan = ExperimentPlan { workers, ..plan.clone() };
        let mut buf = Vec::new();
        run_benchmark(&plan, &prior, &s).unwrap().write_csv(&mut buf, false).unwrap();
        buf
    };
    let first = csv(3);
    assert_eq!(first, csv(3));
    assert_eq!(first, csv(1));
    let text = String::from_utf8(first).unwrap();
    // 4 methods x 2 accelerations x 5 trials, plus zero-filled rows.
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 5 + 2 * 5);
    assert!(text.starts_with("method,R,S,trial,psnr,ssim,residual,error\n"));
}

#[test]
fn benchmark_rows_satisfy_consistency_contract() {
    let plan = small_plan();
    let prior = fit_phantom_prior(plan.size, &plan.prior).unwrap();
    let s = build_cosine_schedule(plan.prior.diffusion_steps, 0.008).unwrap();
    let res = run_benchmark(&plan, &prior, &s).unwrap();
    assert!(res.rows.iter().all(|r| !r.failed()));
    for r in res.rows.iter().filter(|r| matches!(r.method.as_str(), "ppn" | "ddnm" | "medscore" | "zf")) {
        assert!(r.residual <= 1e-8, "{r:?}");
    }
    // Recompute every tenth sampler row from scratch.
    for r in res.rows.iter().filter(|r| r.method != "zf").step_by(10) {
        let kind: SamplerKind = r.method.parse().unwrap();
        let (_, y) = benchmark_instance(&plan, r.accel, r.trial).unwrap();
        let out = reconstruct(&y, &cell_config(&plan, kind, r.nfe, r.trial), &prior.prior, &s).unwrap();
        let residual = max_kspace_residual(out.image.view(), &y).unwrap();
        assert_eq!(residual, r.residual);
        if kind != SamplerKind::Dps {
            assert!(residual <= 1e-8);
        }
    }
    let md = export_report(&res).unwrap();
    assert_eq!(md.lines().count(), 2 + 5);
}

#[test]
fn sweep_emits_curves_and_rejects_single_nfe() {
    let mut plan = small_plan();
    plan.methods = vec![SamplerKind::Ppn, SamplerKind::Ddnm];
    plan.accelerations = vec![4];
    plan.trials = 3;
    plan.nfes = vec![4];
    let prior = fit_phantom_prior(plan.size, &plan.prior).unwrap();
    let s = build_cosine_schedule(plan.prior.diffusion_steps, 0.008).unwrap();
    assert!(sweep_nfe(&plan, &prior, &s).is_err());

    plan.nfes = vec![4, 16];
    let sweep = sweep_nfe(&plan, &prior, &s).unwrap();
    assert_eq!(sweep.cells.len(), 4);
    for metric in [SweepMetric::Psnr, SweepMetric::Ssim] {
        let svg = sweep.svg(metric);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(lines, 2);
        let bands = doc.descendants().filter(|n| n.has_tag_name("polygon")).count();
        assert_eq!(bands, 2);
    }
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);

    plan.accelerations = vec![4, 8];
    assert!(sweep_nfe(&plan, &prior, &s).is_err());
}

#[test]
fn plan_file_round_trip() {
    let plan = ExperimentPlan::parse(
        "methods = ppn\naccelerations = 4\nnfes = 10, 50\ntrials = 2\nsize = 32\ntrain_size = 40\nrank = 8\n",
    )
    .unwrap();
    assert_eq!(plan.nfes, vec![10, 50]);
    assert_eq!(plan.prior.rank, 8);
    assert_eq!(plan.total_runs(), 4);
}
