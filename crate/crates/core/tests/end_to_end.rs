//! Dataset generation through evaluation and model persistence, via files.

use sinodn_core::denoise::blindspot::{load_model, save_model};
use sinodn_core::denoise::{denoise_with_model, train_blind_spot, BlindSpotConfig};
use sinodn_core::harness::{
    export_report, load_report, plan_folds, run_experiment, ExperimentConfig, FoldStrategy, Method, ReportFormat, Space,
};
use sinodn_core::phantom::{generate_dataset, ConfigurationSpec, NoiseModel, ScanGeometry};
use sinodn_core::reconstruct::ReconConfig;
use sinodn_core::{DatasetManifest, Exec, SampleRef};

#[test]
fn generated_dataset_evaluates_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let specs = ConfigurationSpec::defaults(3).unwrap();
    let g = ScanGeometry::covering(64, 48);
    generate_dataset(&specs, &g, &NoiseModel::new(1000.0, 1), 4, dir.path(), Exec::default()).unwrap();
    let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
    manifest.validate(true).unwrap();
    assert_eq!(manifest.samples().len(), 12);

    let plan = plan_folds(&manifest, 3, FoldStrategy::PerConfiguration, None, 1).unwrap();
    let config = ExperimentConfig {
        methods: vec![Method::Identity, Method::Gaussian { sigma: 1.0 }],
        recon: ReconConfig {
            image_size: 32,
            ..ReconConfig::default()
        },
        seed: 1,
        exec: Exec::default(),
    };
    let report = run_experiment(&manifest, &plan, &config).unwrap();
    for fold in 0..3 {
        for space in Space::ALL {
            let identity = report.cell("identity", fold, space).unwrap();
            assert!(identity.samples.iter().all(|s| s.delta_psnr == 0.0));
            let gaussian = report.cell("gaussian", fold, space).unwrap();
            assert_eq!(gaussian.samples.len(), 4);
        }
    }

    let path = dir.path().join("report.json");
    export_report(&report, ReportFormat::Json, &path).unwrap();
    assert_eq!(load_report(&path).unwrap(), report);
}

#[test]
fn saved_model_denoises_identically() {
    let dir = tempfile::tempdir().unwrap();
    let specs = ConfigurationSpec::defaults(1).unwrap();
    let g = ScanGeometry::covering(64, 48);
    let manifest = generate_dataset(&specs, &g, &NoiseModel::new(1000.0, 2), 4, dir.path(), Exec::default()).unwrap();
    let data: Vec<_> = (0..4)
        .map(|index| manifest.load_sample(SampleRef { configuration: 0, index }).unwrap())
        .collect();
    let cfg = BlindSpotConfig {
        patch_size: 16,
        batch_size: 4,
        epochs: 2,
        steps_per_epoch: Some(2),
        patches_per_sinogram: 4,
        validation_patches: 8,
        base_channels: 4,
        ..BlindSpotConfig::default()
    };
    let (model, log) = train_blind_spot(&data, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 3);

    let path = dir.path().join("model.bsn");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let a = denoise_with_model(&model, &data[0]).unwrap();
    let b = denoise_with_model(&loaded, &data[0]).unwrap();
    assert_eq!(a.data, b.data);
}
