//! End-to-end runs of the `nvcav` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvcav::formats::{self, read_table};
use nvcav::provenance::Provenance;
use nvcav_core::cavity::{mode_volume_from_cubic_wavelengths, scan_wavelengths, CavityMode, DetuningScan, Lineshape, PlTraces};
use nvcav_core::kinetics::published_fit;
use nvcav_core::units::REDUCED_PLANCK;
use serde_json::Value;
use tempfile::TempDir;

fn nvcav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvcav"))
        .args(args)
        .current_dir(dir)
        .env_remove("NVCAV_CONFIG")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn mode_1524(lineshape: Lineshape) -> CavityMode {
    let lambda = 1524e-9;
    let omega = 2.0 * std::f64::consts::PI * 299_792_458.0 / lambda;
    let kappa = omega / 88_000.0;
    CavityMode {
        label: "1524nm".into(),
        lineshape,
        resonance_wavelength: lambda,
        kappa,
        kappa_ex: 0.3 * kappa,
        gamma_beta: if lineshape == Lineshape::Doublet { 1.5 * kappa } else { 0.0 },
        mode_volume: mode_volume_from_cubic_wavelengths(12.0, lambda, 2.4),
        group_index: 1.14,
    }
}

fn write_mode(dir: &Path, name: &str, m: &CavityMode) -> PathBuf {
    write(dir, name, &serde_json::to_string(m).unwrap())
}

#[test]
fn cavity_fit_recovers_doublet_q() {
    let dir = TempDir::new().unwrap();
    let truth = mode_1524(Lineshape::Doublet);
    let scan = DetuningScan::synthesize(&truth, scan_wavelengths(&truth, 6.0, 401), 1e-3);
    write(dir.path(), "scan.csv", &formats::write_scan(&Provenance::new("test"), &scan).unwrap());
    ok(&nvcav(
        dir.path(),
        &["cavity-fit", "scan.csv", "--model", "doublet", "--mode-volume-cubic", "12", "--group-index", "1.14", "-o", "mode.json"],
    ));
    let m = json(&dir.path().join("mode.json"));
    assert!(rel(m["Q_loaded"].as_f64().unwrap(), truth.loaded_q()) < 0.01, "{m}");
    assert!(rel(m["gamma_beta"].as_f64().unwrap(), truth.gamma_beta) < 0.01, "{m}");
    assert!(rel(m["mode_volume"].as_f64().unwrap(), truth.mode_volume) < 1e-6);
    assert_eq!(m["lineshape"], "doublet");
    assert_eq!(m["label"], "scan");
    assert!(m["provenance"]["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn flat_scan_has_no_resonance() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("wavelength_nm,transmission\n");
    for i in 0..50 {
        csv.push_str(&format!("{},{}\n", 1523.9 + 0.004 * i as f64, 0.98 + 1e-4 * (i % 3) as f64));
    }
    write(dir.path(), "flat.csv", &csv);
    let out = nvcav(dir.path(), &["cavity-fit", "flat.csv", "--mode-volume-cubic", "12", "--group-index", "1.14"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no resonance"), "{}", stderr(&out));
}

#[test]
fn malformed_header_names_the_column() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.csv", "wavelength_nm,transmision\n1524.0,0.9\n");
    let out = nvcav(dir.path(), &["cavity-fit", "bad.csv", "--mode-volume-cubic", "12", "--group-index", "1.14"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("'transmision'"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_input_code() {
    let dir = TempDir::new().unwrap();
    let out = nvcav(dir.path(), &["photons"]);
    assert_eq!(out.status.code(), Some(1));
    let out = nvcav(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn photons_at_critical_coupling_is_two() {
    let dir = TempDir::new().unwrap();
    let mut m = mode_1524(Lineshape::Singlet);
    m.kappa_ex = m.kappa / 2.0;
    write_mode(dir.path(), "mode.json", &m);
    let power = m.kappa * REDUCED_PLANCK * m.resonance_frequency();
    let stdout = ok(&nvcav(dir.path(), &["photons", "mode.json", "--power", &format!("{power:?}")]));
    let t = read_table(&stdout, &["power_W", "detuning_rad_s", "n_photons"], &[], "out").unwrap();
    assert!((t.f64(0, "n_photons").unwrap() - 2.0).abs() < 1e-12, "{stdout}");
    assert!(stdout.starts_with("# nvcav "));
}

#[test]
fn thresholds_report_has_the_derived_bounds() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(&nvcav(dir.path(), &["thresholds", "-o", "report.json"]));
    assert!(stdout.contains("K^i_25") && stdout.contains("Delta0 > 0.579"), "{stdout}");
    let r = json(&dir.path().join("report.json"));
    let t = &r["thresholds"];
    assert!((t["IP(1E->2E)"]["min"].as_f64().unwrap() - 2.27).abs() < 0.01);
    assert!((t["IP(3E->2A2)"]["min"].as_f64().unwrap() - 2.86).abs() < 0.01);
    assert!((r["delta0_lower_bound"]["966nm"].as_f64().unwrap() - 0.58).abs() < 0.01);
    assert!((t["R(4A2->3A2)"]["max"].as_f64().unwrap() - 2.01).abs() < 0.01);
    assert!(t["R(4A2->3A2)"]["min"].is_null());
    assert_eq!(r["active"], serde_json::json!(["K^i_25", "K^r_51", "K^r_74"]));
}

#[test]
fn xsection_from_published_1524_rates() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "coeffs.json", &serde_json::to_string(&published_fit()).unwrap());
    write_mode(dir.path(), "mode.json", &mode_1524(Lineshape::Singlet));
    write(dir.path(), "gamma.json", r#"{"gamma_1": 0.38, "gamma_2": [0.1, 0.2, 0.3]}"#);
    ok(&nvcav(dir.path(), &["xsection", "coeffs.json", "mode.json", "gamma.json", "-o", "sigma.json"]));
    let s = json(&dir.path().join("sigma.json"));
    assert_eq!(s["ir_label"], "1524nm");
    assert!(rel(s["sigma_1"]["value"].as_f64().unwrap(), 1.8e-26) < 0.1, "{s}");
    assert!(rel(s["sigma_2"]["value"].as_f64().unwrap(), 1.1e-57) < 0.1, "{s}");
    assert_eq!(s["sigma_2"]["gamma"], 0.2);
}

#[test]
fn grid_then_gamma() {
    let dir = TempDir::new().unwrap();
    ok(&nvcav(
        dir.path(),
        &[
            "grid", "--r-min", "1e-6", "--r-max", "3e-6", "--z-min=-0.8e-6", "--z-max", "0.8e-6", "--cell", "2e-8",
            "--ir-r0", "2e-6", "--ir-sigma-r", "0.2e-6", "--ir-sigma-z", "0.3e-6", "--nv-r0", "2e-6",
            "--nv-sigma-r", "0.3e-6", "--nv-sigma-z", "0.4e-6", "--excitation=1.5e-6,2.5e-6,-0.4e-6,0.4e-6", "-o", "grid.csv",
        ],
    ));
    let g1 = ok(&nvcav(dir.path(), &["gamma", "grid.csv", "--p", "1"]));
    let g2 = ok(&nvcav(dir.path(), &["gamma", "grid.csv", "--p", "2"]));
    let val = |s: &str| read_table(s, &["p", "gamma", "mode_volume_m3"], &[], "g").unwrap().f64(0, "gamma").unwrap();
    let (a, b) = (val(&g1), val(&g2));
    assert!(a > 0.0 && a <= 1.0 && b <= a && b >= a * a, "{a} {b}");
}

#[test]
fn sweep_anchor_and_determinism() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "run.toml",
        "seed = 3\n[sweep]\nir_label = \"966nm\"\ngreen_power_mW = 4.6\nn_ir = { values = [0.0] }\noutput = \"sweep.csv\"\n",
    );
    ok(&nvcav(dir.path(), &["sweep", "--config", "run.toml"]));
    let first = fs::read(dir.path().join("sweep.csv")).unwrap();
    ok(&nvcav(dir.path(), &["sweep", "--config", "run.toml"]));
    assert_eq!(first, fs::read(dir.path().join("sweep.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("# seed 3"));
    let t = read_table(&text, &formats::sweep_header(), &[], "sweep").unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.f64(0, "pl_nvm_norm").unwrap(), 1.0);
    assert_eq!(t.f64(0, "pl_nv0_norm").unwrap(), 1.0);
    let sum: f64 = formats::POPULATION_COLUMNS.iter().map(|c| t.f64(0, c).unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_reads_config_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "env.toml",
        "[sweep]\nir_label = \"966nm\"\ngreen_power_mW = 4.6\nn_ir = { log10_min = 0.0, log10_max = 5.0, points = 11 }\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_nvcav"))
        .arg("sweep")
        .current_dir(dir.path())
        .env("NVCAV_CONFIG", &cfg)
        .output()
        .unwrap();
    let t = read_table(&ok(&out), &formats::sweep_header(), &[], "sweep").unwrap();
    assert_eq!(t.rows.len(), 11);
    assert!(t.f64(10, "pl_nvm_norm").unwrap() < 0.2);
}

#[test]
fn config_errors_exit_with_input_code() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "typo.toml", "sede = 1\n");
    let out = nvcav(dir.path(), &["sweep", "--config", "typo.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sede"));
    let out = nvcav(dir.path(), &["sweep"]);
    assert_eq!(out.status.code(), Some(1), "missing nvcav.toml");
}

#[test]
fn disconnected_charge_states_are_degenerate() {
    let dir = TempDir::new().unwrap();
    let mut c = published_fit();
    c.green_per_mw.k_25_1g = 0.0;
    c.green_per_mw.k_51_1g = 0.0;
    c.green_per_mw.k_74_1g = 0.0;
    c.internal.k_56 = 0.0;
    c.internal.k_75 = 0.0;
    for ir in c.ir_per_photon.values_mut() {
        ir.k_25_2ir = 0.0;
        ir.k_74_1ir = 0.0;
    }
    write(dir.path(), "c.json", &serde_json::to_string(&c).unwrap());
    write(
        dir.path(),
        "run.toml",
        "coefficients = \"c.json\"\n[sweep]\nir_label = \"966nm\"\ngreen_power_mW = 1.0\nn_ir = { values = [1.0] }\n",
    );
    let out = nvcav(dir.path(), &["sweep", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

const CONTRAST: &str = "[contrast]\nir_label = \"1524nm\"\ngreen_power_mW = 4.1\nn_high = 1e6\nsamples_per_period = 200\n";

#[test]
fn contrast_falls_with_frequency_and_matches_dc() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "run.toml",
        &format!("{CONTRAST}extinction_dB = 25.0\neom_frequency_Hz = {{ values = [10.0, 1e5, 5e5, 1e6] }}\n"),
    );
    let stdout = ok(&nvcav(dir.path(), &["contrast", "--config", "run.toml"]));
    let t = read_table(&stdout, &formats::CONTRAST_COLUMNS, &[], "c").unwrap();
    let c = t.f64_column("contrast").unwrap();
    assert!(c[1] >= c[2] && c[2] >= c[3], "{c:?}");
    assert!(rel(c[0], t.f64(0, "dc_contrast").unwrap()) < 0.01);
    assert!((0..4).all(|i| t.flag(i, "settled").unwrap()));
}

#[test]
fn no_extinction_no_contrast() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "run.toml", &format!("{CONTRAST}extinction_dB = 0.0\neom_frequency_Hz = {{ values = [1e5] }}\n"));
    let t = read_table(&ok(&nvcav(dir.path(), &["contrast", "--config", "run.toml"])), &formats::CONTRAST_COLUMNS, &[], "c")
        .unwrap();
    assert!(t.f64(0, "contrast").unwrap().abs() < 1e-12);
    assert_eq!(t.f64(0, "dc_contrast").unwrap(), 0.0);
}

#[test]
fn timedomain_trace_follows_the_square_wave() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "run.toml",
        "[timedomain]\nir_label = \"1524nm\"\ngreen_power_mW = 4.1\nn_high = 1e6\nextinction_dB = 25.0\n\
         eom_frequency_Hz = 1e5\nperiods = 60\nsamples_per_period = 50\noutput = \"trace.csv\"\n",
    );
    ok(&nvcav(dir.path(), &["timedomain", "--config", "run.toml"]));
    let t = read_table(&fs::read_to_string(dir.path().join("trace.csv")).unwrap(), &formats::trace_header(), &[], "t").unwrap();
    assert_eq!(t.rows.len(), 3000);
    let pl = t.f64_column("pl_nvm_norm").unwrap();
    let n = t.f64_column("N_IR").unwrap();
    let last = 2950..3000;
    let mean = |hi: bool| {
        let v: Vec<f64> = last.clone().filter(|&i| (n[i] > 1e5) == hi).map(|i| pl[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) < mean(false), "IR-on half should be darker");
    assert!(t.flag(2999, "settled").unwrap());
    assert!(!t.flag(0, "settled").unwrap());
}

#[test]
fn synth_then_fit_recovers_coefficients() {
    let dir = TempDir::new().unwrap();
    let truth = published_fit();
    let mut start = truth.clone();
    start.green_per_mw.k_25_1g *= 1.3;
    start.green_per_mw.k_51_1g /= 1.3;
    start.green_per_mw.k_74_1g *= 1.3;
    start.internal.k_56 /= 1.3;
    start.internal.k_75 *= 1.3;
    let ir = start.ir_per_photon.get_mut("966nm").unwrap();
    ir.k_25_2ir /= 1.3;
    ir.k_74_1ir *= 1.3;
    write(dir.path(), "start.json", &serde_json::to_string(&start).unwrap());
    write(
        dir.path(),
        "synth.toml",
        "seed = 5\n[synth]\nir_label = \"966nm\"\ngreen_power_mW = [0.4, 1.3, 4.6]\n\
         n_ir = { log10_min = 0.0, log10_max = 5.0, points = 40 }\noutput = \"data.csv\"\n",
    );
    ok(&nvcav(dir.path(), &["synth", "--config", "synth.toml"]));
    let data = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(formats::read_datasets(&data, "d").unwrap().len(), 3);
    write(
        dir.path(),
        "fit.toml",
        "seed = 1\ncoefficients = \"start.json\"\n[fit]\ndatasets = [\"data.csv\"]\nrestarts = 2\n\
         free = [\"K^i_25,1-G\", \"K^r_51,1-G\", \"K^r_74,1-G\", \"K_56\", \"K_75\", \"K^i_25,2-IR [966nm]\", \"K^r_74,1-IR [966nm]\"]\n",
    );
    ok(&nvcav(dir.path(), &["fit", "--config", "fit.toml", "-o", "fit.json"]));
    let f = json(&dir.path().join("fit.json"));
    assert_eq!(f["fit"]["converged"], true);
    let c = &f["coefficients"];
    let check = |v: &Value, want: f64| {
        assert_eq!(v["fitted"], true, "{v}");
        assert!(rel(v["value"].as_f64().unwrap(), want) < 0.01, "{v} vs {want}");
    };
    check(&c["green_per_mW"]["K^i_25,1-G"], truth.green_per_mw.k_25_1g);
    check(&c["internal"]["K_56"], truth.internal.k_56);
    check(&c["ir_per_photon"]["966nm"]["K^r_74,1-IR"], 22.8);
    assert_eq!(c["internal"]["K_41"]["fitted"], false);
    assert_eq!(c["ir_per_photon"]["1524nm"]["K^i_25,2-IR"]["fitted"], false);
    assert_eq!(f["provenance"]["inputs"].as_array().unwrap().len(), 3);

    // the fit output is itself a coefficient file
    let coeffs = formats::read_coefficients(&fs::read_to_string(dir.path().join("fit.json")).unwrap(), "fit").unwrap();
    assert!(rel(coeffs.internal.k_75, truth.internal.k_75) < 0.01);
}

#[test]
fn compile_scans_with_sidecars() {
    let dir = TempDir::new().unwrap();
    let mode = mode_1524(Lineshape::Singlet);
    write_mode(dir.path(), "mode.json", &mode);
    let mut scan = DetuningScan::synthesize(&mode, scan_wavelengths(&mode, 5.0, 41), 1e-3);
    scan.pl = Some(PlTraces {
        nv_zero: scan.transmission.iter().map(|t| 1000.0 * (2.0 - t)).collect(),
        nv_minus: scan.transmission.iter().map(|t| 2000.0 * t).collect(),
        reference: None,
    });
    write(dir.path(), "s1.csv", &formats::write_scan(&Provenance::new("t"), &scan).unwrap());
    let out = nvcav(dir.path(), &["compile", "s1.csv", "--mode", "mode.json", "--ir-label", "1524nm", "--green-power-mW", "4.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("s1.json"), "{}", stderr(&out));
    write(dir.path(), "s1.json", r#"{"input_power_mW": 1.0, "taper_transmission_efficiency": 0.44}"#);
    let stdout = ok(&nvcav(
        dir.path(),
        &["compile", "s1.csv", "--mode", "mode.json", "--ir-label", "1524nm", "--green-power-mW", "4.1"],
    ));
    let sets = formats::read_datasets(&stdout, "d").unwrap();
    assert_eq!(sets.len(), 1);
    assert_eq!(sets[0].points.len(), 82);
    let peak = sets[0].points.iter().map(|p| p.n_ir).fold(0.0, f64::max);
    let expected = nvcav_core::cavity::photons(&mode, 0.0, 0.44e-3, mode.photon_energy());
    assert!(rel(peak, expected) < 0.01, "{peak} vs {expected}");
}
