use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_fbdg");
const TAU: f64 = std::f64::consts::TAU;

fn bessel_series(n: u32, x: f64) -> f64 {
    let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..80 {
        term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
        sum += term;
    }
    sum
}

fn j0_inverse_oracle(y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.404_825_557_695_773);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_series(0, mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn fbdg(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .arg("--out")
            .arg(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.fbdg(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    fn with_config(&self, command: &str, config: &str, extra: &[&str]) -> Output {
        let cfg = self.write(&format!("{command}.toml"), config);
        let mut args = vec![command, "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        self.fbdg(&args)
    }

    fn csv(&self, name: &str) -> Csv {
        Csv::read(&self.path(name))
    }
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        assert!(!text.contains('\r'), "CRLF in {}", path.display());
        let mut r = csv::Reader::from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
            .collect();
        let csv = Self { header, rows };
        csv.check_units();
        csv
    }

    fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    fn get(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.col(name)]
    }

    fn num(&self, row: usize, name: &str) -> f64 {
        self.get(row, name)
            .parse()
            .unwrap_or_else(|_| panic!("{name} row {row}: `{}`", self.get(row, name)))
    }

    fn where_eq(&self, name: &str, value: &str) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.get(i, name) == value)
            .collect()
    }

    /// Frequencies carry `_hz` or `_rad_s`, rates `_per_s`.
    fn check_units(&self) {
        const FREQUENCY: &[&str] = &["omega", "j_", "g_rad", "g_hz", "gj_over_omega_"];
        for h in &self.header {
            if h == "g_over_omega" || h == "g_exceeds_omega" || h == "j" {
                continue;
            }
            if FREQUENCY.iter().any(|p| h.starts_with(p)) {
                assert!(
                    h.ends_with("_hz") || h.ends_with("_rad_s"),
                    "frequency column `{h}` lacks a unit"
                );
            }
            if h.contains("rate") || h.starts_with("gamma") {
                assert!(h.ends_with("_per_s"), "rate column `{h}` lacks a unit");
            }
        }
        for row in &self.rows {
            assert_eq!(row.len(), self.header.len());
            for (h, cell) in self.header.iter().zip(row) {
                if (h.ends_with("_hz") || h.ends_with("_rad_s")) && !cell.is_empty() {
                    let significant = cell
                        .trim_start_matches('-')
                        .split('e')
                        .next()
                        .unwrap()
                        .replace('.', "");
                    assert!(
                        significant.trim_start_matches('0').len() <= 12,
                        "{h} = {cell}"
                    );
                }
            }
        }
        for (i, h) in self.header.iter().enumerate() {
            if let Some(base) = h.strip_suffix("_hz") {
                let Some(j) = self
                    .header
                    .iter()
                    .position(|x| *x == format!("{base}_rad_s"))
                else {
                    continue;
                };
                for row in &self.rows {
                    if let (Ok(hz), Ok(rad)) = (row[i].parse::<f64>(), row[j].parse::<f64>()) {
                        assert!(
                            (rad - TAU * hz).abs() <= 1e-10 * rad.abs().max(1e-300),
                            "{h}: {hz} Hz vs {rad} rad/s"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn omega_scan_marks_the_cusps() {
    let run = Run::new();
    let cfg = run.write(
        "c.toml",
        "[drive]\nk0 = 1.25\n[scan]\nvariable = \"omega\"\nunit = \"hz\"\nstart = 200.0\nstop = 1200.0\ncount = 11\n",
    );
    run.ok(&[
        "rates",
        "--preset",
        "paper-11ER",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let t = run.csv("rates.csv");
    assert_eq!(t.rows.len(), 33);
    let edge = 4.0 * 50.0 * bessel_series(0, 1.25);
    let x_cusp = (edge * (edge + 1400.0)).sqrt();
    let d_cusp = (2.0 * edge * (2.0 * edge + 1400.0)).sqrt();
    for (name, expected, reported) in [
        ("linear_x", x_cusp, 444.0),
        ("circular", x_cusp, 444.0),
        ("diagonal", d_cusp, 655.0),
    ] {
        for i in t.where_eq("trajectory", name) {
            let wc = t.num(i, "omega_c_hz");
            assert!((wc - expected).abs() < 1e-6, "{name}: {wc} vs {expected}");
            assert!((wc / reported - 1.0).abs() < 0.01);
            let regime = if t.num(i, "omega_hz") < wc {
                "low_freq"
            } else {
                "high_freq"
            };
            assert_eq!(t.get(i, "regime"), regime);
        }
    }
}

#[test]
fn amplitude_scan_follows_j2_and_flags_inverted_band() {
    let run = Run::new();
    let cfg = run.write(
        "c.toml",
        "[drive]\nomega_hz = 2500.0\n[scan]\nvariable = \"k0\"\nstart = 0.1\nstop = 3.0\ncount = 30\n[rates]\ntrajectories = [\"linear_x\"]\n",
    );
    run.ok(&[
        "rates",
        "--preset",
        "paper-11ER",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let t = run.csv("rates.csv");
    assert_eq!(t.rows.len(), 30);
    let mut inverted = 0;
    for i in 0..t.rows.len() {
        let k0 = t.num(i, "k0");
        if k0 >= 2.404_825_557_695_773 {
            assert_eq!(t.get(i, "inverted_band"), "1");
            assert!(t.get(i, "gamma_mum_per_s").is_empty());
            inverted += 1;
            continue;
        }
        let expected = 8.0 * TAU * 50.0 * bessel_series(2, k0).abs() * 700.0 / 2500.0;
        let got = t.num(i, "gamma_mum_per_s") - t.num(i, "gamma0_per_s");
        assert!(
            (got / expected - 1.0).abs() < 1e-10,
            "K0 = {k0}: {got} vs {expected}"
        );
    }
    assert!(inverted > 0);
}

#[test]
fn gj_over_omega_scan_is_a_line_through_the_background() {
    let run = Run::new();
    let cfg = run.write(
        "c.toml",
        "[drive]\nk0 = 2.1\n[scan]\nvariable = \"gj_over_omega\"\nunit = \"hz\"\nvalues = [5.0, 10.0, 20.0, 40.0]\n",
    );
    run.ok(&[
        "rates",
        "--preset",
        "paper-11ER",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let t = run.csv("rates.csv");
    for tr in ["linear_x", "diagonal", "circular"] {
        let rows = t.where_eq("trajectory", tr);
        let slope0 =
            (t.num(rows[0], "gamma_mum_per_s") - 1.0) / t.num(rows[0], "gj_over_omega_rad_s");
        for &i in &rows {
            assert_eq!(t.get(i, "regime"), "high_freq");
            assert!(
                (t.num(i, "gj_over_omega_hz") * TAU / t.num(i, "gj_over_omega_rad_s") - 1.0).abs()
                    < 1e-11
            );
            let slope = (t.num(i, "gamma_mum_per_s") - 1.0) / t.num(i, "gj_over_omega_rad_s");
            assert!((slope / slope0 - 1.0).abs() < 1e-10, "{tr}");
        }
    }
}

#[test]
fn critical_amplitude_table() {
    let run = Run::new();
    let cfg = run.write(
        "c.toml",
        "[lattice]\ng_hz = 700.0\n[scan]\nvariable = \"omega\"\nunit = \"hz\"\nvalues = [500.0, 700.0, 2500.0, 1e9]\n",
    );
    run.ok(&["k0c", "--config", cfg.to_str().unwrap()]);
    let t = run.csv("k0c.csv");
    assert_eq!(t.get(0, "g_exceeds_omega"), "1");
    assert!(t.get(0, "k0c").is_empty());
    assert!(t.num(1, "k0c").abs() < 1e-9);
    assert!((t.num(2, "k0c") - j0_inverse_oracle(0.28)).abs() < 1e-9);
    assert!((t.num(2, "k0c") - 1.9031).abs() < 1e-4);
    assert!((t.num(3, "k0c") - t.num(3, "k0c_asymptote")).abs() < 1e-5);
    assert!((t.num(3, "k0c_asymptote") - 2.404826).abs() < 1e-6);
}

const BDG_CONFIG: &str = "[lattice]\nj_rad_s = 1.0\ng_rad_s = 12.0\n[drive]\n[scan]\nvariable = \"k0\"\nvalues = [0.0, 1.25]\n\
[bdg]\ngrid = [12, 12, 1]\nlz = 1.0\nsteps_per_period = 64\nn_cycles = 24\n";

#[test]
fn bdg_scan_is_worker_count_independent() {
    let run = Run::new();
    let cfg = run.write(
        "b.toml",
        &BDG_CONFIG.replace("[drive]\n", "[drive]\nomega_rad_s = 10.0\n"),
    );
    let c = cfg.to_str().unwrap();
    run.ok(&["bdg", "--config", c, "--workers", "1"]);
    let serial = fs::read(run.path("bdg.csv")).unwrap();
    run.ok(&["bdg", "--config", c, "--workers", "4"]);
    assert_eq!(serial, fs::read(run.path("bdg.csv")).unwrap());
    let t = run.csv("bdg.csv");
    assert!(
        t.num(0, "extracted_rate_per_s").abs() < 1e-8,
        "undriven rate {}",
        t.get(0, "extracted_rate_per_s")
    );
    assert_eq!(t.num(0, "analytic_rate_per_s"), 0.0);
    let ratio = t.num(1, "extracted_over_analytic");
    assert!((ratio - 1.0).abs() < 0.15, "ratio {ratio}");
    assert!(t.num(1, "fit_window_end_s") > t.num(1, "fit_window_start_s"));
    assert_eq!(t.get(1, "status"), "ok");
}

#[test]
fn manifest_records_hashes_and_reproduces_outputs() {
    let run = Run::new();
    let cfg = run.write(
        "k.toml",
        "[lattice]\ng_hz = 700.0\n[drive]\nomega_hz = 2500.0\n",
    );
    let c = cfg.to_str().unwrap();
    run.ok(&["k0c", "--config", c, "--seed", "5"]);
    let first = fs::read_to_string(run.path("k0c.manifest.toml")).unwrap();
    run.ok(&["k0c", "--config", c, "--seed", "6"]);
    let second = fs::read_to_string(run.path("k0c.manifest.toml")).unwrap();
    let line = |text: &str, key: &str| {
        text.lines()
            .find(|l| l.starts_with(key))
            .unwrap()
            .to_string()
    };
    assert_eq!(
        line(&first, "config_sha256"),
        line(&second, "config_sha256")
    );
    assert_eq!(line(&first, "sha256"), line(&second, "sha256"));
    assert_eq!(line(&first, "master_seed"), "master_seed = 5");
    assert!(first.contains("fbdg-core") && first.contains("file = \"k0c.csv\""));
    assert!(first.contains("started_unix_s") && first.contains("finished_unix_s"));
}

const TWA_BASE: &str = "[lattice]\nj_rad_s = 1.0\ng_rad_s = 12.0\n[drive]\ntrajectory = \"linear_x\"\nomega_rad_s = 20.0\n";

#[test]
fn noiseless_undriven_condensate_stays_condensed() {
    let run = Run::new();
    let cfg = format!("{TWA_BASE}k0 = 0.0\n[twa]\ngrid = [8, 8, 2]\nlz = 2.0\nn_cycles = 10\nrealizations = 1\nnoise_variance = 0.0\n");
    let out = run.with_config("twa", &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = run.csv("twa_trace_000.csv");
    for i in 0..t.rows.len() {
        assert!((t.num(i, "condensed_fraction") - 1.0).abs() < 1e-12);
        assert!(t.num(i, "n_ex").abs() < 1e-12);
    }
}

#[test]
fn twa_outputs_do_not_depend_on_workers_and_refit() {
    let run = Run::new();
    let cfg = format!(
        "{TWA_BASE}k0 = 2.1\n[twa]\ngrid = [8, 8, 2]\nlz = 2.0\nn_cycles = 12\nrealizations = 4\nbootstrap_resamples = 20\n"
    );
    let c = run.write("t.toml", &cfg);
    let c = c.to_str().unwrap();
    run.ok(&["twa", "--config", c, "--workers", "1"]);
    let serial = (
        fs::read(run.path("twa.csv")).unwrap(),
        fs::read(run.path("twa_trace_000.csv")).unwrap(),
    );
    run.ok(&["twa", "--config", c, "--workers", "3"]);
    assert_eq!(serial.0, fs::read(run.path("twa.csv")).unwrap());
    assert_eq!(serial.1, fs::read(run.path("twa_trace_000.csv")).unwrap());
    let trace = run.csv("twa_trace_000.csv");
    assert_eq!(trace.rows.len(), 13);
    for i in 0..trace.rows.len() {
        assert!(trace.num(i, "n_ex_std") >= 0.0);
    }

    let fit_cfg = run.write(
        "f.toml",
        "[fit]\ntime_column = \"t_s\"\nvalue_column = \"condensed_fraction\"\n",
    );
    let trace_path = run.path("twa_trace_000.csv");
    run.ok(&[
        "fit",
        trace_path.to_str().unwrap(),
        "--config",
        fit_cfg.to_str().unwrap(),
    ]);
    let fit = run.csv("fit.csv");
    assert_eq!(fit.get(0, "samples"), "13");
    assert_eq!(fit.num(0, "window_start_s"), 0.0);
}

#[test]
fn g_scan_writes_a_scaling_table() {
    let run = Run::new();
    let cfg = "[lattice]\nj_rad_s = 1.0\n[drive]\nk0 = 2.1\nomega_rad_s = 20.0\n[scan]\nvariable = \"g\"\nunit = \"rad_s\"\nvalues = [8.0, 16.0]\n\
[twa]\ngrid = [8, 8, 4]\nlz = 4.5\nn_cycles = 40\nrealizations = 4\nbootstrap_resamples = 20\n";
    let out = run.with_config("twa", cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = run.csv("twa.csv");
    assert_eq!(summary.rows.len(), 2);
    assert!(run.path("twa_trace_001.csv").exists());
    let scaling = run.csv("twa_g_scaling.csv");
    assert_eq!(scaling.header, ["quantity", "loglog_slope_vs_g", "points"]);
}

const ENDPHASE_BASE: &str = "[lattice]\nj_rad_s = 1.0\ng_rad_s = 14.0\n[drive]\ntrajectory = \"diagonal\"\nomega_rad_s = 40.0\n";

#[test]
fn abrupt_stop_at_zero_phase_excites_more_than_at_quarter_period() {
    let run = Run::new();
    let cfg = format!(
        "{ENDPHASE_BASE}k0 = 1.25\n[endphase]\nphases = 4\nrealizations = 6\ngrid = [12, 12, 1]\n"
    );
    let out = run.with_config("endphase", &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = run.csv("endphase.csv");
    assert_eq!(t.rows.len(), 5);
    assert_eq!(t.get(4, "variant"), "ramped");
    assert!(t.get(4, "end_phase").is_empty());
    assert!(t.num(0, "n_ex_after_hold") > t.num(1, "n_ex_after_hold"));
    // Every variant drives for the same time up to the stop phase offset.
    assert!((t.num(4, "stop_time_s") - t.num(3, "stop_time_s")).abs() < 1e-12);
}

#[test]
fn undriven_end_phase_study_stays_unexcited() {
    let run = Run::new();
    let cfg = format!("{ENDPHASE_BASE}k0 = 0.0\n[endphase]\nphases = 4\nrealizations = 1\nnoise_variance = 0.0\ngrid = [8, 8, 1]\n");
    let out = run.with_config("endphase", &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = run.csv("endphase.csv");
    for i in 0..t.rows.len() {
        assert!(t.num(i, "n_ex_after_hold").abs() < 1e-12);
        assert!(t.num(i, "n_ex_at_stop").abs() < 1e-12);
    }
}

#[test]
fn fit_recovers_a_synthetic_exponential() {
    let run = Run::new();
    let mut text = String::from("t_s,condensed_fraction\n");
    for k in 0..40 {
        let t = 0.05 * k as f64;
        text.push_str(&format!("{t},{}\n", 0.9 * (-0.6 * t).exp()));
    }
    let input = run.write("trace.csv", &text);
    run.ok(&["fit", input.to_str().unwrap()]);
    let t = run.csv("fit.csv");
    assert_eq!(t.get(0, "method"), "exponential");
    assert!((t.num(0, "rate_per_s") - 0.6).abs() < 1e-9);
    assert!((t.num(0, "amplitude") - 0.9).abs() < 1e-9);
}

#[test]
fn fit_picks_the_exponential_for_noisy_decay() {
    use rand_like::Lcg;
    let run = Run::new();
    let mut rng = Lcg(12345);
    let mut text = String::from("t_s,condensed_fraction\n");
    for k in 0..20 {
        let t = 0.1 * k as f64;
        let noise = 1.0 + 0.03 * (2.0 * rng.next() - 1.0);
        text.push_str(&format!("{t},{}\n", 0.85 * (-0.5 * t).exp() * noise));
    }
    let input = run.write("decay.csv", &text);
    run.ok(&["fit", input.to_str().unwrap()]);
    let t = run.csv("fit.csv");
    assert_eq!(t.get(0, "method"), "exponential");
    assert!((t.num(0, "rate_per_s") / 0.5 - 1.0).abs() < 0.1);
}

mod rand_like {
    /// Deterministic uniform numbers in [0, 1) for test data.
    pub struct Lcg(pub u64);

    impl Lcg {
        pub fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }
}

#[test]
fn fit_rejects_bad_input_with_line_numbers() {
    let run = Run::new();
    let backwards = run.write("back.csv", "t,y\n0,1\n0.2,0.9\n0.1,0.8\n");
    let out = run.fbdg(&["fit", backwards.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    let garbage = run.write("bad.csv", "t,y\n0,1\n0.1,abc\n");
    let out = run.fbdg(&["fit", garbage.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let ragged = run.write("ragged.csv", "t,y\n0,1\n0.1\n");
    assert_eq!(
        run.fbdg(&["fit", ragged.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn exit_codes_separate_config_and_numerical_failures() {
    let run = Run::new();
    assert_eq!(
        run.with_config("rates", "[lattice]\nbogus = 1\n", &[])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run.fbdg(&["rates", "--preset", "nope"]).status.code(),
        Some(2)
    );
    let clash = "[lattice]\nj_hz = 50.0\ng_hz = 700.0\n[drive]\nk0 = 1.0\nomega_hz = 900.0\n[scan]\nvariable = \"k0\"\nvalues = [1.0]\n";
    assert_eq!(run.with_config("rates", clash, &[]).status.code(), Some(2));
    let unsorted = "[lattice]\nj_hz = 50.0\ng_hz = 700.0\n[drive]\nomega_hz = 900.0\n[scan]\nvariable = \"k0\"\nvalues = [1.0, 0.5, 2.0]\n";
    assert_eq!(
        run.with_config("rates", unsorted, &[]).status.code(),
        Some(2)
    );
    let unitless = "[lattice]\nj_hz = 50.0\ng_hz = 700.0\n[drive]\nk0 = 1.0\n[scan]\nvariable = \"omega\"\nvalues = [900.0]\n";
    assert_eq!(
        run.with_config("rates", unitless, &[]).status.code(),
        Some(2)
    );
    assert_eq!(run.fbdg(&["bdg", "--workers", "0"]).status.code(), Some(2));
    assert_eq!(run.fbdg(&["frobnicate"]).status.code(), Some(2));

    let short = run.write("short.csv", "t,y\n0,1\n0.1,0.9\n0.2,0.8\n");
    assert_eq!(
        run.fbdg(&["fit", short.to_str().unwrap()]).status.code(),
        Some(3)
    );
}

#[test]
fn preset_is_the_experimental_calibration() {
    let run = Run::new();
    let cfg = run.write("c.toml", "[drive]\nk0 = 1.25\nomega_hz = 2500.0\n");
    run.ok(&[
        "rates",
        "--preset",
        "paper-11ER",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let t = run.csv("rates.csv");
    assert_eq!(t.num(0, "j_hz"), 50.0);
    assert_eq!(t.num(0, "g_hz"), 700.0);
    assert_eq!(t.num(0, "gamma0_per_s"), 1.0);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let table: toml::Table = text
            .parse()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let loaded = fbdg_cli::config::from_table(table).unwrap();
        fbdg_cli::config::Config::resolve(loaded, None)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
