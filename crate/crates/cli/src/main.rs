//! `slidefocus`: reproducible experiments for the color-multiplexed
//! autofocus pipeline. Every subcommand derives all randomness from
//! `--seed`, so reruns produce byte-identical CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slidefocus::bench::{bench_csv, format_bench, run_bench};
use slidefocus::config::{apply_overrides, load_settings, parse_override, Settings};
use slidefocus::crosstalk;
use slidefocus::focus::{fit_calibration, CalibrationCurve};
use slidefocus::image::io::{channel_paths, load_plane, save_plane};
use slidefocus::image::{ColorFrame, ImagePlane};
use slidefocus::optics::{render_brightfield, render_multiplexed, render_zstack_at};
use slidefocus::phantom::{self, PhantomParams, PhantomStyle};
use slidefocus::rng;
use slidefocus::scan::{export_focus_map, run_scan_with_sink, write_tile_csv, TileRecord};
use slidefocus::shift::{
    correlation_profile, default_max_lag, detect_layers, estimate_shift, mi_shift_with,
    xcorr_shift, Method, DEFAULT_MI_BINS, DEFAULT_MI_ITERATIONS,
};

#[derive(Parser)]
#[command(
    name = "slidefocus",
    version,
    about = "Color-multiplexed single-shot autofocus experiments"
)]
struct Cli {
    /// TOML settings file ([optics]/[scan]/[timing]/[bench] sections).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; defaults to the configured optics rng_seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Override one settings field, e.g. --set scan.rows=12 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic slide and write its red/green ground truth.
    Phantom(PhantomArgs),
    /// Render multiplexed, brightfield, or z-stack frames of a phantom.
    Render(RenderArgs),
    /// Sweep defocus, estimate shifts, fit and store the calibration line.
    Calibrate(CalibrateArgs),
    /// Estimate the red/green shift of a stored frame pair, print JSON.
    Shift(ShiftArgs),
    /// Run a full serpentine scan against a stored calibration curve.
    Scan(ScanArgs),
    /// Compare methods across subsample ratios on a shared frame set.
    Bench(BenchArgs),
    /// Correlation profile and detected layer peaks of a two-layer frame.
    Layers(LayersArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    style: Option<PhantomStyle>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Fraction of features with inverted green response.
    #[arg(long)]
    contrast_split: Option<f64>,
    /// Layer separation for two_layer phantoms, px.
    #[arg(long)]
    layer_sep_px: Option<f64>,
    /// Basename of the written channel images.
    #[arg(long, default_value = "phantom")]
    name: String,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum RenderMode {
    Multiplexed,
    Brightfield,
    Zstack,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, value_enum, default_value_t = RenderMode::Multiplexed)]
    mode: RenderMode,
    /// Defocus in µm (z-stack: the programmed true focus).
    #[arg(long, default_value_t = 0.0)]
    defocus: f64,
    /// Motion blur length along x, px.
    #[arg(long)]
    blur_px: Option<u32>,
    #[arg(long)]
    style: Option<PhantomStyle>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Z-stack center, µm.
    #[arg(long, default_value_t = 0.0)]
    center: f64,
    /// Z-stack half range, µm.
    #[arg(long, default_value_t = 5.0)]
    half_range: f64,
    /// Z-stack plane count (odd, >= 3).
    #[arg(long, default_value_t = 11)]
    steps: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = -4.0)]
    z_min: f64,
    #[arg(long, default_value_t = 4.0)]
    z_max: f64,
    #[arg(long, default_value_t = 9)]
    steps: usize,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    subsample_ratio: Option<usize>,
    #[arg(long)]
    blur_px: Option<u32>,
    #[arg(long)]
    style: Option<PhantomStyle>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct ShiftArgs {
    /// Red channel image (PNG or PGM).
    #[arg(long)]
    red: PathBuf,
    /// Green channel image (PNG or PGM).
    #[arg(long)]
    green: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    subsample_ratio: Option<usize>,
    /// Search window in original pixels (default height/4).
    #[arg(long)]
    max_lag: Option<usize>,
    /// Warm-start for the mutual-information ascent, px.
    #[arg(long)]
    init: Option<f64>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    subsample_ratio: Option<usize>,
    #[arg(long)]
    blur_px: Option<u32>,
    #[arg(long)]
    start_z_error_um: Option<f64>,
    /// Focus undulation amplitude, µm.
    #[arg(long)]
    amplitude_um: Option<f64>,
    /// Calibration curve JSON (default OUT/calibration.json).
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Also write each tile's brightfield capture under OUT/tiles/.
    #[arg(long)]
    save_tiles: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Frames per (method, ratio) cell.
    #[arg(long)]
    tiles: Option<usize>,
    /// Sensor noise sigma.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    blur_px: Option<u32>,
    #[arg(long)]
    style: Option<PhantomStyle>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct LayersArgs {
    /// Analyze a stored frame pair instead of synthesizing one.
    #[arg(long, requires = "green")]
    red: Option<PathBuf>,
    #[arg(long, requires = "red")]
    green: Option<PathBuf>,
    /// Layer separation of the synthesized phantom, px.
    #[arg(long, default_value_t = 8.0)]
    sep_px: f64,
    /// Defocus of the synthesized frame, µm.
    #[arg(long, default_value_t = 0.0)]
    defocus: f64,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Minimum topographic prominence of a reported peak.
    #[arg(long, default_value_t = 0.05)]
    prominence: f64,
    /// Search window in px (default height/4).
    #[arg(long)]
    max_lag: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => load_settings(path)
            .with_context(|| format!("loading settings from {}", path.display()))?,
        None => Settings::default(),
    };
    if !cli.overrides.is_empty() {
        let pairs = cli
            .overrides
            .iter()
            .map(|s| parse_override(s).map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?;
        settings = apply_overrides(&settings, &pairs)?;
    }
    let seed = cli.seed.unwrap_or(settings.optics.rng_seed);
    settings.optics = settings.optics.with_seed(seed);
    settings.validate()?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match &cli.cmd {
        Cmd::Phantom(args) => cmd_phantom(&cli, args, seed),
        Cmd::Render(args) => cmd_render(&cli, &settings, args, seed),
        Cmd::Calibrate(args) => cmd_calibrate(&cli, &settings, args, seed),
        Cmd::Shift(args) => cmd_shift(&cli, &settings, args),
        Cmd::Scan(args) => cmd_scan(&cli, &settings, args, seed),
        Cmd::Bench(args) => cmd_bench(&cli, &settings, args, seed),
        Cmd::Layers(args) => cmd_layers(&cli, &settings, args, seed),
    }
}

fn phantom_params(
    style: Option<PhantomStyle>,
    width: Option<usize>,
    height: Option<usize>,
) -> PhantomParams {
    let mut params = PhantomParams::default();
    if let Some(s) = style {
        params.style = s;
    }
    if let Some(w) = width {
        params.width = w;
    }
    if let Some(h) = height {
        params.height = h;
    }
    params
}

fn save_pair(red: &ImagePlane, green: &ImagePlane, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let (r_path, g_path) = channel_paths(base)?;
    save_plane(red, &r_path)?;
    save_plane(green, &g_path)?;
    Ok((r_path, g_path))
}

fn cmd_phantom(cli: &Cli, args: &PhantomArgs, seed: u64) -> Result<()> {
    let mut params = phantom_params(args.style, args.width, args.height);
    if let Some(split) = args.contrast_split {
        params.contrast_split = split;
    }
    if let Some(sep) = args.layer_sep_px {
        params.layer_sep_px = sep;
    }
    let pair = phantom::generate(&params, seed)?;
    let base = cli.out.join(format!("{}.png", args.name));
    let (r_path, g_path) = save_pair(&pair.red, &pair.green, &base)?;
    println!(
        "wrote {} and {} ({} {}x{})",
        r_path.display(),
        g_path.display(),
        params.style,
        params.width,
        params.height
    );
    Ok(())
}

fn cmd_render(cli: &Cli, settings: &Settings, args: &RenderArgs, seed: u64) -> Result<()> {
    let params = phantom_params(args.style, args.width, args.height);
    let obj = phantom::generate(&params, rng::mix_label(seed, "render.phantom"))?;
    let cfg = &settings.optics;
    let blur = args.blur_px.unwrap_or(settings.scan.blur_px);
    match args.mode {
        RenderMode::Multiplexed => {
            let frame = render_multiplexed(&obj, args.defocus, blur, cfg)?;
            let base = cli.out.join("frame.png");
            let (r_path, g_path) = save_pair(&frame.red, &frame.green, &base)?;
            println!(
                "wrote {} and {} (defocus {} um, blur {} px)",
                r_path.display(),
                g_path.display(),
                args.defocus,
                blur
            );
        }
        RenderMode::Brightfield => {
            let plane = render_brightfield(&obj, args.defocus, cfg)?;
            let path = cli.out.join("brightfield.png");
            save_plane(&plane, &path)?;
            println!("wrote {} (defocus {} um)", path.display(), args.defocus);
        }
        RenderMode::Zstack => {
            let stack =
                render_zstack_at(&obj, args.defocus, args.center, args.half_range, args.steps, cfg)?;
            let mut files = Vec::new();
            for (k, plane) in stack.planes.iter().enumerate() {
                let path = cli.out.join(format!("zstack_{k:02}.png"));
                save_plane(plane, &path)?;
                files.push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
            let index = serde_json::json!({
                "z_positions_um": stack.z_positions,
                "files": files,
            });
            let index_path = cli.out.join("zstack.json");
            fs::write(&index_path, serde_json::to_string_pretty(&index)?)?;
            println!("wrote {} planes and {}", stack.planes.len(), index_path.display());
        }
    }
    Ok(())
}

fn cmd_calibrate(cli: &Cli, settings: &Settings, args: &CalibrateArgs, seed: u64) -> Result<()> {
    if args.steps < 3 {
        bail!("calibration needs at least 3 sweep steps, got {}", args.steps);
    }
    if !(args.z_max > args.z_min) {
        bail!("empty calibration range [{}, {}]", args.z_min, args.z_max);
    }
    let method = args.method.unwrap_or(settings.scan.method);
    let ratio = args.subsample_ratio.unwrap_or(settings.scan.subsample_ratio);
    let blur = args.blur_px.unwrap_or(settings.scan.blur_px);
    let params = phantom_params(args.style, args.width, args.height);
    let obj = phantom::generate(&params, rng::mix_label(seed, "calibrate.phantom"))?;
    let cfg = &settings.optics;

    let step = (args.z_max - args.z_min) / (args.steps - 1) as f64;
    let mut samples = Vec::with_capacity(args.steps);
    for k in 0..args.steps {
        let z = args.z_min + step * k as f64;
        let frame = render_multiplexed(&obj, z, blur, cfg)?;
        let corrected = crosstalk::correct(&frame, cfg.crosstalk)?;
        let est = estimate_shift(&corrected, method, ratio)?;
        samples.push((z, est.shift_y));
    }
    let curve = fit_calibration(&samples)?;

    let curve_path = cli.out.join("calibration.json");
    fs::write(&curve_path, serde_json::to_string_pretty(&curve)?)?;
    let mut csv = String::from("defocus_um,shift_px\n");
    for (z, s) in &samples {
        csv.push_str(&format!("{z:.6},{s:.6}\n"));
    }
    fs::write(cli.out.join("calibration_points.csv"), csv)?;
    println!(
        "fit: slope {:.6} px/um, intercept {:.6} px, residual rms {:.6} px -> {}",
        curve.slope, curve.intercept, curve.residual_rms, curve_path.display()
    );
    Ok(())
}

fn cmd_shift(cli: &Cli, settings: &Settings, args: &ShiftArgs) -> Result<()> {
    let red = load_plane(&args.red)
        .with_context(|| format!("loading red channel {}", args.red.display()))?;
    let green = load_plane(&args.green)
        .with_context(|| format!("loading green channel {}", args.green.display()))?;
    let frame = ColorFrame::new(red, green)?;
    let method = args.method.unwrap_or(settings.scan.method);
    let ratio = args.subsample_ratio.unwrap_or(settings.scan.subsample_ratio);
    let max_lag = args.max_lag.unwrap_or_else(|| default_max_lag(frame.height()));
    let est = match method {
        Method::Xcorr => xcorr_shift(&frame, ratio, max_lag)?,
        Method::MutualInfo => {
            let (est, _) = mi_shift_with(
                &frame,
                ratio,
                DEFAULT_MI_ITERATIONS,
                args.init,
                max_lag,
                DEFAULT_MI_BINS,
            )?;
            est
        }
    };
    let json = serde_json::to_string_pretty(&est)?;
    fs::write(cli.out.join("shift.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn cmd_scan(cli: &Cli, settings: &Settings, args: &ScanArgs, seed: u64) -> Result<()> {
    let mut plan = settings.scan.clone();
    if let Some(v) = args.rows {
        plan.rows = v;
    }
    if let Some(v) = args.cols {
        plan.cols = v;
    }
    if let Some(v) = args.method {
        plan.method = v;
    }
    if let Some(v) = args.subsample_ratio {
        plan.subsample_ratio = v;
    }
    if let Some(v) = args.blur_px {
        plan.blur_px = v;
    }
    if let Some(v) = args.start_z_error_um {
        plan.start_z_error_um = v;
    }
    if let Some(v) = args.amplitude_um {
        plan.focus_profile.amplitude_um = v;
    }

    let curve_path = args
        .calibration
        .clone()
        .unwrap_or_else(|| cli.out.join("calibration.json"));
    if !curve_path.exists() {
        bail!(
            "missing calibration curve {}; run `slidefocus calibrate` first",
            curve_path.display()
        );
    }
    let curve: CalibrationCurve = serde_json::from_str(&fs::read_to_string(&curve_path)?)
        .with_context(|| format!("parsing calibration curve {}", curve_path.display()))?;

    let tiles_dir = cli.out.join("tiles");
    if args.save_tiles {
        fs::create_dir_all(&tiles_dir)?;
    }
    let mut sink = |rec: &TileRecord, img: &ImagePlane| -> slidefocus::Result<()> {
        save_plane(img, &tiles_dir.join(format!("tile_{:03}.png", rec.tile_id)))
    };
    let sink_opt: Option<&mut dyn FnMut(&TileRecord, &ImagePlane) -> slidefocus::Result<()>> =
        if args.save_tiles { Some(&mut sink) } else { None };
    let report = run_scan_with_sink(
        &plan,
        &settings.optics,
        &curve,
        &settings.timing,
        seed,
        sink_opt,
    )?;

    fs::write(
        cli.out.join("scan_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_tile_csv(&report, &cli.out.join("scan_tiles.csv"))?;
    export_focus_map(
        &report.focus_map,
        &cli.out.join("focus_map.csv"),
        &cli.out.join("focus_map.png"),
    )?;
    println!(
        "{}x{} scan ({}, ratio {}): mean err {:.4} um, std {:.4} um, {:.1}% within DOF, model time {:.2} s",
        report.rows,
        report.cols,
        report.method,
        report.subsample_ratio,
        report.mean_error_um,
        report.std_error_um,
        100.0 * report.within_dof_fraction,
        report.total_time_s
    );
    Ok(())
}

fn cmd_bench(cli: &Cli, settings: &Settings, args: &BenchArgs, seed: u64) -> Result<()> {
    let mut bench = settings.bench.clone();
    if let Some(v) = args.tiles {
        bench.frames = v;
    }
    if let Some(v) = args.blur_px {
        bench.blur_px = v;
    }
    if let Some(v) = args.style {
        bench.style = v;
    }
    if let Some(v) = args.width {
        bench.width = v;
    }
    if let Some(v) = args.height {
        bench.height = v;
    }
    let mut optics = settings.optics.clone();
    if let Some(v) = args.noise {
        optics.noise_sigma = v;
    }
    let report = run_bench(&bench, &optics, seed)?;
    fs::write(cli.out.join("bench.csv"), bench_csv(&report))?;
    let table = format_bench(&report);
    fs::write(cli.out.join("bench_table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_layers(cli: &Cli, settings: &Settings, args: &LayersArgs, seed: u64) -> Result<()> {
    let frame = match (&args.red, &args.green) {
        (Some(r), Some(g)) => ColorFrame::new(load_plane(r)?, load_plane(g)?)?,
        _ => {
            let mut params = phantom_params(Some(PhantomStyle::TwoLayer), args.width, args.height);
            params.layer_sep_px = args.sep_px;
            let obj = phantom::generate(&params, rng::mix_label(seed, "layers.phantom"))?;
            let frame = render_multiplexed(&obj, args.defocus, 0, &settings.optics)?;
            crosstalk::correct(&frame, settings.optics.crosstalk)?
        }
    };
    let max_lag = args.max_lag.unwrap_or_else(|| default_max_lag(frame.height()));
    let profile = correlation_profile(&frame, max_lag)?;
    let peaks = detect_layers(&profile, args.prominence)?;

    let mut csv = String::from("lag_px,correlation\n");
    for (lag, v) in profile.lags.iter().zip(&profile.values) {
        csv.push_str(&format!("{lag},{v:.6}\n"));
    }
    fs::write(cli.out.join("profile.csv"), csv)?;
    let json = serde_json::to_string_pretty(&peaks)?;
    fs::write(cli.out.join("peaks.json"), &json)?;
    println!("{} peak(s):", peaks.len());
    for p in &peaks {
        println!("  lag {:+.3} px, correlation {:.4}", p.lag, p.value);
    }
    Ok(())
}
