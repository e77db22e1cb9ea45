use clap::{Args, Parser, Subcommand, ValueEnum};
use edge_spectra::bands::{berry_phases, chern_numbers, decompose};
use edge_spectra::current::central_charge_from;
use edge_spectra::discrete::{build_truncation, edge_dispersion, window_spectrum, Kind};
use edge_spectra::edgeclass::{classify_points, Side};
use edge_spectra::flow::{edge_flow, hall_conductance, spectral_flow, tracked_crossings, FlowReport};
use edge_spectra::io::*;
use edge_spectra::model::{build_constant, build_harper, load_config, validate_gaps, BlochModel};
use edge_spectra::monodromy::{asymptotic_spectrum, exact_spectrum, label_roots};
use edge_spectra::tracking::{track_window, TrackOptions};
use edge_spectra::{Error, Result, TAU};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "edge-spectra", version, about = "Spectra and spectral flow of distance-modulated edge Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Harper-Hofstadter flux p/q, as `p,q`.
    #[arg(long, value_name = "P,Q", conflicts_with_all = ["constant", "config"])]
    harper: Option<String>,
    /// Flat bands with these energies, as `e1,e2,...`.
    #[arg(long, value_name = "E1,E2,..", allow_hyphen_values = true, conflicts_with = "config")]
    constant: Option<String>,
    /// JSON model file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fermi energy for the Harper model.
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    ef: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides EDGE_SPECTRA_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Plus,
    Minus,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Band energies on a grid and Berry phases per ky.
    Bands {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
    },
    /// Chern numbers and Hall conductance.
    Chern {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
    },
    /// Band separations and the zero-energy gap.
    Gapcheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
    },
    /// Roots of the monodromy condition, labeled and classified by side.
    SpectrumExact {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "1.0", allow_hyphen_values = true)]
        ky: String,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
    },
    /// Asymptotic spectrum on a ky grid.
    SpectrumApprox {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        ny: usize,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
    },
    /// Windowed spectra of the two truncated half-lattice operators.
    SpectrumDiscrete {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 500)]
        l: usize,
        #[arg(long, default_value_t = 200)]
        ny: usize,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
    },
    /// Half-plane strip spectrum with edge-mode branches and chiralities.
    EdgeDispersion {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100)]
        l: usize,
        #[arg(long, default_value_t = 200)]
        ny: usize,
    },
    /// Parallel-transport tracking of truncated eigenpairs across ky.
    Track {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 500)]
        l: usize,
        #[arg(long, default_value_t = 200)]
        ny: usize,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
        #[arg(long, value_enum, default_value = "plus")]
        side: SideArg,
    },
    /// Spectral flow through a fiducial energy versus the Hall conductance.
    Flow {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 500)]
        l: usize,
        #[arg(long, default_value_t = 200)]
        ny: usize,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
        /// Defaults to the window midpoint.
        #[arg(long, allow_hyphen_values = true)]
        fiducial: Option<f64>,
        #[arg(long, value_enum, default_value = "plus")]
        side: SideArg,
        /// Also count crossings of tracked branches.
        #[arg(long)]
        tracked: bool,
    },
    /// Edge energy current and central charge.
    Current {
        #[command(flatten)]
        model: ModelArgs,
        /// Gap between bands `gap` and `gap+1`; defaults to the gap at zero energy.
        #[arg(long)]
        gap: Option<usize>,
        #[arg(long, default_value = "0.1,0.05,0.025")]
        temps: String,
        #[arg(long, default_value_t = 60)]
        l: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
    },
    /// Every table the figure scripts read, under `<out>/figures`.
    FiguresData {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        l: usize,
        #[arg(long, default_value_t = 100)]
        ny: usize,
        #[arg(long, default_value_t = 24)]
        ny_exact: usize,
        #[arg(long, default_value = "20,30", allow_hyphen_values = true)]
        window: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bands { .. } => "bands",
            Command::Chern { .. } => "chern",
            Command::Gapcheck { .. } => "gapcheck",
            Command::SpectrumExact { .. } => "spectrum-exact",
            Command::SpectrumApprox { .. } => "spectrum-approx",
            Command::SpectrumDiscrete { .. } => "spectrum-discrete",
            Command::EdgeDispersion { .. } => "edge-dispersion",
            Command::Track { .. } => "track",
            Command::Flow { .. } => "flow",
            Command::Current { .. } => "current",
            Command::FiguresData { .. } => "figures-data",
        }
    }

    fn model_args(&self) -> &ModelArgs {
        match self {
            Command::Bands { model, .. }
            | Command::Chern { model, .. }
            | Command::Gapcheck { model, .. }
            | Command::SpectrumExact { model, .. }
            | Command::SpectrumApprox { model, .. }
            | Command::SpectrumDiscrete { model, .. }
            | Command::EdgeDispersion { model, .. }
            | Command::Track { model, .. }
            | Command::Flow { model, .. }
            | Command::Current { model, .. }
            | Command::FiguresData { model, .. } => model,
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|_| Error::InvalidArgument(format!("bad {what}: {s}")))).collect()
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(s, "window")?[..] {
        [a, b] if a < b => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!("window must be lo,hi with lo < hi: {s}"))),
    }
}

fn build_model(args: &ModelArgs) -> Result<BlochModel> {
    if let Some(path) = &args.config {
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!("config {} not found", path.display())));
        }
        return load_config(path);
    }
    if let Some(c) = &args.constant {
        return build_constant(&parse_list::<f64>(c, "energies")?);
    }
    let (p, q) = match &args.harper {
        Some(s) => match parse_list::<i64>(s, "flux")?[..] {
            [p, q] => (p, q),
            _ => return Err(Error::InvalidArgument(format!("--harper expects p,q: {s}"))),
        },
        None => (1, 3),
    };
    build_harper(p, q, args.ef)
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Run {
    fn file(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn param(&mut self, key: &str, value: serde_json::Value) {
        self.manifest.parameters.insert(key.to_string(), value);
    }

    fn time(&mut self, key: &str, since: Instant) {
        self.manifest.timings_s.insert(key.to_string(), since.elapsed().as_secs_f64());
    }

    fn finish(mut self, name: &str) -> Result<()> {
        self.time("total", self.started);
        let path = self.out.join(format!("manifest_{name}.json"));
        write_json(&path, &self.manifest)
    }
}

fn side_name(v: Option<Side>) -> Option<&'static str> {
    v.map(Side::name)
}

fn exact_rows(model: &BlochModel, ky: f64, window: (f64, f64)) -> Result<Vec<SpectrumRow>> {
    let mut exact = exact_spectrum(model, ky, window, None)?;
    let pad = 0.1 * (window.1 - window.0);
    let asym = asymptotic_spectrum(model, ky, (window.0 - pad, window.1 + pad))?;
    label_roots(&mut exact.points, &asym);
    let verdicts = classify_points(model, &exact.points, 2048, 512)?;
    Ok(exact
        .points
        .iter()
        .zip(verdicts)
        .map(|(p, v)| SpectrumRow {
            k_y: ky,
            e: p.e,
            defect: Some(p.defect),
            m: p.label.map(|l| l.m),
            j: p.label.map(|l| l.j),
            side: side_name(v.map(|v| v.side)),
        })
        .collect())
}

fn approx_rows(model: &BlochModel, ny: usize, window: (f64, f64)) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::new();
    for i in 0..ny {
        let ky = TAU * i as f64 / ny as f64;
        let a = asymptotic_spectrum(model, ky, window)?;
        rows.extend(a.points.iter().map(|p| SpectrumRow { k_y: ky, e: p.e, defect: None, m: Some(p.m), j: Some(p.j), side: None }));
    }
    Ok(rows)
}

fn discrete_rows(model: &BlochModel, l: usize, ny: usize, window: (f64, f64)) -> Result<Vec<DiscreteRow>> {
    use rayon::prelude::*;
    let per_ky: Vec<Vec<DiscreteRow>> = (0..ny)
        .into_par_iter()
        .map(|i| {
            let ky = TAU * i as f64 / ny as f64;
            let mut rows = Vec::new();
            for (kind, side) in [(Kind::ModulatedEdge, Side::EdgePlus), (Kind::ModulatedEdgeMinus, Side::EdgeMinus)] {
                let op = build_truncation(model, kind, l, ky)?;
                rows.extend(window_spectrum(&op, window.0, window.1).into_iter().map(|d| DiscreteRow {
                    k_y: ky,
                    eigenvalue: d.e,
                    spurious_flag: d.spurious,
                    side: side.name(),
                }));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_ky.into_iter().flatten().collect())
}

fn plain_edge_outputs(run: &mut Run, model: &BlochModel, l: usize, ny: usize) -> Result<i64> {
    let disp = edge_dispersion(model, l, ny)?;
    let mut rows = Vec::new();
    for i in 0..disp.ky.len() {
        for (&e, (id, in_gap)) in disp.spectrum[i].iter().zip(disp.tags(i)) {
            rows.push(PlainEdgeRow { k_y: disp.ky[i], eigenvalue: e, in_gap_flag: in_gap, branch_id: id });
        }
    }
    write_csv(&run.file("plain_edge.csv"), &rows)?;
    let gaps: BTreeMap<usize, i32> = (1..model.n()).map(|g| (g, disp.chirality_sum(g))).collect();
    write_json(&run.file("edge_modes.json"), &json!({ "records": disp.records(), "chirality_sum_by_gap": gaps }))?;
    Ok(gaps.values().map(|x| *x as i64).sum())
}

fn track_outputs(
    run: &mut Run,
    model: &BlochModel,
    kind: Kind,
    l: usize,
    ny: usize,
    window: (f64, f64),
    name: &str,
) -> Result<Vec<edge_spectra::tracking::TrackedBranch>> {
    let set = track_window(model, kind, l, window, &TrackOptions { ny, ..Default::default() })?;
    let rows: Vec<TrackRow> = set
        .branches
        .iter()
        .flat_map(|b| {
            b.k.iter().zip(&b.e).zip(&b.residuals).map(move |((k, e), r)| TrackRow { branch_id: b.id, k_y: *k, e: *e, residual: *r })
        })
        .collect();
    write_csv_with_header(&run.file(&format!("{name}.csv")), &["branch_id", "k_y", "e", "residual"], &rows)?;
    write_json(
        &run.file(&format!("{name}.json")),
        &json!({ "kind": kind.name(), "seeds": set.seeds, "permutation": set.permutation(), "aborted": set.aborted, "closed": set.branches.iter().map(|b| b.closed).collect::<Vec<_>>() }),
    )?;
    Ok(set.branches)
}

fn sides(s: SideArg) -> Vec<Side> {
    match s {
        SideArg::Plus => vec![Side::EdgePlus],
        SideArg::Minus => vec![Side::EdgeMinus],
        SideArg::Both => vec![Side::EdgePlus, Side::EdgeMinus],
    }
}

fn side_kind(s: Side) -> Kind {
    if s == Side::EdgeMinus {
        Kind::ModulatedEdgeMinus
    } else {
        Kind::ModulatedEdge
    }
}

fn execute(cmd: &Command) -> Result<()> {
    let args = cmd.model_args();
    let model = build_model(args)?;
    std::fs::create_dir_all(&args.out)?;
    let mut run = Run {
        out: args.out.clone(),
        manifest: Manifest {
            command: cmd.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: Some(model.to_config()),
            model_label: model.label().into(),
            ..Default::default()
        },
        started: Instant::now(),
    };
    match cmd {
        Command::Bands { nx, ny, .. } => {
            run.param("nx", json!(nx));
            run.param("ny", json!(ny));
            let mut bands = Vec::new();
            let mut berry = Vec::new();
            for l in 0..*ny {
                let ky = TAU * l as f64 / *ny as f64;
                let b = decompose(&model, ky, *nx)?;
                for j in 0..model.n() {
                    for i in 0..*nx {
                        bands.push(BandRow { k_x: b.kx[i], k_y: ky, j: j + 1, e: b.energies[j][i] });
                    }
                }
                for (j, t) in berry_phases(&model, ky, *nx)?.into_iter().enumerate() {
                    berry.push(BerryRow { k_y: ky, j: j + 1, theta: t });
                }
            }
            write_csv(&run.file("bands.csv"), &bands)?;
            write_csv(&run.file("berry.csv"), &berry)?;
        }
        Command::Chern { nx, ny, .. } => {
            run.param("nx", json!(nx));
            run.param("ny", json!(ny));
            let rec = chern_numbers(&model, *nx, *ny)?;
            let kappa = match hall_conductance(&model) {
                Ok(k) => Some(k),
                Err(Error::NoGap) => None,
                Err(e) => return Err(e),
            };
            let list = rec.chern.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
            match kappa {
                Some(k) => println!("chern = [{list}], kappa = {k}"),
                None => println!("chern = [{list}], kappa = none"),
            }
            write_json(&run.file("chern.json"), &json!({ "record": rec, "kappa": kappa }))?;
        }
        Command::Gapcheck { nx, ny, .. } => {
            run.param("nx", json!(nx));
            run.param("ny", json!(ny));
            let g = validate_gaps(&model, *nx, *ny)?;
            println!("{}", serde_json::to_string_pretty(&g)?);
            write_json(&run.file("gapcheck.json"), &g)?;
        }
        Command::SpectrumExact { ky, window, .. } => {
            let kys = parse_list::<f64>(ky, "ky")?;
            let window = parse_window(window)?;
            run.param("ky", json!(kys));
            run.param("window", json!(window));
            let mut rows = Vec::new();
            for k in kys {
                rows.extend(exact_rows(&model, k, window)?);
            }
            write_csv(&run.file("spectrum_exact.csv"), &rows)?;
        }
        Command::SpectrumApprox { ny, window, .. } => {
            let window = parse_window(window)?;
            run.param("ny", json!(ny));
            run.param("window", json!(window));
            write_csv(&run.file("spectrum_approx.csv"), &approx_rows(&model, *ny, window)?)?;
        }
        Command::SpectrumDiscrete { l, ny, window, .. } => {
            let window = parse_window(window)?;
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            run.param("window", json!(window));
            write_csv(&run.file("spectrum_discrete.csv"), &discrete_rows(&model, *l, *ny, window)?)?;
        }
        Command::EdgeDispersion { l, ny, .. } => {
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            plain_edge_outputs(&mut run, &model, *l, *ny)?;
        }
        Command::Track { l, ny, window, side, .. } => {
            let window = parse_window(window)?;
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            run.param("window", json!(window));
            for s in sides(*side) {
                track_outputs(&mut run, &model, side_kind(s), *l, *ny, window, &format!("tracks_{}", s.name()))?;
            }
        }
        Command::Flow { l, ny, window, fiducial, side, tracked, .. } => {
            let window = parse_window(window)?;
            let fiducial = fiducial.unwrap_or(0.5 * (window.0 + window.1));
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            run.param("window", json!(window));
            run.param("fiducial", json!(fiducial));
            let mut reports: Vec<FlowReport> = Vec::new();
            for s in sides(*side) {
                let t = Instant::now();
                let r = edge_flow(&model, s, *l, *ny, window, fiducial)?;
                run.time(&format!("flow_{}", s.name()), t);
                write_json(&run.file(&format!("flow_{}.json", s.name())), &r)?;
                if *tracked {
                    let t = Instant::now();
                    let branches = track_outputs(&mut run, &model, side_kind(s), *l, *ny, window, &format!("flow_tracks_{}", s.name()))?;
                    let tr = spectral_flow(&model, s, window, tracked_crossings(&branches, fiducial), fiducial)?;
                    run.time(&format!("tracked_{}", s.name()), t);
                    write_json(&run.file(&format!("flow_tracked_{}.json", s.name())), &tr)?;
                }
                reports.push(r);
            }
            let summary: Vec<_> = reports
                .iter()
                .map(|r| json!({ "side": r.side, "fiducial": r.fiducial_e, "flow": r.flow, "label_winding": r.label_winding, "kappa": r.kappa, "agrees": r.agrees, "crossings": r.crossings }))
                .collect();
            let out = if summary.len() == 1 { summary[0].clone() } else { json!(summary) };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Current { gap, temps, l, ny, .. } => {
            let temps = parse_list::<f64>(temps, "temps")?;
            let gap = match gap {
                Some(g) => *g,
                None => validate_gaps(&model, 64, 64)?
                    .gap_index_k
                    .ok_or(Error::NoGap)?
                    .checked_sub(1)
                    .filter(|g| *g >= 1)
                    .ok_or(Error::NoGap)?,
            };
            run.param("gap", json!(gap));
            run.param("temps", json!(temps));
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            let disp = edge_dispersion(&model, *l, *ny)?;
            let c = central_charge_from(&model, &disp, gap, &temps)?;
            let rows: Vec<CurrentRow> = c.samples.iter().map(|s| CurrentRow { gap, t: s.t, j: s.j, c_estimate: s.c_estimate }).collect();
            write_csv(&run.file("current.csv"), &rows)?;
            write_json(&run.file("current.json"), &c)?;
            println!("c = {:.6} (chirality sum {})", c.c, c.chirality_sum);
        }
        Command::FiguresData { l, ny, ny_exact, window, .. } => {
            let window = parse_window(window)?;
            run.out = run.out.join("figures");
            std::fs::create_dir_all(&run.out)?;
            run.param("l", json!(l));
            run.param("ny", json!(ny));
            run.param("ny_exact", json!(ny_exact));
            run.param("window", json!(window));
            let t = Instant::now();
            let mut bands = Vec::new();
            for s in 0..*ny {
                let ky = TAU * s as f64 / *ny as f64;
                let b = decompose(&model, ky, 64)?;
                for j in 0..model.n() {
                    for i in 0..64 {
                        bands.push(BandRow { k_x: b.kx[i], k_y: ky, j: j + 1, e: b.energies[j][i] });
                    }
                }
            }
            write_csv(&run.file("bands.csv"), &bands)?;
            let mut berry = Vec::new();
            for s in 0..*ny {
                let ky = TAU * s as f64 / *ny as f64;
                for (j, t) in berry_phases(&model, ky, 64)?.into_iter().enumerate() {
                    berry.push(BerryRow { k_y: ky, j: j + 1, theta: t });
                }
            }
            write_csv(&run.file("berry.csv"), &berry)?;
            let rec = chern_numbers(&model, 64, 64)?;
            write_json(&run.file("chern.json"), &json!({ "record": rec, "kappa": hall_conductance(&model).ok() }))?;
            plain_edge_outputs(&mut run, &model, 100, *ny)?;
            run.time("bands_and_edge", t);
            let t = Instant::now();
            let mut rows = Vec::new();
            for i in 0..*ny_exact {
                rows.extend(exact_rows(&model, TAU * i as f64 / *ny_exact as f64, window)?);
            }
            write_csv(&run.file("spectrum_exact.csv"), &rows)?;
            write_csv(&run.file("spectrum_approx.csv"), &approx_rows(&model, *ny, window)?)?;
            run.time("spectra", t);
            let t = Instant::now();
            write_csv(&run.file("spectrum_discrete.csv"), &discrete_rows(&model, *l, *ny, window)?)?;
            track_outputs(&mut run, &model, Kind::ModulatedEdge, *l, (*ny).max(200), window, "tracks_edge_plus")?;
            run.time("discrete_and_tracks", t);
        }
    }
    run.finish(cmd.name())
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var("EDGE_SPECTRA_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn report_error(e: &Error) {
    eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.command.model_args().threads);
    if let Err(e) = execute(&cli.command) {
        report_error(&e);
        std::process::exit(1);
    }
}
