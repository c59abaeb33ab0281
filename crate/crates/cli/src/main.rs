#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod document;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use leaky_regression::detect::{ChangeDetector, Detector, DetectorOutput, StatisticDetector};
use leaky_regression::response::response_report;
use leaky_regression::scenario::{
    simulate_target, synth_change_waveform, synth_edge_waveform, synth_peak_waveform,
    TargetScenario, Waveform, WAVEFORM_NOISE_STD,
};
use leaky_regression::Estimator;
use serde::Serialize;

use document::{DelaySetting, DesignDocument};

#[derive(Parser)]
#[command(
    name = "leakyreg",
    version,
    about = "Leaky-integrator regression filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a filter and write its JSON document.
    Design {
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        p: f64,
        /// Polynomial model order K_X.
        #[arg(long)]
        kx: usize,
        /// Number of derivative outputs K_t (defaults to K_X).
        #[arg(long)]
        kt: Option<usize>,
        /// Delay in samples, or `auto` for the VRF-optimal delay.
        #[arg(long, default_value = "auto")]
        q: DelaySetting,
        #[arg(long, default_value_t = 1.0)]
        ts: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequency response of a designed filter.
    Analyze {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = 512)]
        grid_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the JSON summary (stdout when omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Stream a single-column CSV through the estimator.
    Run {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Prior noise standard deviation used for the first sample.
        #[arg(long, default_value_t = 0.0)]
        sigma0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edge, peak or change detection on a single-column CSV.
    Detect {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        design: PathBuf,
        /// Second filter of the change-detector pair.
        #[arg(long)]
        design_b: Option<PathBuf>,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        sigma0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic test scenario.
    Simulate {
        #[arg(long, value_enum)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Measurement noise standard deviation.
        #[arg(long)]
        noise_std: Option<f64>,
        /// Track length for the target scenarios.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Edge,
    Peak,
    Change,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    TargetConstantAccel,
    TargetRandomAccel,
    Edge,
    Peak,
    Change,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Rejected(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Rejected(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Rejected(m) => f.write_str(m),
        }
    }
}

impl From<leaky_regression::Error> for Failure {
    fn from(e: leaky_regression::Error) -> Self {
        Failure::Rejected(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("leakyreg: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn execute(command: Command) -> Outcome {
    match command {
        Command::Design {
            kappa,
            p,
            kx,
            kt,
            q,
            ts,
            out,
        } => {
            let doc = DesignDocument::design(kappa, p, kx, kt.unwrap_or(kx), q, ts)?;
            write_json(out.as_deref(), &doc)
        }
        Command::Analyze {
            design,
            grid_size,
            out,
            summary,
        } => analyze(&design, grid_size, out.as_deref(), summary.as_deref()),
        Command::Run {
            design,
            input,
            sigma0,
            out,
        } => run(&design, input.as_deref(), sigma0, out.as_deref()),
        Command::Detect {
            kind,
            design,
            design_b,
            threshold,
            input,
            sigma0,
            out,
        } => detect(
            kind,
            &design,
            design_b.as_deref(),
            threshold,
            input.as_deref(),
            sigma0,
            out.as_deref(),
        ),
        Command::Simulate {
            scenario,
            seed,
            noise_std,
            samples,
            out,
        } => simulate(scenario, seed, noise_std, samples, out.as_deref()),
    }
}

fn open_output(path: Option<&Path>) -> Outcome<BufWriter<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => {
            Box::new(File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    Ok(BufWriter::new(sink))
}

fn open_input(path: Option<&Path>) -> Outcome<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

fn write_json<S: Serialize>(path: Option<&Path>, value: &S) -> Outcome {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_document(path: &Path) -> Outcome<DesignDocument> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Failure::Usage(format!("{}: not a design document: {e}", path.display())))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streams numeric samples from a single-column CSV. One leading
/// non-numeric line is taken as a header; blank lines are skipped.
struct Samples<R> {
    lines: io::Lines<R>,
    line_no: usize,
    seen_first: bool,
}

impl<R: BufRead> Samples<R> {
    fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            seen_first: false,
        }
    }
}

impl<R: BufRead> Iterator for Samples<R> {
    type Item = Outcome<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            let field = line.trim();
            if field.is_empty() {
                continue;
            }
            let first = !self.seen_first;
            self.seen_first = true;
            if field.contains(',') {
                return Some(Err(Failure::Rejected(format!(
                    "line {}: expected a single column, got `{field}`",
                    self.line_no
                ))));
            }
            match field.parse::<f64>() {
                Ok(x) => return Some(Ok(x)),
                Err(_) if first => continue,
                Err(_) => {
                    return Some(Err(Failure::Rejected(format!(
                        "line {}: `{field}` is not a number",
                        self.line_no
                    ))))
                }
            }
        }
    }
}

fn analyze(design: &Path, grid_size: usize, out: Option<&Path>, summary: Option<&Path>) -> Outcome {
    if grid_size < 2 {
        return Err(Failure::Usage(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    let doc = load_document(design)?;
    let real = doc.realization()?;
    let report = response_report(&real, grid_size)?;
    let mut w = open_output(out)?;
    let mut header = vec!["f".to_string()];
    for k in 0..report.response.len() {
        header.push(format!("re_h{k}"));
        header.push(format!("im_h{k}"));
    }
    header.push("distortion".into());
    writeln!(w, "{}", header.join(","))?;
    for (i, &f) in report.freqs.iter().enumerate() {
        let mut row = vec![num(f)];
        for column in &report.response {
            row.push(num(column[i].re));
            row.push(num(column[i].im));
        }
        row.push(num(report.distortion[i]));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Summary {
        q: f64,
        f_c: Option<f64>,
        group_delay_dc: f64,
        vrf_diagonal: Vec<f64>,
    }
    let vrf = real.vrf();
    write_json(
        summary,
        &Summary {
            q: real.delay(),
            f_c: report.f_c,
            group_delay_dc: report.group_delay_dc,
            vrf_diagonal: (0..vrf.rows()).map(|k| vrf[(k, k)]).collect(),
        },
    )
}

fn run(design: &Path, input: Option<&Path>, sigma0: f64, out: Option<&Path>) -> Outcome {
    let real = load_document(design)?.realization()?;
    let kt = real.spec().derivatives();
    let mut est = Estimator::new(real, sigma0 * sigma0)?;
    let mut w = open_output(out)?;
    let mut header = vec!["n".to_string()];
    header.extend((0..kt).map(|k| format!("x{k}")));
    header.push("sigma_eps2".into());
    header.extend((0..kt).map(|k| format!("var_x{k}")));
    writeln!(w, "{}", header.join(","))?;
    for x in Samples::new(open_input(input)?) {
        let frame = est.push(x?)?;
        let mut row = vec![frame.n.to_string()];
        row.extend(frame.estimates.iter().map(|&v| num(v)));
        row.push(num(frame.sigma_eps2));
        row.extend((0..kt).map(|k| num(frame.variance(k))));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn detect(
    kind: Kind,
    design: &Path,
    design_b: Option<&Path>,
    threshold: f64,
    input: Option<&Path>,
    sigma0: f64,
    out: Option<&Path>,
) -> Outcome {
    let real = load_document(design)?.realization()?;
    let sigma0_sq = sigma0 * sigma0;
    let detector: Box<dyn Detector<f64>> = match (kind, design_b) {
        (Kind::Edge, None) => Box::new(StatisticDetector::edge(real, threshold, sigma0_sq)?),
        (Kind::Peak, None) => Box::new(StatisticDetector::peak(real, threshold, sigma0_sq)?),
        (Kind::Change, Some(b)) => {
            let other = load_document(b)?.realization()?;
            Box::new(ChangeDetector::from_realizations(
                real, other, threshold, sigma0_sq,
            )?)
        }
        (Kind::Change, None) => {
            return Err(Failure::Usage("change detection needs --design-b".into()))
        }
        (_, Some(_)) => {
            return Err(Failure::Usage(
                "--design-b only applies to change detection".into(),
            ))
        }
    };
    stream_detector(detector, input, out)
}

fn stream_detector(
    mut detector: Box<dyn Detector<f64>>,
    input: Option<&Path>,
    out: Option<&Path>,
) -> Outcome {
    let mut w = open_output(out)?;
    writeln!(w, "n,z,event")?;
    let write_rows =
        |w: &mut BufWriter<Box<dyn Write>>, rows: Vec<DetectorOutput<f64>>| -> Outcome {
            for r in rows {
                let event = r.event.map(|e| e.as_str()).unwrap_or("");
                writeln!(w, "{},{},{event}", r.n, num(r.z))?;
            }
            Ok(())
        };
    for x in Samples::new(open_input(input)?) {
        let rows = detector.push(x?)?;
        write_rows(&mut w, rows)?;
    }
    write_rows(&mut w, detector.finish())?;
    w.flush()?;
    Ok(())
}

fn simulate(
    scenario: Scenario,
    seed: u64,
    noise_std: Option<f64>,
    samples: Option<usize>,
    out: Option<&Path>,
) -> Outcome {
    let mut w = open_output(out)?;
    let target = match scenario {
        Scenario::TargetConstantAccel => Some(TargetScenario::constant_acceleration(seed)),
        Scenario::TargetRandomAccel => Some(TargetScenario::random_acceleration(seed)),
        _ => None,
    };
    if let Some(mut s) = target {
        if let Some(sd) = noise_std {
            s.noise_std = sd;
        }
        if let Some(n) = samples {
            s.samples = n;
        }
        let track = simulate_target(&s)?;
        writeln!(w, "n,position,velocity,acceleration,measurement")?;
        for (n, (truth, y)) in track.truth.iter().zip(&track.measurements).enumerate() {
            writeln!(
                w,
                "{n},{},{},{},{}",
                num(truth[0]),
                num(truth[1]),
                num(truth[2]),
                num(*y)
            )?;
        }
    } else {
        if samples.is_some() {
            return Err(Failure::Usage(
                "--samples only applies to the target scenarios".into(),
            ));
        }
        let sd = noise_std.unwrap_or(WAVEFORM_NOISE_STD);
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(Failure::Rejected(format!(
                "noise standard deviation must be finite and non-negative, got {sd}"
            )));
        }
        let wave: Waveform = match scenario {
            Scenario::Edge => synth_edge_waveform(sd, seed),
            Scenario::Peak => synth_peak_waveform(sd, seed),
            _ => synth_change_waveform(sd, seed),
        };
        writeln!(w, "n,clean,measurement")?;
        for (n, (c, y)) in wave.clean.iter().zip(&wave.measurements).enumerate() {
            writeln!(w, "{n},{},{}", num(*c), num(*y))?;
        }
    }
    w.flush()?;
    Ok(())
}
