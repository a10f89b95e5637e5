//! Plain-text packing and error-series files, campaign checkpoints and JSON
//! summaries.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_error, parse_error, Result};
use crate::harness::IterationStats;
use crate::model::{ball_bound, Packing, PackingInstance};
use crate::rrr::{RrrParams, TrialOutcome, TrialStatus};
use crate::torus::TorusVector;

/// Renders a packing file. Coordinates are written in `[-w/2, w/2)` with 17
/// significant digits, so parsing the text back recovers every bit.
pub fn format_packing(packing: &Packing) -> String {
    let w = packing.width;
    let mut body = format!("# n {}\n# w {w:.16e}\n# N {}\n# seed {}\n", packing.dim, packing.count(), packing.seed);
    for c in &packing.centers {
        let line: Vec<String> = c
            .0
            .iter()
            .map(|&x| {
                let x = crate::torus::reduce_scalar(x, w);
                let x = if x >= 0.5 * w { x - w } else { x };
                format!("{x:.16e}")
            })
            .collect();
        body.push_str(&line.join(" "));
        body.push('\n');
    }
    let crc = crc32fast::hash(body.as_bytes());
    body.push_str(&format!("# crc32 {crc:08x}\n"));
    body
}

fn header_value<'a>(lines: &[&'a str], index: usize, key: &str) -> Result<&'a str> {
    let line = lines.get(index).ok_or_else(|| parse_error(index + 1, format!("missing `# {key}` header")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("#"), Some(k), Some(v), None) if k == key => Ok(v),
        _ => Err(parse_error(index + 1, format!("expected `# {key} <value>`, found `{line}`"))),
    }
}

fn parse_header<T: std::str::FromStr>(lines: &[&str], index: usize, key: &str) -> Result<T> {
    let v = header_value(lines, index, key)?;
    v.parse()
        .map_err(|_| parse_error(index + 1, format!("cannot parse `{v}` as the value of `{key}`")))
}

/// Parses the output of [`format_packing`]. The trailing checksum line is
/// optional; when present it must match.
pub fn parse_packing(text: &str) -> Result<Packing> {
    let lines: Vec<&str> = text.lines().collect();
    let dim: usize = parse_header(&lines, 0, "n")?;
    let width: f64 = parse_header(&lines, 1, "w")?;
    let count: usize = parse_header(&lines, 2, "N")?;
    let seed: u64 = parse_header(&lines, 3, "seed")?;
    if dim == 0 {
        return Err(parse_error(1, "dimension must be positive"));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(parse_error(2, format!("width must be positive and finite, got {width}")));
    }
    let mut body_end = lines.len();
    if let Some(last) = lines.last().filter(|l| l.starts_with("# crc32")) {
        body_end -= 1;
        let stated = header_value(&lines, body_end, "crc32")?;
        let prefix_len: usize = lines[..body_end].iter().map(|l| l.len() + 1).sum();
        let actual = format!("{:08x}", crc32fast::hash(&text.as_bytes()[..prefix_len]));
        if stated != actual {
            return Err(parse_error(body_end + 1, format!("checksum {stated} does not match contents ({actual}); `{last}`")));
        }
    }
    let body = &lines[4..body_end];
    if body.len() != count {
        return Err(parse_error(
            3,
            format!("header declares {count} centers but the file has {} coordinate lines", body.len()),
        ));
    }
    let mut centers = Vec::with_capacity(count);
    for (k, line) in body.iter().enumerate() {
        let line_no = k + 5;
        let coords = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_error(line_no, format!("cannot parse coordinate `{t}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if coords.len() != dim {
            return Err(parse_error(line_no, format!("expected {dim} coordinates, found {}", coords.len())));
        }
        if let Some(x) = coords.iter().find(|x| !(**x >= -0.5 * width && **x < 0.5 * width)) {
            return Err(parse_error(
                line_no,
                format!("coordinate {x} is outside [-w/2, w/2) for w = {width}"),
            ));
        }
        centers.push(TorusVector(coords));
    }
    Ok(Packing {
        dim,
        width,
        seed,
        centers,
    })
}

pub fn write_packing(path: &Path, packing: &Packing) -> Result<()> {
    fs::write(path, format_packing(packing)).map_err(|e| io_error(path, e))
}

pub fn read_packing(path: &Path) -> Result<Packing> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_packing(&text)
}

const SERIES_HEADER: &str = "# iteration eps";

/// Two-column error series: iteration number and error.
pub fn format_series(series: &[f64]) -> String {
    let mut out = String::with_capacity(32 * (series.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for (k, eps) in series.iter().enumerate() {
        out.push_str(&format!("{} {eps:.16e}\n", k + 1));
    }
    out
}

pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(parse_error(1, format!("expected `{SERIES_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let line_no = k + 2;
            let mut parts = line.split_whitespace();
            let (Some(i), Some(eps), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_error(line_no, "expected two columns"));
            };
            if i.parse::<usize>().ok() != Some(k + 1) {
                return Err(parse_error(line_no, format!("expected iteration {}, found `{i}`", k + 1)));
            }
            eps.parse::<f64>()
                .map_err(|_| parse_error(line_no, format!("cannot parse error value `{eps}`")))
        })
        .collect()
}

pub fn write_series(path: &Path, series: &[f64]) -> Result<()> {
    fs::write(path, format_series(series)).map_err(|e| io_error(path, e))
}

pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_series(&text)
}

/// Settings of one CLI invocation, echoed into summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub dim: usize,
    /// Fixed sphere count, or `None` in density-target mode.
    pub count: Option<usize>,
    pub density_ratio: Option<f64>,
    pub width: f64,
    pub params: RrrParams,
    pub trials: usize,
    pub output_dir: Option<String>,
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reproducibility {
    pub master_seed: u64,
    pub threads: usize,
    pub deterministic: bool,
}

impl Reproducibility {
    /// Results are deterministic with one thread, or with any thread count
    /// when the reduction does not depend on completion order.
    pub fn new(master_seed: u64, threads: usize, deterministic_reduction: bool) -> Self {
        Self {
            master_seed,
            threads,
            deterministic: threads == 1 || deterministic_reduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub iterations: u64,
    pub final_eps: f64,
    pub repair_shift: f64,
    pub min_distance: Option<f64>,
    pub packing_file: Option<String>,
    pub series_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSummary {
    pub config: RunConfig,
    pub instance: PackingInstance,
    pub density: f64,
    pub ball_bound: f64,
    /// Density over Ball's bound.
    pub ratio: f64,
    pub solved: usize,
    pub trials: Vec<TrialSummary>,
    pub stats: Option<IterationStats>,
    /// Smallest `min_distance` over the solved trials.
    pub min_distance: Option<f64>,
    pub reproducibility: Reproducibility,
}

impl CampaignSummary {
    pub fn new(config: RunConfig, instance: PackingInstance, trials: Vec<TrialSummary>, reproducibility: Reproducibility) -> Self {
        let stats = IterationStats::from_counts(
            trials
                .iter()
                .filter(|t| t.status == TrialStatus::Solved)
                .map(|t| t.iterations),
        );
        let solved = trials.iter().filter(|t| t.status == TrialStatus::Solved).count();
        let min_distance = trials
            .iter()
            .filter_map(|t| t.min_distance)
            .min_by(f64::total_cmp);
        let density = instance.density();
        let bound = ball_bound(instance.dim).unwrap_or(f64::NAN);
        Self {
            config,
            instance,
            density,
            ball_bound: bound,
            ratio: density / bound,
            solved,
            trials,
            stats,
            min_distance,
            reproducibility,
        }
    }

    fn check(&self) -> Result<()> {
        let r = &self.reproducibility;
        if (r.threads == 1 && !r.deterministic) || r.threads != self.config.threads {
            return Err(parse_error(0, "reproducibility block disagrees with the run configuration"));
        }
        if r.master_seed != self.config.params.seed {
            return Err(parse_error(0, "master seed disagrees with the run configuration"));
        }
        if self.solved != self.trials.iter().filter(|t| t.status == TrialStatus::Solved).count() {
            return Err(parse_error(0, "solved count disagrees with the trial list"));
        }
        if self.instance.dim != self.config.dim || self.trials.len() != self.config.trials {
            return Err(parse_error(0, "instance disagrees with the run configuration"));
        }
        Ok(())
    }
}

pub fn format_summary(summary: &CampaignSummary) -> Result<String> {
    serde_json::to_string_pretty(summary).map_err(|e| parse_error(0, e.to_string()))
}

pub fn parse_summary(text: &str) -> Result<CampaignSummary> {
    let summary: CampaignSummary =
        serde_json::from_str(text).map_err(|e| parse_error(e.line(), e.to_string()))?;
    summary.check()?;
    Ok(summary)
}

pub fn write_summary(path: &Path, summary: &CampaignSummary) -> Result<()> {
    fs::write(path, format_summary(summary)?).map_err(|e| io_error(path, e))
}

pub fn read_summary(path: &Path) -> Result<CampaignSummary> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_summary(&text)
}

/// First line of a checkpoint file: what the campaign is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub instance: PackingInstance,
    pub params: RrrParams,
    pub master_seed: u64,
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointRecord {
    pub index: usize,
    pub outcome: TrialOutcome,
}

/// Reads a JSON-lines checkpoint. A missing file yields `None`. An
/// unparsable final line (an interrupted write) is dropped; unparsable lines
/// elsewhere are errors.
pub fn read_checkpoint(path: &Path) -> Result<Option<(CheckpointHeader, Vec<CheckpointRecord>)>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_error(path, e)),
    };
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| io_error(path, e))?;
    let Some(first) = lines.first() else {
        return Ok(None);
    };
    let header: CheckpointHeader =
        serde_json::from_str(first).map_err(|e| parse_error(1, format!("checkpoint header: {e}")))?;
    let mut records = Vec::with_capacity(lines.len().saturating_sub(1));
    for (k, line) in lines.iter().enumerate().skip(1) {
        match serde_json::from_str::<CheckpointRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if k + 1 == lines.len() => break,
            Err(e) => return Err(parse_error(k + 1, format!("checkpoint record: {e}"))),
        }
    }
    Ok(Some((header, records)))
}

/// Appends records to a checkpoint file, writing the header if the file is
/// new. Each record is flushed as one line.
#[derive(Debug)]
pub struct CheckpointWriter {
    file: File,
    path: std::path::PathBuf,
}

impl CheckpointWriter {
    pub fn open(path: &Path, header: &CheckpointHeader) -> Result<Self> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        let mut writer = Self {
            file,
            path: path.to_path_buf(),
        };
        if fresh {
            writer.write_line(&serde_json::to_string(header).map_err(|e| io_error(path, e))?)?;
        }
        Ok(writer)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| io_error(&self.path, e))
    }

    pub fn append(&mut self, record: &CheckpointRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| io_error(&self.path, e))?;
        self.write_line(&line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn two_sphere_packing() -> Packing {
        Packing {
            dim: 4,
            width: 1.0,
            seed: 17,
            centers: vec![
                TorusVector(vec![0.1, -0.2, 0.3, 0.5]),
                TorusVector(vec![-0.4, 0.3, -0.2, 0.0]),
            ],
        }
    }

    const GOLDEN: &str = "\
# n 4
# w 1.0000000000000000e0
# N 2
# seed 17
1.0000000000000001e-1 -2.0000000000000001e-1 2.9999999999999999e-1 -5.0000000000000000e-1
-4.0000000000000002e-1 2.9999999999999999e-1 -2.0000000000000001e-1 0.0000000000000000e0
";

    #[test]
    fn golden_packing_file() {
        let text = format_packing(&two_sphere_packing());
        assert!(text.starts_with(GOLDEN), "{text}");
        let crc = crc32fast::hash(GOLDEN.as_bytes());
        assert_eq!(&text[GOLDEN.len()..], format!("# crc32 {crc:08x}\n"));
    }

    #[test]
    fn packing_round_trip_is_bit_exact() {
        let p = two_sphere_packing();
        let text = format_packing(&p);
        let back = parse_packing(&text).unwrap();
        assert_eq!(back.centers[0].0[3], -0.5);
        assert_eq!(back.centers[1], p.centers[1]);
        assert_eq!(format_packing(&back), text);
        // Without the checksum line the file still parses.
        assert_eq!(parse_packing(GOLDEN).unwrap(), back);
    }

    #[test]
    fn packing_file_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        write_packing(&path, &two_sphere_packing()).unwrap();
        assert_eq!(read_packing(&path).unwrap().count(), 2);
        assert!(matches!(read_packing(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn count_mismatch_names_the_header_line() {
        let text = GOLDEN.replace("# N 2", "# N 3");
        assert_eq!(
            parse_packing(&text).unwrap_err(),
            Error::Parse {
                line: 3,
                message: "header declares 3 centers but the file has 2 coordinate lines".into()
            }
        );
    }

    #[test]
    fn out_of_range_coordinate_is_rejected() {
        let text = GOLDEN.replace("0.0000000000000000e0\n", "0.73\n");
        match parse_packing(&text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 6);
                assert!(message.contains("0.73"));
            }
            e => panic!("{e}"),
        }
        let text = GOLDEN.replace("0.0000000000000000e0\n", "0.5\n");
        assert!(parse_packing(&text).is_err());
    }

    #[test]
    fn malformed_bodies_are_rejected() {
        for bad in [
            GOLDEN.replace(" 0.0000000000000000e0\n", "\n"),
            GOLDEN.replace("0.0000000000000000e0\n", "nan\n"),
            GOLDEN.replace("0.0000000000000000e0\n", "x\n"),
            GOLDEN.replace("# seed 17", "# seed"),
            GOLDEN.replace("# w 1.0000000000000000e0", "# w -1"),
            String::new(),
        ] {
            assert!(parse_packing(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn every_header_mutation_is_rejected() {
        let text = format_packing(&two_sphere_packing());
        let lines: Vec<&str> = text.lines().collect();
        let header_lines: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with('#')).collect();
        assert_eq!(header_lines.len(), 5);
        for &i in &header_lines {
            let parts: Vec<&str> = lines[i].split(' ').collect();
            let mutations = [
                format!("# {}x {}", parts[1], parts[2]),
                format!("# {} {}1", parts[1], parts[2]),
                format!("# {} 2", parts[1]),
                format!("# {}", parts[1]),
            ];
            for m in mutations {
                if m == lines[i] {
                    continue;
                }
                let mut mutated = lines.clone();
                mutated[i] = &m;
                let mutated = mutated.join("\n") + "\n";
                assert!(parse_packing(&mutated).is_err(), "accepted mutation `{m}`");
            }
        }
    }

    #[test]
    fn golden_series_file() {
        let text = format_series(&[0.5, 1e-5]);
        assert_eq!(text, "# iteration eps\n1 5.0000000000000000e-1\n2 1.0000000000000001e-5\n");
        assert_eq!(parse_series(&text).unwrap(), vec![0.5, 1e-5]);
        assert!(parse_series(&text.replace("# iteration", "# iter")).is_err());
        assert!(parse_series(&text.replace("\n2 ", "\n3 ")).is_err());
        assert!(parse_series("# iteration eps\n1\n").is_err());
    }

    fn summary(threads: usize) -> CampaignSummary {
        let params = RrrParams {
            seed: 5,
            ..RrrParams::default()
        };
        let instance = PackingInstance::new(14, 115, 1.0).unwrap();
        let config = RunConfig {
            subcommand: "pack".into(),
            dim: 14,
            count: Some(115),
            density_ratio: None,
            width: 1.0,
            params,
            trials: 2,
            output_dir: None,
            threads,
        };
        let trial = |index, status, iterations| TrialSummary {
            index,
            seed: 0,
            status,
            iterations,
            final_eps: 1e-5,
            repair_shift: 0.0,
            min_distance: Some(0.9999),
            packing_file: None,
            series_file: None,
        };
        CampaignSummary::new(
            config,
            instance,
            vec![trial(0, TrialStatus::Solved, 1000), trial(1, TrialStatus::MonotoneViolation, 40)],
            Reproducibility::new(5, threads, false),
        )
    }

    #[test]
    fn summary_fields() {
        let s = summary(1);
        assert!((s.ratio - 2.651).abs() < 1e-3);
        assert_eq!(s.solved, 1);
        assert_eq!(s.stats.unwrap().mean, 1000.0);
        assert!(s.reproducibility.deterministic);
        assert!(!summary(4).reproducibility.deterministic);
        assert!(Reproducibility::new(0, 4, true).deterministic);
        let text = format_summary(&s).unwrap();
        assert_eq!(parse_summary(&text).unwrap(), s);
    }

    #[test]
    fn summary_rejects_mutated_fields() {
        let text = format_summary(&summary(1)).unwrap();
        for (from, to) in [
            ("\"master_seed\": 5", "\"master_seed\": 6"),
            ("\"threads\": 1,\n", "\"threads\": 2,\n"),
            ("\"solved\": 1", "\"solved\": 2"),
            ("\"reproducibility\"", "\"reproducible\""),
            ("\"deterministic\"", "\"determinism\""),
        ] {
            let mutated = text.replacen(from, to, 1);
            assert_ne!(mutated, text, "{from}");
            assert!(parse_summary(&mutated).is_err(), "accepted {to}");
        }
    }

    #[test]
    fn checkpoint_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        assert!(read_checkpoint(&path).unwrap().is_none());
        let header = CheckpointHeader {
            instance: PackingInstance::new(4, 2, 1.0).unwrap(),
            params: RrrParams::default(),
            master_seed: 3,
        };
        let outcome = TrialOutcome {
            status: TrialStatus::IterationCap,
            iterations: 7,
            final_eps: 0.25,
            packing: None,
            repair_shift: 0.0,
            error_series: vec![0.5, 0.25],
        };
        {
            let mut w = CheckpointWriter::open(&path, &header).unwrap();
            w.append(&CheckpointRecord {
                index: 4,
                outcome: outcome.clone(),
            })
            .unwrap();
        }
        CheckpointWriter::open(&path, &header).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"index\": 5, \"outc");
        fs::write(&path, &text).unwrap();
        let (h, records) = read_checkpoint(&path).unwrap().unwrap();
        assert_eq!(h, header);
        assert_eq!(records, vec![CheckpointRecord { index: 4, outcome }]);
    }

    proptest! {
        #[test]
        fn packing_round_trip(
            coords in proptest::collection::vec(-10.0f64..10.0, 12),
            width in 1.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let centers = coords.chunks(3).map(|c| crate::torus::reduce(c, width)).collect();
            let p = Packing { dim: 3, width, seed, centers };
            let text = format_packing(&p);
            let back = parse_packing(&text).unwrap();
            prop_assert_eq!(format_packing(&back), text);
            for (a, b) in back.centers.iter().zip(&p.centers) {
                for (x, y) in a.0.iter().zip(&b.0) {
                    prop_assert!(*x == *y || (*y == 0.5 * width && *x == -0.5 * width));
                }
            }
        }
    }
}
