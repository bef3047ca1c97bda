//! Load a multi-task dataset from CSV files.
//!
//! Two layouts are supported: a single file with a domain column naming the
//! task of each row, or one file per task. Rows with missing fields are
//! dropped (and counted); non-numeric fields are an error. Because the
//! inference model needs equally-sized source tasks and a known noise
//! level, the loader subsamples domains to a common size (seeded, so
//! reproducible), optionally rescales each design column to unit root mean
//! square over the pooled rows (no centering, responses untouched), and
//! either takes the noise variance from the caller or estimates it from the
//! residuals of a preliminary target-only fit — flagging the estimate in
//! the report.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data_model::{MultiTaskData, TaskData};
use crate::error::{CoreError, Result};
use crate::weighted_lasso::{solve, L1Problem, SolveOptions};

/// How rows are assigned to tasks.
#[derive(Debug, Clone, Serialize)]
pub enum DomainSpec {
    /// One file; the named column holds a task label per row, and rows whose
    /// label equals `target_value` form the target task. Every other label
    /// becomes one source task (in lexicographic label order).
    Column { name: String, target_value: String },
    /// The ingested path holds the target task; each listed file holds one
    /// source task with the same columns.
    Files { sources: Vec<PathBuf> },
}

/// Ingestion settings.
#[derive(Debug, Clone, Serialize)]
pub struct IngestOptions {
    /// Name of the response column.
    pub response_column: String,
    pub domain: DomainSpec,
    /// Rows to keep from the target domain (default: all).
    pub target_rows: Option<usize>,
    /// Rows to keep from every source domain (default: the size of the
    /// smallest source).
    pub source_rows: Option<usize>,
    /// Seed of the subsampling shuffle.
    pub seed: u64,
    /// Rescale each design column to unit root mean square over all kept
    /// rows.
    pub standardize: bool,
    /// Known noise variance; when absent it is estimated from target
    /// residuals.
    pub sigma2: Option<f64>,
}

impl IngestOptions {
    pub fn new(response_column: impl Into<String>, domain: DomainSpec) -> Self {
        IngestOptions {
            response_column: response_column.into(),
            domain,
            target_rows: None,
            source_rows: None,
            seed: 0,
            standardize: true,
            sigma2: None,
        }
    }
}

/// What the loader did, for the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub feature_names: Vec<String>,
    /// Task labels, target first.
    pub domains: Vec<String>,
    /// Rows kept per domain, aligned with `domains`.
    pub rows_used: Vec<usize>,
    /// Rows dropped for missing fields per domain, aligned with `domains`.
    pub rows_dropped: Vec<usize>,
    /// Rows dropped because their domain label itself was missing.
    pub rows_dropped_unlabeled: usize,
    pub sigma2: f64,
    /// True when `sigma2` came from a preliminary fit instead of the caller;
    /// downstream validity is then approximate.
    pub sigma2_estimated: bool,
    /// Per-column divisors applied to the designs, when standardizing.
    pub column_scales: Option<Vec<f64>>,
}

struct RawDomain {
    label: String,
    rows: Vec<Vec<f64>>,
    responses: Vec<f64>,
    dropped: usize,
}

fn parse_field(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed.parse::<f64>().map(Some).map_err(|_| {
        CoreError::validation(format!(
            "row {row}: column '{column}' holds non-numeric value '{trimmed}'"
        ))
    })
}

/// Parse one CSV into (feature names, rows grouped by the optional domain
/// column).
fn read_file(
    path: &Path,
    response_column: &str,
    domain_column: Option<&str>,
) -> Result<(Vec<String>, Vec<RawDomain>, usize)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let response_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| {
            CoreError::validation(format!(
                "{}: no column named '{response_column}'",
                path.display()
            ))
        })?;
    let domain_idx = match domain_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            CoreError::validation(format!("{}: no column named '{name}'", path.display()))
        })?),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != response_idx && Some(*i) != domain_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(CoreError::validation(format!(
            "{}: no feature columns left after removing the response and domain columns",
            path.display()
        )));
    }

    let mut domains: Vec<RawDomain> = Vec::new();
    let mut unlabeled = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let label = match domain_idx {
            Some(d) => {
                let raw = record.get(d).unwrap_or("").trim();
                if raw.is_empty() {
                    unlabeled += 1;
                    continue;
                }
                raw.to_string()
            }
            None => String::new(),
        };
        let slot = match domains.iter().position(|d| d.label == label) {
            Some(pos) => pos,
            None => {
                domains.push(RawDomain {
                    label,
                    rows: Vec::new(),
                    responses: Vec::new(),
                    dropped: 0,
                });
                domains.len() - 1
            }
        };
        let mut features = Vec::with_capacity(feature_names.len());
        let mut complete = true;
        for (c, header) in headers.iter().enumerate() {
            if c == response_idx || Some(c) == domain_idx {
                continue;
            }
            match parse_field(record.get(c).unwrap_or(""), row_no, header)? {
                Some(v) => features.push(v),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        let response = if complete {
            match parse_field(record.get(response_idx).unwrap_or(""), row_no, response_column)? {
                Some(v) => Some(v),
                None => None,
            }
        } else {
            None
        };
        match response {
            Some(y) => {
                domains[slot].rows.push(features);
                domains[slot].responses.push(y);
            }
            None => domains[slot].dropped += 1,
        }
    }
    Ok((feature_names, domains, unlabeled))
}

fn subsample(len: usize, want: usize, label: &str, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if want > len {
        return Err(CoreError::validation(format!(
            "domain '{label}' has {len} usable rows but {want} were requested"
        )));
    }
    if want == 0 {
        return Err(CoreError::validation(format!("domain '{label}' has no usable rows")));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.truncate(want);
    idx.sort_unstable();
    Ok(idx)
}

fn to_matrix(domain: &RawDomain, keep: &[usize], p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(keep.len(), p, |r, c| domain.rows[keep[r]][c]);
    let y = DVector::from_iterator(keep.len(), keep.iter().map(|&r| domain.responses[r]));
    (x, y)
}

/// Load a dataset. Returns the model-ready data plus a report of every
/// transformation applied.
pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<(MultiTaskData, IngestReport)> {
    if let Some(s2) = opts.sigma2 {
        if !(s2.is_finite() && s2 > 0.0) {
            return Err(CoreError::validation("supplied noise variance must be positive"));
        }
    }
    // Collect raw domains, target first.
    let (feature_names, ordered, unlabeled) = match &opts.domain {
        DomainSpec::Column { name, target_value } => {
            let (features, mut domains, unlabeled) = read_file(path, &opts.response_column, Some(name))?;
            let target_pos = domains
                .iter()
                .position(|d| &d.label == target_value)
                .ok_or_else(|| {
                    CoreError::validation(format!(
                        "no rows with domain label '{target_value}' in {}",
                        path.display()
                    ))
                })?;
            let target = domains.remove(target_pos);
            domains.sort_by(|a, b| a.label.cmp(&b.label));
            let mut ordered = vec![target];
            ordered.extend(domains);
            (features, ordered, unlabeled)
        }
        DomainSpec::Files { sources } => {
            if sources.is_empty() {
                return Err(CoreError::validation("need at least one source file"));
            }
            let (features, mut domains, _) = read_file(path, &opts.response_column, None)?;
            let mut target = domains.pop().ok_or_else(|| {
                CoreError::validation(format!("{}: no data rows", path.display()))
            })?;
            target.label = file_label(path);
            let mut ordered = vec![target];
            for source_path in sources {
                let (source_features, mut source_domains, _) =
                    read_file(source_path, &opts.response_column, None)?;
                if source_features != features {
                    return Err(CoreError::validation(format!(
                        "{}: columns do not match the target file",
                        source_path.display()
                    )));
                }
                let mut d = source_domains.pop().ok_or_else(|| {
                    CoreError::validation(format!("{}: no data rows", source_path.display()))
                })?;
                d.label = file_label(source_path);
                ordered.push(d);
            }
            (features, ordered, 0)
        }
    };
    if ordered.len() < 2 {
        return Err(CoreError::validation(
            "the domain partition must yield one target and at least one source",
        ));
    }
    let p = feature_names.len();

    // Subsample each domain with its own seeded stream (stable under domain
    // reordering in the file).
    let target_want = opts.target_rows.unwrap_or(ordered[0].rows.len());
    let source_want = opts
        .source_rows
        .unwrap_or_else(|| ordered[1..].iter().map(|d| d.rows.len()).min().unwrap_or(0));
    let mut kept: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(ordered.len());
    for (i, domain) in ordered.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64 + 1);
        let want = if i == 0 { target_want } else { source_want };
        let keep = subsample(domain.rows.len(), want, &domain.label, &mut rng)?;
        kept.push(to_matrix(domain, &keep, p));
    }

    // Optional scale-only standardization by pooled column RMS.
    let column_scales = if opts.standardize {
        let total_rows: usize = kept.iter().map(|(x, _)| x.nrows()).sum();
        let mut scales = vec![0.0f64; p];
        for (x, _) in &kept {
            for c in 0..p {
                scales[c] += x.column(c).norm_squared();
            }
        }
        for s in scales.iter_mut() {
            *s = (*s / total_rows as f64).sqrt();
            if !(*s > 1e-300) {
                *s = 1.0;
            }
        }
        for (x, _) in kept.iter_mut() {
            for c in 0..p {
                let mut col = x.column_mut(c);
                col /= scales[c];
            }
        }
        Some(scales)
    } else {
        None
    };

    // Noise variance: supplied, or estimated from a preliminary target fit.
    let (sigma2, sigma2_estimated) = match opts.sigma2 {
        Some(s2) => (s2, false),
        None => {
            let (x0, y0) = &kept[0];
            let n_t = x0.nrows();
            let lambda = (p.max(2) as f64).ln().sqrt() / (n_t as f64).sqrt();
            let problem = L1Problem::new(
                x0.clone(),
                y0.clone(),
                lambda,
                DVector::from_element(p, 1.0),
                n_t as f64,
            )?;
            let fit = solve(&problem, &SolveOptions::default())?;
            let resid = y0 - x0 * &fit.beta;
            let df = fit.beta.iter().filter(|b| b.abs() > crate::data_model::ZERO_THRESHOLD).count();
            let denom = n_t.saturating_sub(df).max(1);
            let s2 = resid.norm_squared() / denom as f64;
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(CoreError::degenerate(
                    "target residuals vanish; supply the noise variance explicitly",
                ));
            }
            (s2, true)
        }
    };

    let mut tasks = kept.into_iter();
    let (x0, y0) = tasks.next().expect("target present");
    let target = TaskData::with_iso_noise(x0, y0, sigma2)?;
    let sources = tasks
        .map(|(x, y)| TaskData::with_iso_noise(x, y, sigma2))
        .collect::<Result<Vec<_>>>()?;
    let report = IngestReport {
        feature_names,
        domains: ordered.iter().map(|d| d.label.clone()).collect(),
        rows_used: std::iter::once(target.n())
            .chain(sources.iter().map(|s| s.n()))
            .collect(),
        rows_dropped: ordered.iter().map(|d| d.dropped).collect(),
        rows_dropped_unlabeled: unlabeled,
        sigma2,
        sigma2_estimated,
        column_scales,
    };
    let data = MultiTaskData::new(target, sources)?;
    Ok((data, report))
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Write a dataset back out in the single-file layout: a domain column,
/// the feature columns, then the response.
pub fn export_csv(
    data: &MultiTaskData,
    report: &IngestReport,
    domain_column: &str,
    response_column: &str,
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![domain_column.to_string()];
    header.extend(report.feature_names.iter().cloned());
    header.push(response_column.to_string());
    writer.write_record(&header)?;
    let tasks = std::iter::once((&report.domains[0], &data.target))
        .chain(report.domains[1..].iter().zip(data.sources.iter()).map(|(l, t)| (l, t)));
    for (label, task) in tasks {
        for r in 0..task.n() {
            let mut row = vec![label.clone()];
            for c in 0..task.p() {
                row.push(task.design[(r, c)].to_string());
            }
            row.push(task.response[r].to_string());
            writer.write_record(&row)?;
        }
    }
    writer.flush().map_err(|e| CoreError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn fixture(dir: &Path) -> PathBuf {
        let path = dir.join("fixture.csv");
        let mut body = String::from("domain,x1,x2,x3,y\n");
        // 4 target rows, then two sources with 3 rows each
        let rows = [
            ("t", [1.5, -0.25, 2.0], 0.75),
            ("t", [0.5, 1.0, -1.0], 1.25),
            ("t", [-2.0, 0.125, 0.5], -0.5),
            ("t", [1.0, 1.0, 1.0], 2.0),
            ("a", [0.25, -1.5, 1.0], 0.5),
            ("a", [2.0, 0.5, -0.75], 1.5),
            ("a", [-1.0, 2.0, 0.25], -1.25),
            ("b", [0.75, 0.75, -2.0], 0.25),
            ("b", [-0.5, -0.5, 1.5], -0.75),
            ("b", [1.25, -1.0, 0.5], 1.0),
        ];
        for (d, x, y) in rows {
            body.push_str(&format!("{d},{},{},{},{y}\n", x[0], x[1], x[2]));
        }
        fs::write(&path, body).unwrap();
        path
    }

    fn base_options() -> IngestOptions {
        let mut opts = IngestOptions::new(
            "y",
            DomainSpec::Column { name: "domain".into(), target_value: "t".into() },
        );
        opts.standardize = false;
        opts.sigma2 = Some(1.0);
        opts
    }

    #[test]
    fn fixture_shapes_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let (data, report) = ingest_csv(&path, &base_options()).unwrap();
        assert_eq!(report.feature_names, vec!["x1", "x2", "x3"]);
        assert_eq!(report.domains, vec!["t", "a", "b"]);
        assert_eq!(report.rows_used, vec![4, 3, 3]);
        assert_eq!(report.rows_dropped, vec![0, 0, 0]);
        assert_eq!(data.n_t(), 4);
        assert_eq!(data.n_s(), 3);
        assert_eq!(data.k(), 2);
        assert_eq!(data.feature_count(), 3);
        assert_eq!(data.target.design[(0, 0)], 1.5);
        assert_eq!(data.target.response[3], 2.0);
        assert_eq!(data.sources[1].design[(2, 2)], 0.5);
        assert!(!report.sigma2_estimated);
        assert_eq!(data.target.covariance[(0, 0)], 1.0);
    }

    #[test]
    fn round_trip_reproduces_the_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let (data, report) = ingest_csv(&path, &base_options()).unwrap();
        let out = dir.path().join("export.csv");
        export_csv(&data, &report, "domain", "y", &out).unwrap();
        let original = fs::read_to_string(&path).unwrap();
        let exported = fs::read_to_string(&out).unwrap();
        let parse = |s: &str| {
            s.lines()
                .skip(1)
                .map(|l| {
                    l.split(',')
                        .map(|f| f.parse::<f64>().map_err(|_| f.to_string()))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(parse(&original), parse(&exported));
    }

    #[test]
    fn oversized_requests_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let mut opts = base_options();
        opts.target_rows = Some(10);
        let err = ingest_csv(&path, &opts).unwrap_err();
        assert!(err.to_string().contains("4 usable rows but 10 were requested"));
    }

    #[test]
    fn subsampling_is_seeded_and_sized() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let mut opts = base_options();
        opts.target_rows = Some(3);
        opts.source_rows = Some(2);
        opts.seed = 5;
        let (a, ra) = ingest_csv(&path, &opts).unwrap();
        let (b, _) = ingest_csv(&path, &opts).unwrap();
        assert_eq!(ra.rows_used, vec![3, 2, 2]);
        assert_eq!(a.target.design, b.target.design);
        assert_eq!(a.sources[0].response, b.sources[0].response);
    }

    #[test]
    fn missing_fields_drop_rows_and_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gaps.csv");
        fs::write(
            &path,
            "domain,x1,x2,y\n\
             t,1.0,2.0,0.5\n\
             t,,2.0,0.5\n\
             t,1.0,2.0,\n\
             t,0.5,1.0,1.5\n\
             t,0.25,-1.0,0.75\n\
             s,1.0,1.0,1.0\n\
             s,2.0,0.5,0.25\n\
             ,3.0,1.0,2.0\n",
        )
        .unwrap();
        let mut opts = base_options();
        let (data, report) = ingest_csv(&path, &opts).unwrap();
        assert_eq!(report.rows_used, vec![3, 2]);
        assert_eq!(report.rows_dropped, vec![2, 0]);
        assert_eq!(report.rows_dropped_unlabeled, 1);
        assert_eq!(data.n_t(), 3);
        // non-numeric is an error, not a drop
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "domain,x1,y\nt,oops,1.0\nt,1.0,2.0\ns,1.0,1.0\n").unwrap();
        opts.sigma2 = Some(1.0);
        let err = ingest_csv(&bad, &opts).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "{err}");
        assert!(err.to_string().contains("x1"), "{err}");
    }

    #[test]
    fn standardization_gives_unit_pooled_rms() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let mut opts = base_options();
        opts.standardize = true;
        let (data, report) = ingest_csv(&path, &opts).unwrap();
        let scales = report.column_scales.unwrap();
        assert_eq!(scales.len(), 3);
        let total_rows = (data.n_t() + data.k() * data.n_s()) as f64;
        for c in 0..3 {
            let mut ss = data.target.design.column(c).norm_squared();
            for s in &data.sources {
                ss += s.design.column(c).norm_squared();
            }
            assert!(((ss / total_rows).sqrt() - 1.0).abs() < 1e-12, "column {c}");
            assert!(scales[c] > 0.0);
        }
        // responses untouched
        assert_eq!(data.target.response[0], 0.75);
    }

    #[test]
    fn sigma2_is_estimated_when_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = fixture(dir.path());
        let mut opts = base_options();
        opts.sigma2 = None;
        let (data, report) = ingest_csv(&path, &opts).unwrap();
        assert!(report.sigma2_estimated);
        assert!(report.sigma2 > 0.0);
        assert_eq!(data.target.covariance[(1, 1)], report.sigma2);
        assert_eq!(data.sources[0].covariance[(2, 2)], report.sigma2);
    }

    #[test]
    fn file_per_task_layout_works() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("target.csv");
        let s1 = dir.path().join("s1.csv");
        let s2 = dir.path().join("s2.csv");
        fs::write(&target, "x1,x2,y\n1.0,2.0,0.5\n0.5,1.0,0.25\n-1.0,0.5,1.0\n").unwrap();
        fs::write(&s1, "x1,x2,y\n2.0,1.0,1.5\n0.25,-1.0,0.5\n").unwrap();
        fs::write(&s2, "x1,x2,y\n1.5,0.5,0.75\n-0.5,2.0,1.25\n0.75,0.25,0.5\n").unwrap();
        let mut opts = IngestOptions::new(
            "y",
            DomainSpec::Files { sources: vec![s1.clone(), s2.clone()] },
        );
        opts.standardize = false;
        opts.sigma2 = Some(2.0);
        let (data, report) = ingest_csv(&target, &opts).unwrap();
        assert_eq!(report.domains, vec!["target", "s1", "s2"]);
        // sources clipped to the smallest source size
        assert_eq!(data.n_s(), 2);
        assert_eq!(data.n_t(), 3);
        assert_eq!(report.rows_used, vec![3, 2, 2]);
        // mismatched columns are an error
        let s3 = dir.path().join("s3.csv");
        fs::write(&s3, "x1,z9,y\n1.0,1.0,1.0\n").unwrap();
        let opts_bad = IngestOptions::new(
            "y",
            DomainSpec::Files { sources: vec![s3] },
        );
        assert!(ingest_csv(&target, &opts_bad).is_err());
    }
}
