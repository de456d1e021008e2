//! Plain-text persistence: CSV matrices and the reduced-model archive.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::eim::{EimApprox, FieldSource, Selection};
use crate::fem::Nonlinearity;
use crate::mesh::GridMode;
use crate::numerics::DenseMatrix;
use crate::pod::RBasis;
use crate::rom::{PointTable, ReducedModel};
use crate::{PreimError, Result};

fn format_err(path: &Path, reason: impl Into<String>) -> PreimError {
    PreimError::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Writes one comma-separated row per item, floats with 17 significant digits.
pub fn write_rows<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v:.16e}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV of floats. Blank lines are skipped.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn write_int_rows<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        let line = row.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_int_rows(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))
                })
                .collect()
        })
        .collect()
}

/// Layout version written to and required in `manifest.txt`.
pub const ARCHIVE_VERSION: u32 = 1;

/// Descriptive metadata stored next to a reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveInfo {
    pub case: String,
    pub algorithm: String,
    pub refine: usize,
    pub eps_pod: f64,
    pub eps_eim: f64,
    pub eps_rb: Option<f64>,
    pub grid_mode: GridMode,
    /// Closed parameter interval the model was trained on.
    pub mu_range: (f64, f64),
}

/// Parsed `manifest.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub info: ArchiveInfo,
    pub basis_len: usize,
    pub eim_rank: usize,
    pub num_steps: usize,
    pub num_dofs: usize,
    pub grid_len: usize,
}

fn nonlinearity_entries(nl: &Nonlinearity) -> Result<Vec<(&'static str, String)>> {
    Ok(match nl {
        Nonlinearity::Zero => vec![("nonlinearity", "zero".into())],
        Nonlinearity::SolutionSine { u_ref, u_max, period } => vec![
            ("nonlinearity", "solution_sine".into()),
            ("nl_u_ref", format!("{u_ref:?}")),
            ("nl_u_max", format!("{u_max:?}")),
            ("nl_period", format!("{period:?}")),
        ],
        Nonlinearity::GradientSineSquared { omega } => {
            vec![("nonlinearity", "gradient_sine_squared".into()), ("nl_omega", format!("{omega:?}"))]
        }
        Nonlinearity::CustomValue(_) | Nonlinearity::CustomGradient(_) => {
            return Err(PreimError::UnsupportedConfiguration(
                "closure nonlinearities cannot be written to an archive".into(),
            ))
        }
    })
}

struct KeyValues<'a> {
    path: &'a Path,
    map: HashMap<String, String>,
}

impl KeyValues<'_> {
    fn raw(&self, key: &str) -> Result<&str> {
        self.map.get(key).map(String::as_str).ok_or_else(|| format_err(self.path, format!("missing key `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)?.parse().map_err(|e| format_err(self.path, format!("key `{key}`: {e}")))
    }
}

fn parse_nonlinearity(kv: &KeyValues<'_>) -> Result<Nonlinearity> {
    match kv.raw("nonlinearity")? {
        "zero" => Ok(Nonlinearity::Zero),
        "solution_sine" => Ok(Nonlinearity::SolutionSine {
            u_ref: kv.get("nl_u_ref")?,
            u_max: kv.get("nl_u_max")?,
            period: kv.get("nl_period")?,
        }),
        "gradient_sine_squared" => Ok(Nonlinearity::GradientSineSquared { omega: kv.get("nl_omega")? }),
        other => Err(format_err(kv.path, format!("unknown nonlinearity `{other}`"))),
    }
}

fn read_kv(path: &Path) -> Result<KeyValues<'_>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(KeyValues { path, map })
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let data = read_rows(path)?;
    if data.len() != rows || data.iter().any(|r| r.len() != cols) {
        return Err(format_err(path, format!("expected a {rows}x{cols} matrix")));
    }
    DenseMatrix::from_row_major(rows, cols, data.concat())
}

fn read_vector(path: &Path, len: usize) -> Result<Vec<f64>> {
    Ok(read_matrix(path, 1, len)?.as_slice().to_vec())
}

/// Column-major table stored row by row: `cols[j][i]` becomes entry `(i, j)`.
fn write_columns(path: &Path, cols: &[Vec<f64>], rows: usize) -> Result<()> {
    write_rows(path, (0..rows).map(|i| cols.iter().map(|c| c[i]).collect::<Vec<_>>()))
}

fn read_columns(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    let m = read_matrix(path, rows, cols)?;
    Ok((0..cols).map(|j| m.column(j)).collect())
}

/// A reduced model on disk.
///
/// [`RomArchive::load`] reads only reduced-size files. The nodal basis and the
/// interpolation functions on the full grid are read on demand.
#[derive(Debug, Clone)]
pub struct RomArchive {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub rom: ReducedModel,
}

impl RomArchive {
    pub fn save(dir: &Path, info: &ArchiveInfo, rom: &ReducedModel, basis: &RBasis, eim: &EimApprox) -> Result<()> {
        let n = rom.basis_len();
        let m = rom.eim_rank();
        if basis.len() != n || eim.rank() != m || eim.points() != rom.points.as_slice() {
            return Err(PreimError::invalid("basis or interpolation does not match the reduced model"));
        }
        let dofs = basis.dofs();
        let mut entries: Vec<(&str, String)> = vec![
            ("version", ARCHIVE_VERSION.to_string()),
            ("case", info.case.clone()),
            ("algorithm", info.algorithm.clone()),
            ("refine", info.refine.to_string()),
            ("N", n.to_string()),
            ("M", m.to_string()),
            ("K", rom.num_steps().to_string()),
            ("dofs", dofs.to_string()),
            ("grid_len", eim.grid_len().to_string()),
            ("grid_mode", info.grid_mode.to_string()),
            ("eps_pod", format!("{:?}", info.eps_pod)),
            ("eps_eim", format!("{:?}", info.eps_eim)),
            ("eps_rb", info.eps_rb.map_or_else(|| "none".to_string(), |e| format!("{e:?}"))),
            ("mu_min", format!("{:?}", info.mu_range.0)),
            ("mu_max", format!("{:?}", info.mu_range.1)),
            ("table", match rom.table {
                PointTable::Values(_) => "values".into(),
                PointTable::Gradients(_) => "gradients".into(),
            }),
        ];
        entries.extend(nonlinearity_entries(&rom.nonlinearity)?);

        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
        for (k, v) in &entries {
            writeln!(w, "{k}={v}")?;
        }
        w.flush()?;

        let matrix_rows = |a: &DenseMatrix| (0..a.rows()).map(|i| a.row(i).to_vec()).collect::<Vec<_>>();
        write_rows(&dir.join("times.csv"), [rom.times.clone()])?;
        write_rows(&dir.join("Mr.csv"), matrix_rows(&rom.mass))?;
        write_rows(&dir.join("A0r.csv"), matrix_rows(&rom.stiffness))?;
        write_rows(&dir.join("fk.csv"), rom.loads.iter().cloned())?;
        write_rows(&dir.join("u0r.csv"), [rom.u0.clone()])?;
        write_rows(&dir.join("B.csv"), matrix_rows(&rom.b))?;
        write_int_rows(&dir.join("xpoints.csv"), [rom.points.clone()])?;
        write_rows(&dir.join("theta_at_points.csv"), matrix_rows(rom.table.matrix()))?;
        for (j, c) in rom.c.iter().enumerate() {
            write_rows(&dir.join(format!("Cj_{}.csv", j + 1)), matrix_rows(c))?;
        }
        write_columns(&dir.join("basis.csv"), &basis.vectors, dofs)?;
        write_rows(&dir.join("basis_sigmas.csv"), [basis.sigmas.clone()])?;
        write_columns(&dir.join("q.csv"), eim.q_funcs(), eim.grid_len())?;
        let mut log = BufWriter::new(fs::File::create(dir.join("eim_log.csv"))?);
        for s in eim.log() {
            writeln!(log, "{:?},{},{},{:?},{}", s.mu, s.k, s.point, s.residual_norm, s.source.as_str())?;
        }
        log.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let kv = read_kv(&manifest_path)?;
        let version: u32 = kv.get("version")?;
        if version != ARCHIVE_VERSION {
            return Err(format_err(
                &manifest_path,
                format!("archive version {version} is not supported (expected {ARCHIVE_VERSION})"),
            ));
        }
        let eps_rb = match kv.raw("eps_rb")? {
            "none" => None,
            _ => Some(kv.get("eps_rb")?),
        };
        let manifest = Manifest {
            version,
            info: ArchiveInfo {
                case: kv.raw("case")?.to_string(),
                algorithm: kv.raw("algorithm")?.to_string(),
                refine: kv.get("refine")?,
                eps_pod: kv.get("eps_pod")?,
                eps_eim: kv.get("eps_eim")?,
                eps_rb,
                grid_mode: kv.get("grid_mode")?,
                mu_range: (kv.get("mu_min")?, kv.get("mu_max")?),
            },
            basis_len: kv.get("N")?,
            eim_rank: kv.get("M")?,
            num_steps: kv.get("K")?,
            num_dofs: kv.get("dofs")?,
            grid_len: kv.get("grid_len")?,
        };
        let nonlinearity = parse_nonlinearity(&kv)?;
        let gradients = match kv.raw("table")? {
            "values" => false,
            "gradients" => true,
            other => return Err(format_err(&manifest_path, format!("unknown table kind `{other}`"))),
        };
        let (n, m, k) = (manifest.basis_len, manifest.eim_rank, manifest.num_steps);

        let times = read_vector(&dir.join("times.csv"), k + 1)?;
        let mass = read_matrix(&dir.join("Mr.csv"), n, n)?;
        let stiffness = read_matrix(&dir.join("A0r.csv"), n, n)?;
        let loads = read_rows(&dir.join("fk.csv"))?;
        if loads.len() != k || loads.iter().any(|f| f.len() != n) {
            return Err(format_err(&dir.join("fk.csv"), format!("expected a {k}x{n} matrix")));
        }
        let u0 = read_vector(&dir.join("u0r.csv"), n)?;
        let b = read_matrix(&dir.join("B.csv"), m, m)?;
        let points = if m == 0 {
            Vec::new()
        } else {
            let rows = read_int_rows(&dir.join("xpoints.csv"))?;
            match rows.as_slice() {
                [p] if p.len() == m => p.clone(),
                _ => return Err(format_err(&dir.join("xpoints.csv"), format!("expected {m} point indices"))),
            }
        };
        let table_cols = if gradients { 2 * n } else { n };
        let table = read_matrix(&dir.join("theta_at_points.csv"), m, table_cols)?;
        let table = if gradients { PointTable::Gradients(table) } else { PointTable::Values(table) };
        let c = (1..=m).map(|j| read_matrix(&dir.join(format!("Cj_{j}.csv")), n, n)).collect::<Result<_>>()?;

        let rom = ReducedModel { nonlinearity, times, mass, stiffness, loads, u0, c, b, points, table };
        Ok(Self { dir: dir.to_path_buf(), manifest, rom })
    }

    /// Reads the nodal reduced basis.
    pub fn load_basis(&self) -> Result<RBasis> {
        let (dofs, n) = (self.manifest.num_dofs, self.manifest.basis_len);
        let vectors = read_columns(&self.dir.join("basis.csv"), dofs, n)?;
        let sigmas = read_vector(&self.dir.join("basis_sigmas.csv"), n)?;
        Ok(RBasis { vectors, sigmas, init_truncated: None })
    }

    /// Reads the interpolation functions on the full evaluation grid.
    pub fn load_eim(&self) -> Result<EimApprox> {
        let (grid, m) = (self.manifest.grid_len, self.manifest.eim_rank);
        let q = if m == 0 { Vec::new() } else { read_columns(&self.dir.join("q.csv"), grid, m)? };
        let log_path = self.dir.join("eim_log.csv");
        let text = fs::read_to_string(&log_path)?;
        let mut log = Vec::with_capacity(m);
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| format_err(&log_path, format!("line {}: {what}", i + 1));
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let source = match f[4] {
                "hf" => FieldSource::HighFidelity,
                "rb" => FieldSource::Reduced,
                _ => return Err(bad("unknown field source")),
            };
            log.push(Selection {
                mu: f[0].parse().map_err(|_| bad("bad parameter"))?,
                k: f[1].parse().map_err(|_| bad("bad time index"))?,
                point: f[2].parse().map_err(|_| bad("bad point"))?,
                residual_norm: f[3].parse().map_err(|_| bad("bad residual"))?,
                source,
            });
        }
        EimApprox::from_parts(grid, self.rom.points.clone(), q, log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let rows = vec![vec![0.1, -1.0 / 3.0, 1e-300], vec![f64::MAX, 293.0, -0.0]];
        write_rows(&p, rows.clone()).unwrap();
        let back = read_rows(&p).unwrap();
        for (a, b) in rows.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn sample_archive(dir: &Path) -> (ReducedModel, RBasis, EimApprox) {
        let mut cfg = crate::bench::testcase_a();
        cfg.refine = 2;
        cfg.steps = 10;
        let model = cfg.build_model().unwrap();
        let out = crate::standard::standard_offline(&model, &[2.0, 11.0, 20.0], 1e-3, 5e-2).unwrap();
        let info = cfg.archive_info(crate::bench::Algorithm::Standard);
        RomArchive::save(dir, &info, &out.rom, &out.basis, &out.eim).unwrap();
        (out.rom, out.basis, out.eim)
    }

    fn bits(m: &DenseMatrix) -> Vec<u64> {
        m.as_slice().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (rom, basis, eim) = sample_archive(dir.path());
        let arch = RomArchive::load(dir.path()).unwrap();
        let back = &arch.rom;
        assert_eq!(bits(&back.mass), bits(&rom.mass));
        assert_eq!(bits(&back.stiffness), bits(&rom.stiffness));
        assert_eq!(bits(&back.b), bits(&rom.b));
        assert_eq!(bits(back.table.matrix()), bits(rom.table.matrix()));
        for (a, b) in back.c.iter().zip(&rom.c) {
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.loads, rom.loads);
        assert_eq!(back.u0, rom.u0);
        assert_eq!(back.times, rom.times);
        assert_eq!(back.points, rom.points);
        assert_eq!(arch.manifest.basis_len, rom.basis_len());
        assert_eq!(arch.manifest.info.grid_mode, GridMode::Nodes);

        assert_eq!(arch.load_basis().unwrap().vectors, basis.vectors);
        let e = arch.load_eim().unwrap();
        assert_eq!(e.q_funcs(), eim.q_funcs());
        assert_eq!(e.log(), eim.log());

        let a = crate::rom::online_solve(&rom, 7.25).unwrap();
        let b = crate::rom::online_solve(back, 7.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn archive_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        sample_archive(dir.path());
        let path = dir.path().join("manifest.txt");
        let text = fs::read_to_string(&path).unwrap().replace("version=1", "version=99");
        fs::write(&path, text).unwrap();
        assert!(matches!(RomArchive::load(dir.path()), Err(PreimError::Format { .. })));
    }

    #[test]
    fn closure_nonlinearity_is_not_archived() {
        let nl = Nonlinearity::CustomValue(std::sync::Arc::new(|_, v| v));
        assert!(matches!(nonlinearity_entries(&nl), Err(PreimError::UnsupportedConfiguration(_))));
    }

    #[test]
    fn malformed_csv_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1.0,abc\n").unwrap();
        match read_rows(&p) {
            Err(PreimError::Format { path, .. }) => assert_eq!(path, p),
            other => panic!("unexpected {other:?}"),
        }
    }
}
