//! Plain-text artifacts: field dumps, flow paths, Kähler data, reductions and
//! lifts. Every file is written atomically (write to a sibling, then rename).
//!
//! Field dump header: `# kredux-field v1, kind=…, N=…, Nl=…, lmin=…, lmax=…`
//! followed by `Lu`, `margin` and `pole_margin` so the grid can be rebuilt.
//! Fields on `P` use rows `i,j,k,x1,x2,l,value` (radial `i,k,v,l,value`);
//! fields on `M` drop the fiber columns: `i,j,x1,x2,value` (radial `i,v,value`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{KreduxError, Result};
use crate::field::{Form11M, ScalarFieldM, ScalarFieldP};
use crate::flow::{FlowKind, FlowPath};
use crate::grid::{GridKind, TestbedGrid};
use crate::lift::LiftResult;
use crate::reduction::ReductionResult;
use crate::structure::{assemble, KahlerData};

const FIELD_MAGIC: &str = "# kredux-field v1";
const PATH_MAGIC: &str = "# kredux-path v1";

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| KreduxError::Io(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| KreduxError::Io(e.to_string()))?;
    write_atomic(path, format!("{text}\n").as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| KreduxError::Parse(format!("{}: {e}", path.display())))
}

fn grid_header(magic: &str, grid: &TestbedGrid) -> String {
    format!(
        "{magic}, kind={}, N={}, Nl={}, lmin={}, lmax={}, Lu={}, margin={}, pole_margin={}",
        grid.kind.as_str(),
        grid.n,
        grid.nl,
        num(grid.lmin),
        num(grid.lmax),
        num(grid.lu),
        grid.margin,
        grid.pole_margin
    )
}

/// Parse `# magic, key=value, …` into its key-value pairs.
fn parse_header(line: &str, magic: &str) -> Result<BTreeMap<String, String>> {
    let rest = line
        .strip_prefix(magic)
        .ok_or_else(|| KreduxError::Parse(format!("expected header `{magic}`, got `{line}`")))?;
    let mut map = BTreeMap::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| KreduxError::Parse(format!("bad header entry `{part}`")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn header_value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map.get(key).ok_or_else(|| KreduxError::Parse(format!("header lacks `{key}`")))?;
    raw.parse().map_err(|_| KreduxError::Parse(format!("bad header value {key}={raw}")))
}

fn grid_from_header(map: &BTreeMap<String, String>) -> Result<TestbedGrid> {
    let kind: GridKind = header_value(map, "kind")?;
    let grid = TestbedGrid {
        kind,
        n: header_value(map, "N")?,
        nl: header_value(map, "Nl")?,
        lmin: header_value(map, "lmin")?,
        lmax: header_value(map, "lmax")?,
        lu: map.get("Lu").map(|v| v.parse()).transpose().map_err(|_| KreduxError::Parse("bad Lu".into()))?.unwrap_or(0.0),
        margin: map.get("margin").map(|v| v.parse()).transpose().map_err(|_| KreduxError::Parse("bad margin".into()))?.unwrap_or(2),
        pole_margin: map
            .get("pole_margin")
            .map(|v| v.parse())
            .transpose()
            .map_err(|_| KreduxError::Parse("bad pole_margin".into()))?
            .unwrap_or(2),
    };
    grid.validated()
}

/// Spatial index columns of node `s` (`i,j` on the torus, `i` on the radial chart).
fn spatial_columns(grid: &TestbedGrid, s: usize) -> String {
    match grid.kind {
        GridKind::Torus => format!("{},{}", s / grid.n, s % grid.n),
        GridKind::Radial => format!("{s}"),
    }
}

fn coordinate_columns(grid: &TestbedGrid, s: usize) -> String {
    let (y1, y2) = grid.coords(s);
    match grid.kind {
        GridKind::Torus => format!("{},{}", num(y1), num(y2)),
        GridKind::Radial => num(y1),
    }
}

fn spatial_index(grid: &TestbedGrid, cols: &[&str]) -> Result<(usize, usize)> {
    let parse = |c: &str| c.trim().parse::<usize>().map_err(|_| KreduxError::Parse(format!("bad index `{c}`")));
    let (s, used) = match grid.kind {
        GridKind::Torus => {
            let (i, j) = (parse(cols[0])?, parse(cols[1])?);
            if i >= grid.n || j >= grid.n {
                return Err(KreduxError::Parse(format!("node ({i},{j}) outside the grid")));
            }
            (i * grid.n + j, 2)
        }
        GridKind::Radial => (parse(cols[0])?, 1),
    };
    if s >= grid.spatial_len() {
        return Err(KreduxError::Parse(format!("node {s} outside the grid")));
    }
    Ok((s, used))
}

fn parse_value(c: &str) -> Result<f64> {
    c.trim().parse::<f64>().map_err(|_| KreduxError::Parse(format!("bad value `{c}`")))
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().skip(1).filter(|l| !l.trim().is_empty())
}

pub fn field_m_to_csv(f: &ScalarFieldM) -> String {
    let g = f.grid;
    let mut out = grid_header(FIELD_MAGIC, &g);
    out.push('\n');
    for s in 0..g.spatial_len() {
        let _ = writeln!(out, "{},{},{}", spatial_columns(&g, s), coordinate_columns(&g, s), num(f.values[s]));
    }
    out
}

pub fn field_m_from_csv(text: &str) -> Result<ScalarFieldM> {
    let grid = grid_from_header(&parse_header(text.lines().next().unwrap_or(""), FIELD_MAGIC)?)?;
    let mut values = Array1::from_elem(grid.spatial_len(), f64::NAN);
    for line in data_lines(text) {
        let cols: Vec<&str> = line.split(',').collect();
        let width = if grid.kind == GridKind::Torus { 5 } else { 3 };
        if cols.len() != width {
            return Err(KreduxError::Parse(format!("expected {width} columns, got `{line}`")));
        }
        let (s, _) = spatial_index(&grid, &cols)?;
        values[s] = parse_value(cols[width - 1])?;
    }
    ScalarFieldM::new(grid, values).map_err(|_| KreduxError::Parse("field dump is missing nodes".into()))
}

pub fn field_p_to_csv(f: &ScalarFieldP) -> String {
    let g = f.grid;
    let mut out = grid_header(FIELD_MAGIC, &g);
    out.push('\n');
    for s in 0..g.spatial_len() {
        let (idx, coords) = (spatial_columns(&g, s), coordinate_columns(&g, s));
        for k in 0..g.nl {
            let _ = writeln!(out, "{idx},{k},{coords},{},{}", num(g.ell(k)), num(f.values[[s, k]]));
        }
    }
    out
}

pub fn field_p_from_csv(text: &str) -> Result<ScalarFieldP> {
    let grid = grid_from_header(&parse_header(text.lines().next().unwrap_or(""), FIELD_MAGIC)?)?;
    let mut values = Array2::from_elem((grid.spatial_len(), grid.nl), f64::NAN);
    let width = if grid.kind == GridKind::Torus { 7 } else { 5 };
    for line in data_lines(text) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != width {
            return Err(KreduxError::Parse(format!("expected {width} columns, got `{line}`")));
        }
        let (s, used) = spatial_index(&grid, &cols)?;
        let k: usize = cols[used].trim().parse().map_err(|_| KreduxError::Parse(format!("bad fiber index in `{line}`")))?;
        if k >= grid.nl {
            return Err(KreduxError::Parse(format!("fiber index {k} outside the grid")));
        }
        values[[s, k]] = parse_value(cols[width - 1])?;
    }
    ScalarFieldP::new(grid, values).map_err(|_| KreduxError::Parse("field dump is missing nodes".into()))
}

pub fn write_field_m(path: &Path, f: &ScalarFieldM) -> Result<()> {
    write_atomic(path, field_m_to_csv(f).as_bytes())
}

pub fn read_field_m(path: &Path) -> Result<ScalarFieldM> {
    field_m_from_csv(&fs::read_to_string(path)?)
}

pub fn write_field_p(path: &Path, f: &ScalarFieldP) -> Result<()> {
    write_atomic(path, field_p_to_csv(f).as_bytes())
}

pub fn read_field_p(path: &Path) -> Result<ScalarFieldP> {
    field_p_from_csv(&fs::read_to_string(path)?)
}

/// A (1,1)-form on `M` is dumped as its component field `H`.
pub fn write_form_m(path: &Path, f: &Form11M) -> Result<()> {
    write_field_m(path, &f.as_field())
}

pub fn read_form_m(path: &Path) -> Result<Form11M> {
    let f = read_field_m(path)?;
    Form11M::new(f.grid, f.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerMeta {
    pub c: f64,
    pub grid: TestbedGrid,
    pub positivity_min_eig: f64,
}

/// `sigma.csv`, `phi.csv` and `meta.json` in `dir`.
pub fn write_kahler(dir: &Path, k: &KahlerData) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_form_m(&dir.join("sigma.csv"), &k.sigma)?;
    write_field_p(&dir.join("phi.csv"), &k.phi)?;
    write_json(&dir.join("meta.json"), &KahlerMeta { c: k.c, grid: k.grid(), positivity_min_eig: k.positivity_min_eig })
}

/// Re-assemble a structure from its directory. The grid recorded in
/// `meta.json` (margins included) takes precedence over the dump headers.
pub fn read_kahler(dir: &Path) -> Result<KahlerData> {
    let meta: KahlerMeta = read_json(&dir.join("meta.json"))?;
    let sigma = read_form_m(&dir.join("sigma.csv"))?;
    let phi = read_field_p(&dir.join("phi.csv"))?;
    if phi.grid != meta.grid || !sigma.grid.same_spatial(&meta.grid) {
        return Err(KreduxError::Parse("field dumps disagree with meta.json grid".into()));
    }
    assemble(&sigma, &phi, meta.c)
}

/// `ltau.csv`, `psitau.csv`, `omegatau.csv` and `meta.json` in `dir`.
pub fn write_reduction(dir: &Path, r: &ReductionResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field_m(&dir.join("ltau.csv"), &r.ltau)?;
    write_field_m(&dir.join("psitau.csv"), &r.psi_tau)?;
    write_form_m(&dir.join("omegatau.csv"), &r.omega_tau)?;
    write_json(&dir.join("meta.json"), &r.meta())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub kind: FlowKind,
    pub grid: TestbedGrid,
    pub samples: usize,
    pub normalization: String,
    pub steps: Vec<f64>,
}

pub fn path_to_csv(p: &FlowPath) -> String {
    let g = p.grid();
    let mut out = format!("{PATH_MAGIC}, kind={}, sigma=sigma.csv, N={}\n", p.kind.as_str(), g.n);
    for (k, (t, psi)) in p.times.iter().zip(&p.psi).enumerate() {
        for s in 0..g.spatial_len() {
            let (i, j) = match g.kind {
                GridKind::Torus => (s / g.n, s % g.n),
                GridKind::Radial => (s, 0),
            };
            let _ = writeln!(out, "{k},{},{i},{j},{}", num(*t), num(psi.values[s]));
        }
    }
    out
}

/// `path.csv`, `sigma.csv` and `path_meta.json` in `dir`.
pub fn write_path(dir: &Path, p: &FlowPath) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_form_m(&dir.join("sigma.csv"), &p.sigma)?;
    write_atomic(&dir.join("path.csv"), path_to_csv(p).as_bytes())?;
    let meta = PathMeta {
        kind: p.kind,
        grid: p.grid(),
        samples: p.len(),
        normalization: p.normalization.clone(),
        steps: p.steps.clone(),
    };
    write_json(&dir.join("path_meta.json"), &meta)
}

pub fn read_path(dir: &Path) -> Result<FlowPath> {
    let meta: PathMeta = read_json(&dir.join("path_meta.json"))?;
    let text = fs::read_to_string(dir.join("path.csv"))?;
    let header = parse_header(text.lines().next().unwrap_or(""), PATH_MAGIC)?;
    let kind: FlowKind = header_value(&header, "kind")?;
    let n: usize = header_value(&header, "N")?;
    if kind != meta.kind || n != meta.grid.n {
        return Err(KreduxError::Parse("path.csv header disagrees with path_meta.json".into()));
    }
    let sigma_name: String = header_value(&header, "sigma")?;
    let sigma = read_form_m(&dir.join(sigma_name))?;
    let g = meta.grid;
    if !sigma.grid.same_spatial(&g) {
        return Err(KreduxError::Parse("sigma.csv grid disagrees with path_meta.json".into()));
    }
    let sigma = Form11M::new(g, sigma.h)?;
    let mut times = vec![f64::NAN; meta.samples];
    let mut values = vec![Array1::from_elem(g.spatial_len(), f64::NAN); meta.samples];
    for line in data_lines(&text) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(KreduxError::Parse(format!("expected 5 columns, got `{line}`")));
        }
        let idx = |c: &str| c.trim().parse::<usize>().map_err(|_| KreduxError::Parse(format!("bad index in `{line}`")));
        let (k, i, j) = (idx(cols[0])?, idx(cols[2])?, idx(cols[3])?);
        let s = match g.kind {
            GridKind::Torus if i < g.n && j < g.n => i * g.n + j,
            GridKind::Radial if i < g.n && j == 0 => i,
            _ => return Err(KreduxError::Parse(format!("node ({i},{j}) outside the grid"))),
        };
        if k >= meta.samples {
            return Err(KreduxError::Parse(format!("sample {k} beyond the recorded count")));
        }
        times[k] = parse_value(cols[1])?;
        values[k][s] = parse_value(cols[4])?;
    }
    let psi = values
        .into_iter()
        .map(|v| ScalarFieldM::new(g, v).map_err(|_| KreduxError::Parse("path.csv is missing nodes".into())))
        .collect::<Result<Vec<_>>>()?;
    let mut path = FlowPath::new(meta.kind, sigma, times, psi, &meta.normalization)?;
    path.steps = meta.steps;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub t: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftMeta {
    pub a_t: Vec<ShiftEntry>,
    pub window: (f64, f64),
    pub tau_range: (f64, f64),
    pub max_inversion_residual: f64,
    pub max_concavity: f64,
    pub criterion_mismatches: usize,
}

impl LiftMeta {
    pub fn new(lift: &LiftResult, shift: &[f64]) -> Self {
        LiftMeta {
            a_t: lift.times.iter().zip(shift).map(|(&t, &a)| ShiftEntry { t, a }).collect(),
            window: lift.window,
            tau_range: lift.tau_range,
            max_inversion_residual: lift.max_inversion_residual,
            max_concavity: lift.max_concavity,
            criterion_mismatches: lift.criterion_mismatches,
        }
    }
}

/// The lifted structure's directory plus `lift_meta.json`; `shift` is the
/// concavity profile `a_t` sampled at the path times.
pub fn write_lift(dir: &Path, lift: &LiftResult, shift: &[f64]) -> Result<()> {
    if shift.len() != lift.times.len() {
        return Err(KreduxError::InvalidArgument("one shift value per path time is required".into()));
    }
    write_kahler(dir, &lift.data)?;
    write_json(&dir.join("lift_meta.json"), &LiftMeta::new(lift, shift))
}
