//! Domain types and dataset ingestion for panels of discretely observed curves.
//!
//! A [`FunctionalPanel`] holds curve values on a shared [`AgeGrid`] indexed by
//! (group, unit, year). Cells can be individually masked out; estimators either
//! accept masks (the smoother) or require a fully valid panel (FANOVA, the
//! factor model). [`SplitPlan`] carves the year axis into contiguous
//! train/validation/test windows.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use ndarray::{Array4, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Minimum number of years a loaded dataset must span.
pub const MIN_DATASET_YEARS: usize = 5;
/// Minimum number of grid points a loaded dataset must have.
pub const MIN_DATASET_GRID: usize = 3;

/// Ordered evaluation grid (years of age) shared by every curve in a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid {
    points: Vec<f64>,
}

impl AgeGrid {
    /// Builds a grid from strictly increasing points.
    ///
    /// Datasets loaded from files additionally require at least
    /// [`MIN_DATASET_GRID`] points; derived grids used by in-process
    /// estimators may be shorter.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("age grid must be non-empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("age grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "age grid points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Integer grid `lo..=hi` with unit spacing.
    pub fn integer_range(lo: u32, hi: u32) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidInput(format!(
                "empty age range {lo}..={hi}"
            )));
        }
        Self::new((lo..=hi).map(f64::from).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point equal to `age`, if any (exact match).
    pub fn position_of(&self, age: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == age)
    }

    /// First index at or beyond `age`.
    pub fn first_at_or_above(&self, age: f64) -> Option<usize> {
        self.points.iter().position(|&p| p >= age)
    }

    /// Trapezoidal quadrature weights for this grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let p = self.points.len();
        let mut w = vec![0.0; p];
        if p == 1 {
            w[0] = 1.0;
            return w;
        }
        for j in 0..p {
            let lo = if j == 0 { self.points[0] } else { self.points[j - 1] };
            let hi = if j + 1 == p { self.points[p - 1] } else { self.points[j + 1] };
            w[j] = 0.5 * (hi - lo);
        }
        w
    }
}

/// Labels for the three categorical axes of a panel: groups (e.g. sexes),
/// units (e.g. prefectures), and consecutive observation years.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelIndex {
    groups: Vec<String>,
    units: Vec<String>,
    years: Vec<i32>,
}

impl PanelIndex {
    /// Builds an index; labels must be unique per axis and years consecutive.
    ///
    /// Loaded datasets additionally require [`MIN_DATASET_YEARS`] years;
    /// derived windows (expanding-window refits, small fixtures) may be
    /// shorter.
    pub fn new(groups: Vec<String>, units: Vec<String>, years: Vec<i32>) -> Result<Self> {
        fn unique(labels: &[String], axis: &str) -> Result<()> {
            let mut seen = std::collections::BTreeSet::new();
            for l in labels {
                if !seen.insert(l) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate {axis} label: {l}"
                    )));
                }
            }
            Ok(())
        }
        if groups.is_empty() || units.is_empty() || years.is_empty() {
            return Err(Error::InvalidInput(
                "panel index axes must be non-empty".into(),
            ));
        }
        unique(&groups, "group")?;
        unique(&units, "unit")?;
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidInput(
                "years must be consecutive integers".into(),
            ));
        }
        Ok(Self { groups, units, years })
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn group_position(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    pub fn year_position(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }
}

/// Whether panel values are raw rates or their natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    RawRate,
    LogRate,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::RawRate => write!(f, "raw-rate"),
            Scale::LogRate => write!(f, "log-rate"),
        }
    }
}

/// A panel of discretely observed curves with shape (groups, units, years,
/// grid points) and a validity mask of the same shape.
///
/// Masked cells carry an unspecified payload and are ignored by every
/// mask-aware consumer. Values are immutable after construction.
#[derive(Debug, Clone)]
pub struct FunctionalPanel {
    index: PanelIndex,
    grid: AgeGrid,
    values: Array4<f64>,
    mask: Array4<bool>,
    scale: Scale,
}

impl FunctionalPanel {
    /// Builds a panel, checking shape agreement and that valid raw-rate
    /// cells are strictly positive and finite.
    pub fn new(
        index: PanelIndex,
        grid: AgeGrid,
        values: Array4<f64>,
        mask: Array4<bool>,
        scale: Scale,
    ) -> Result<Self> {
        let expect = (
            index.n_groups(),
            index.n_units(),
            index.n_years(),
            grid.len(),
        );
        if values.dim() != expect {
            return Err(Error::Dimension(format!(
                "values shape {:?} does not match index/grid shape {:?}",
                values.dim(),
                expect
            )));
        }
        if mask.dim() != expect {
            return Err(Error::Dimension(format!(
                "mask shape {:?} does not match index/grid shape {:?}",
                mask.dim(),
                expect
            )));
        }
        for (v, &ok) in values.iter().zip(mask.iter()) {
            if ok {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(
                        "valid cells must hold finite values".into(),
                    ));
                }
                if scale == Scale::RawRate && *v <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "valid raw-rate cells must be positive, found {v}"
                    )));
                }
            }
        }
        Ok(Self { index, grid, values, mask, scale })
    }

    /// Builds a fully valid panel (mask all true).
    pub fn from_values(
        index: PanelIndex,
        grid: AgeGrid,
        values: Array4<f64>,
        scale: Scale,
    ) -> Result<Self> {
        let mask = Array4::from_elem(values.dim(), true);
        Self::new(index, grid, values, mask, scale)
    }

    pub fn index(&self) -> &PanelIndex {
        &self.index
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn values(&self) -> &Array4<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array4<bool> {
        &self.mask
    }

    pub fn value(&self, g: usize, i: usize, t: usize, j: usize) -> f64 {
        self.values[[g, i, t, j]]
    }

    pub fn is_valid(&self, g: usize, i: usize, t: usize, j: usize) -> bool {
        self.mask[[g, i, t, j]]
    }

    pub fn fully_valid(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// View of one group's (units, years, grid) block.
    pub fn group_values(&self, g: usize) -> ArrayView3<'_, f64> {
        self.values.index_axis(Axis(0), g)
    }

    /// Natural log of every valid cell; masked payloads are left untouched.
    ///
    /// Errors if the panel is already on the log scale.
    pub fn to_log(&self) -> Result<FunctionalPanel> {
        if self.scale == Scale::LogRate {
            return Err(Error::InvalidInput(
                "panel is already on the log scale".into(),
            ));
        }
        let mut values = self.values.clone();
        for (v, &ok) in values.iter_mut().zip(self.mask.iter()) {
            if ok {
                *v = v.ln();
            }
        }
        Ok(FunctionalPanel {
            index: self.index.clone(),
            grid: self.grid.clone(),
            values,
            mask: self.mask.clone(),
            scale: Scale::LogRate,
        })
    }

    /// Copy of the panel restricted to year indices `0..=t_end`.
    pub fn window(&self, t_end: usize) -> Result<FunctionalPanel> {
        if t_end >= self.index.n_years() {
            return Err(Error::Dimension(format!(
                "window end {t_end} out of range for {} years",
                self.index.n_years()
            )));
        }
        let years = self.index.years()[..=t_end].to_vec();
        let index = PanelIndex::new(
            self.index.groups.clone(),
            self.index.units.clone(),
            years,
        )?;
        let values = self
            .values
            .slice(ndarray::s![.., .., ..=t_end, ..])
            .to_owned();
        let mask = self.mask.slice(ndarray::s![.., .., ..=t_end, ..]).to_owned();
        Ok(FunctionalPanel {
            index,
            grid: self.grid.clone(),
            values,
            mask,
            scale: self.scale,
        })
    }
}

/// Contiguous chronological partition of a year range into train,
/// validation, and test windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    train_years: Vec<i32>,
    validation_years: Vec<i32>,
    test_years: Vec<i32>,
}

impl SplitPlan {
    /// Builds a plan from explicit windows; they must be non-empty,
    /// chronological, and jointly consecutive.
    pub fn from_parts(
        train_years: Vec<i32>,
        validation_years: Vec<i32>,
        test_years: Vec<i32>,
    ) -> Result<Self> {
        if train_years.is_empty() || validation_years.is_empty() || test_years.is_empty() {
            return Err(Error::InvalidInput(
                "every split window must be non-empty".into(),
            ));
        }
        let mut all = train_years.clone();
        all.extend_from_slice(&validation_years);
        all.extend_from_slice(&test_years);
        if all.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidInput(
                "split windows must be chronological and consecutive".into(),
            ));
        }
        Ok(Self { train_years, validation_years, test_years })
    }

    pub fn train_years(&self) -> &[i32] {
        &self.train_years
    }

    pub fn validation_years(&self) -> &[i32] {
        &self.validation_years
    }

    pub fn test_years(&self) -> &[i32] {
        &self.test_years
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.train_years.len(),
            self.validation_years.len(),
            self.test_years.len(),
        )
    }
}

/// Splits consecutive `years` into chronological train/validation/test
/// windows with the given proportions.
///
/// Counts are `floor` for train and `ceil` for validation with the test
/// window taking the remainder; when the train quota is fractional one year
/// moves from train to validation (skipped if that would empty the train
/// window), so 49 years at (0.6, 0.2, 0.2) yield (28, 11, 10).
pub fn make_split(years: &[i32], proportions: (f64, f64, f64)) -> Result<SplitPlan> {
    let (p_train, p_val, p_test) = proportions;
    for p in [p_train, p_val, p_test] {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::InvalidInput(
                "split proportions must be positive".into(),
            ));
        }
    }
    if (p_train + p_val + p_test - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(
            "split proportions must sum to 1".into(),
        ));
    }
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidInput(
            "years must be consecutive integers".into(),
        ));
    }
    let t = years.len();
    let quota_train = t as f64 * p_train;
    let mut n_train = quota_train.floor() as usize;
    let mut n_val = (t as f64 * p_val).ceil() as usize;
    if n_train + n_val > t {
        return Err(Error::InvalidInput(format!(
            "no years left for the test window (T = {t})"
        )));
    }
    let n_test = t - n_train - n_val;
    let fractional = quota_train.fract() > 1e-9;
    if fractional && n_train > 1 {
        n_train -= 1;
        n_val += 1;
    }
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidInput(format!(
            "every split window must be non-empty, got ({n_train}, {n_val}, {n_test})"
        )));
    }
    Ok(SplitPlan {
        train_years: years[..n_train].to_vec(),
        validation_years: years[n_train..n_train + n_val].to_vec(),
        test_years: years[n_train + n_val..].to_vec(),
    })
}

/// Column mapping for per-unit CSV sources: the year column, the age column,
/// and one `(column name, group label)` pair per rate column.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub year_col: String,
    pub age_col: String,
    pub group_cols: Vec<(String, String)>,
}

impl CsvSchema {
    /// Columns `Year` and `Age` plus the given rate columns, each labelled
    /// by its own column name.
    pub fn with_groups<S: Into<String> + Clone>(groups: &[S]) -> Self {
        Self {
            year_col: "Year".into(),
            age_col: "Age".into(),
            group_cols: groups
                .iter()
                .map(|g| {
                    let s: String = g.clone().into();
                    (s.clone(), s)
                })
                .collect(),
        }
    }
}

/// Parses an age field: a plain integer, or an open-ended top bin written
/// with a trailing `+` (e.g. `100+`), which maps onto its base age.
fn parse_age(field: &str) -> Option<f64> {
    let s = field.trim();
    let s = s.strip_suffix('+').unwrap_or(s);
    s.parse::<f64>().ok().filter(|a| a.is_finite())
}

struct UnitFile {
    unit: String,
    path: PathBuf,
}

/// Parsed cells keyed by (unit index, group index, year): per-age values.
type CellMap = BTreeMap<(usize, usize, i32), Vec<(usize, f64)>>;

/// Loads a raw-rate panel from one CSV file per unit.
///
/// Each file must have a header row containing the schema's year, age, and
/// rate columns. The unit label is the file name stem. Rows whose age is not
/// on `grid` are ignored, which permits grids narrower than the files. Cells
/// that are missing, non-numeric, non-finite, or not strictly positive are
/// masked out; a (unit, group) series with no parseable value for an entire
/// year is a hard error because the year axis must be rectangular.
///
/// The result is independent of the order in which `files` are listed:
/// units are sorted by label.
pub fn load_panel(files: &[PathBuf], schema: &CsvSchema, grid: &AgeGrid) -> Result<FunctionalPanel> {
    if files.is_empty() {
        return Err(Error::InvalidInput("no input files".into()));
    }
    if grid.len() < MIN_DATASET_GRID {
        return Err(Error::InvalidInput(format!(
            "dataset grids need at least {MIN_DATASET_GRID} points, got {}",
            grid.len()
        )));
    }
    if schema.group_cols.is_empty() {
        return Err(Error::InvalidInput("schema lists no rate columns".into()));
    }

    let mut units: Vec<UnitFile> = files
        .iter()
        .map(|path| {
            let unit = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("cannot derive unit label from {}", path.display()))
                })?
                .to_string();
            Ok(UnitFile { unit, path: path.clone() })
        })
        .collect::<Result<_>>()?;
    units.sort_by(|a, b| a.unit.cmp(&b.unit));
    for w in units.windows(2) {
        if w[0].unit == w[1].unit {
            return Err(Error::InvalidInput(format!(
                "duplicate unit label: {}",
                w[0].unit
            )));
        }
    }

    let mut cells: CellMap = BTreeMap::new();
    let mut all_years = std::collections::BTreeSet::new();

    for (u_idx, uf) in units.iter().enumerate() {
        read_unit_file(uf, u_idx, schema, grid, &mut cells, &mut all_years)?;
    }

    let years: Vec<i32> = all_years.into_iter().collect();
    if years.len() < MIN_DATASET_YEARS {
        return Err(Error::InvalidInput(format!(
            "dataset spans {} years; at least {MIN_DATASET_YEARS} required",
            years.len()
        )));
    }
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidInput(
            "observed years are not consecutive".into(),
        ));
    }

    let group_labels: Vec<String> = schema.group_cols.iter().map(|(_, l)| l.clone()).collect();
    let unit_labels: Vec<String> = units.iter().map(|u| u.unit.clone()).collect();
    let index = PanelIndex::new(group_labels, unit_labels, years.clone())?;

    let (n_g, n_u, n_t, p) = (index.n_groups(), index.n_units(), index.n_years(), grid.len());
    let mut values = Array4::from_elem((n_g, n_u, n_t, p), f64::NAN);
    let mut mask = Array4::from_elem((n_g, n_u, n_t, p), false);

    for (u_idx, uf) in units.iter().enumerate() {
        for (g_idx, _) in schema.group_cols.iter().enumerate() {
            for (t_idx, &year) in years.iter().enumerate() {
                let Some(rows) = cells.get(&(u_idx, g_idx, year)) else {
                    return Err(Error::InvalidInput(formatted_missing_year(
                        &uf.unit,
                        &schema.group_cols[g_idx].1,
                        year,
                    )));
                };
                for &(j, rate) in rows {
                    values[[g_idx, u_idx, t_idx, j]] = rate;
                    mask[[g_idx, u_idx, t_idx, j]] = rate.is_finite() && rate > 0.0;
                }
            }
        }
    }

    FunctionalPanel::new(index, grid.clone(), sanitize_masked(values, &mask), mask, Scale::RawRate)
}

/// Replaces masked payloads with NaN so they cannot leak into arithmetic.
fn sanitize_masked(mut values: Array4<f64>, mask: &Array4<bool>) -> Array4<f64> {
    for (v, &ok) in values.iter_mut().zip(mask.iter()) {
        if !ok {
            *v = f64::NAN;
        }
    }
    values
}

fn formatted_missing_year(unit: &str, group: &str, year: i32) -> String {
    format!("unit {unit}, group {group}: no data for year {year}; the year axis must be rectangular")
}

fn read_unit_file(
    uf: &UnitFile,
    u_idx: usize,
    schema: &CsvSchema,
    grid: &AgeGrid,
    cells: &mut CellMap,
    all_years: &mut std::collections::BTreeSet<i32>,
) -> Result<()> {
    let file_name = uf.path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(&uf.path)?;

    let headers = reader.headers()?.clone();
    let col_of = |name: &str| headers.iter().position(|h| h == name);
    let year_ix = col_of(&schema.year_col).ok_or_else(|| Error::Parse {
        file: file_name.clone(),
        line: 1,
        msg: format!("missing column {}", schema.year_col),
    })?;
    let age_ix = col_of(&schema.age_col).ok_or_else(|| Error::Parse {
        file: file_name.clone(),
        line: 1,
        msg: format!("missing column {}", schema.age_col),
    })?;
    let rate_ixs: Vec<usize> = schema
        .group_cols
        .iter()
        .map(|(col, _)| {
            col_of(col).ok_or_else(|| Error::Parse {
                file: file_name.clone(),
                line: 1,
                msg: format!("missing column {col}"),
            })
        })
        .collect::<Result<_>>()?;

    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(0);
        let parse_err = |msg: String| Error::Parse {
            file: file_name.clone(),
            line,
            msg,
        };

        let year: i32 = record
            .get(year_ix)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(format!("malformed year field {:?}", record.get(year_ix))))?;
        let age = parse_age(record.get(age_ix).unwrap_or("")).ok_or_else(|| {
            parse_err(format!("malformed age field {:?}", record.get(age_ix)))
        })?;
        all_years.insert(year);

        let Some(j) = grid.position_of(age) else {
            continue; // age outside the analysis grid
        };

        for (g_idx, &rate_ix) in rate_ixs.iter().enumerate() {
            let field = record.get(rate_ix).unwrap_or("").trim();
            if field.is_empty() || field == "." || field.eq_ignore_ascii_case("na") {
                continue; // missing cell; stays masked
            }
            let rate = field
                .parse::<f64>()
                .map_err(|_| parse_err(format!("malformed rate field {field:?}")))?;
            cells
                .entry((u_idx, g_idx, year))
                .or_default()
                .push((j, rate));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;
    use std::path::Path;

    fn grid4() -> AgeGrid {
        AgeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    fn schema_fm() -> CsvSchema {
        CsvSchema::with_groups(&["F", "M"])
    }

    #[test]
    fn grid_rejects_non_increasing() {
        assert!(AgeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(AgeGrid::new(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn index_rejects_gap_years() {
        let r = PanelIndex::new(
            vec!["F".into()],
            vec!["a".into()],
            vec![2000, 2002],
        );
        assert!(r.is_err());
    }

    #[test]
    fn load_rectangular_panel_all_valid() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("Year,Age,F,M\n");
        for year in 2000..2005 {
            for age in 0..4 {
                body.push_str(&format!("{year},{age},0.0{},0.0{}\n", age + 1, age + 2));
            }
        }
        let f1 = write_file(dir.path(), "unitA.csv", &body);
        let f2 = write_file(dir.path(), "unitB.csv", &body);
        let panel = load_panel(&[f1, f2], &schema_fm(), &grid4()).unwrap();
        assert_eq!(panel.values().dim(), (2, 2, 5, 4));
        assert!(panel.fully_valid());
        assert_eq!(panel.index().units(), ["unitA", "unitB"]);
    }

    #[test]
    fn zero_rate_cell_is_masked_others_valid() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("Year,Age,F,M\n");
        for year in 2000..2005 {
            for age in 0..4 {
                if year == 2001 && age == 2 {
                    body.push_str(&format!("{year},{age},0.0,0.02\n"));
                } else {
                    body.push_str(&format!("{year},{age},0.01,0.02\n"));
                }
            }
        }
        let f1 = write_file(dir.path(), "a.csv", &body);
        let panel = load_panel(&[f1], &schema_fm(), &grid4()).unwrap();
        let masked: usize = panel.mask().iter().filter(|&&m| !m).count();
        assert_eq!(masked, 1);
        assert!(!panel.is_valid(0, 0, 1, 2));
        assert!(panel.is_valid(1, 0, 1, 2));
    }

    #[test]
    fn open_top_age_bin_maps_to_last_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let grid = AgeGrid::integer_range(0, 100).unwrap();
        let mut body = String::from("Year,Age,F\n");
        for year in 2000..2005 {
            for age in 0..100 {
                body.push_str(&format!("{year},{age},0.01\n"));
            }
            body.push_str(&format!("{year},100+,0.5\n"));
        }
        let f1 = write_file(dir.path(), "a.csv", &body);
        let schema = CsvSchema::with_groups(&["F"]);
        let panel = load_panel(&[f1], &schema, &grid).unwrap();
        assert!(panel.fully_valid());
        for t in 0..5 {
            assert_abs_diff_eq!(panel.value(0, 0, t, 100), 0.5);
            assert_abs_diff_eq!(panel.value(0, 0, t, 99), 0.01);
        }
    }

    #[test]
    fn malformed_row_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("Year,Age,F,M\n");
        for year in 2000..2005 {
            for age in 0..4 {
                body.push_str(&format!("{year},{age},0.01,0.02\n"));
            }
        }
        body.push_str("2004,oops,0.01,0.02\n");
        let f1 = write_file(dir.path(), "bad.csv", &body);
        let err = load_panel(&[f1], &schema_fm(), &grid4()).unwrap_err();
        match err {
            Error::Parse { file, line, .. } => {
                assert!(file.contains("bad.csv"));
                assert_eq!(line, 22);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_whole_year_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut full = String::from("Year,Age,F,M\n");
        let mut gap = String::from("Year,Age,F,M\n");
        for year in 2000..2005 {
            for age in 0..4 {
                full.push_str(&format!("{year},{age},0.01,0.02\n"));
                if year != 2002 {
                    gap.push_str(&format!("{year},{age},0.01,0.02\n"));
                }
            }
        }
        let f1 = write_file(dir.path(), "full.csv", &full);
        let f2 = write_file(dir.path(), "gap.csv", &gap);
        let err = load_panel(&[f1, f2], &schema_fm(), &grid4()).unwrap_err();
        assert!(err.to_string().contains("2002"));
    }

    #[test]
    fn load_is_order_independent() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = String::from("Year,Age,F,M\n");
        let mut b = String::from("Year,Age,F,M\n");
        for year in 2000..2006 {
            for age in 0..4 {
                a.push_str(&format!("{year},{age},0.0{},0.03\n", age + 1));
                b.push_str(&format!("{year},{age},0.0{},0.04\n", age + 2));
            }
        }
        let f1 = write_file(dir.path(), "a.csv", &a);
        let f2 = write_file(dir.path(), "b.csv", &b);
        let p1 = load_panel(&[f1.clone(), f2.clone()], &schema_fm(), &grid4()).unwrap();
        let p2 = load_panel(&[f2, f1], &schema_fm(), &grid4()).unwrap();
        assert_eq!(p1.index().units(), p2.index().units());
        assert_eq!(p1.values(), p2.values());
        assert_eq!(p1.mask(), p2.mask());
    }

    #[test]
    fn to_log_known_values_and_mask_semantics() {
        let index = PanelIndex::new(
            vec!["F".into()],
            vec!["a".into()],
            vec![2000],
        )
        .unwrap();
        let grid = AgeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let mut values = Array4::zeros((1, 1, 1, 3));
        values[[0, 0, 0, 0]] = 1.0;
        values[[0, 0, 0, 1]] = std::f64::consts::E;
        values[[0, 0, 0, 2]] = 0.5;
        let mut mask = Array4::from_elem((1, 1, 1, 3), true);
        mask[[0, 0, 0, 2]] = false;
        let panel = FunctionalPanel::new(index, grid, values, mask, Scale::RawRate).unwrap();
        let logged = panel.to_log().unwrap();
        assert_abs_diff_eq!(logged.value(0, 0, 0, 0), 0.0);
        assert_abs_diff_eq!(logged.value(0, 0, 0, 1), 1.0);
        assert!(!logged.is_valid(0, 0, 0, 2));
        assert_eq!(logged.scale(), Scale::LogRate);
        // masked payload untouched and non-signaling
        assert_abs_diff_eq!(logged.value(0, 0, 0, 2), 0.5);
        assert!(logged.to_log().is_err());
    }

    #[test]
    fn log_round_trip_restores_raw_cells() {
        let index = PanelIndex::new(
            vec!["F".into(), "M".into()],
            vec!["a".into(), "b".into()],
            (2000..2010).collect(),
        )
        .unwrap();
        let grid = AgeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let values = Array4::from_shape_fn((2, 2, 10, 4), |(g, i, t, j)| {
            0.01 + 0.1 * (g + 1) as f64 * (i + 1) as f64 + 0.001 * (t * 4 + j) as f64
        });
        let panel =
            FunctionalPanel::from_values(index, grid, values.clone(), Scale::RawRate).unwrap();
        let logged = panel.to_log().unwrap();
        for (v, orig) in logged.values().iter().zip(values.iter()) {
            let back = v.exp();
            assert!((back - orig).abs() <= 1e-12 * orig.abs());
        }
    }

    #[test]
    fn split_matches_pinned_examples() {
        let years49: Vec<i32> = (1975..=2023).collect();
        let plan = make_split(&years49, (0.6, 0.2, 0.2)).unwrap();
        assert_eq!(plan.counts(), (28, 11, 10));
        assert_eq!(*plan.train_years().last().unwrap(), 2002);
        assert_eq!(*plan.validation_years().first().unwrap(), 2003);
        assert_eq!(*plan.validation_years().last().unwrap(), 2013);
        assert_eq!(*plan.test_years().first().unwrap(), 2014);

        let years10: Vec<i32> = (2000..2010).collect();
        assert_eq!(make_split(&years10, (0.6, 0.2, 0.2)).unwrap().counts(), (6, 2, 2));

        let years3: Vec<i32> = (2000..2003).collect();
        assert_eq!(make_split(&years3, (0.6, 0.2, 0.2)).unwrap().counts(), (1, 1, 1));
    }

    #[test]
    fn split_rejects_empty_partitions() {
        let years: Vec<i32> = (2000..2002).collect();
        assert!(make_split(&years, (0.6, 0.2, 0.2)).is_err());
        let years1: Vec<i32> = vec![2000];
        assert!(make_split(&years1, (0.6, 0.2, 0.2)).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_chronological() {
        for t in 3..60 {
            let years: Vec<i32> = (0..t).collect();
            let plan = make_split(&years, (0.6, 0.2, 0.2)).unwrap();
            let mut all = plan.train_years().to_vec();
            all.extend_from_slice(plan.validation_years());
            all.extend_from_slice(plan.test_years());
            assert_eq!(all, years, "T = {t}");
        }
    }
}
