//! Value-function heatmaps over the grid.

use std::io::{Read, Write};
use std::path::Path;

use crate::env::{Environment, GridState, GridWorld, TaskVariable};
use crate::error::{Error, Result};
use crate::models::ValueFunction;

/// `V(s, c)` at every cell, row-major with `y` as the row; `None` marks a
/// puddle.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

impl HeatmapGrid {
    pub fn new(width: usize, height: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                context: "heatmap cells",
                expected: width * height,
                got: values.len(),
            });
        }
        Ok(Self { width, height, values })
    }

    pub fn from_value(value: &ValueFunction, world: &GridWorld, task: &TaskVariable) -> Result<Self> {
        let layout = value.layout;
        if layout.feature_dim != world.feature_dim() || layout.task_dim > 0 && layout.task_dim != task.dim() {
            return Err(Error::Config(format!(
                "value network expects {} features and {} task slots; world gives {} and {}",
                layout.feature_dim,
                layout.task_dim,
                world.feature_dim(),
                task.dim()
            )));
        }
        Self::from_fn(world, |s| value.value(&world.features(&s.to_vec()), task))
    }

    /// Evaluates `f` at every free cell of `world`.
    pub fn from_fn<F: FnMut(GridState) -> Result<f64>>(world: &GridWorld, mut f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(world.width() * world.height());
        for y in 0..world.height() as i64 {
            for x in 0..world.width() as i64 {
                let s = GridState::new(x, y);
                values.push(if world.is_puddle(s) { None } else { Some(f(s)?) });
            }
        }
        Self::new(world.width(), world.height(), values)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[y * self.width + x]
    }

    /// Cell with the largest value; the first in row-major order wins ties.
    pub fn argmax(&self) -> Result<GridState> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        let (i, _) = best.ok_or(Error::Empty("heatmap cells"))?;
        Ok(GridState::new((i % self.width) as i64, (i / self.width) as i64))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(|| "NA".to_string(), |v| v.to_string()))
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut width = None;
        let mut values = Vec::new();
        let mut height = 0;
        for (y, line) in text.lines().map(str::trim_end).filter(|l| !l.is_empty()).enumerate() {
            let row = line
                .split(',')
                .map(|t| match t.trim() {
                    "NA" => Ok(None),
                    t => t.parse::<f64>().map(Some).map_err(|_| Error::Parse(format!("bad heatmap cell '{t}' in row {y}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse(format!("heatmap row {y} has {} cells, expected {w}", row.len())));
                }
                _ => {}
            }
            values.extend(row);
            height += 1;
        }
        let width = width.ok_or(Error::Empty("heatmap rows"))?;
        Self::new(width, height, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Evaluates `value` on every cell and writes the CSV to `path`.
pub fn export_value_heatmap(value: &ValueFunction, world: &GridWorld, task: &TaskVariable, path: &Path) -> Result<HeatmapGrid> {
    let grid = HeatmapGrid::from_value(value, world, task)?;
    grid.save(path)?;
    Ok(grid)
}
